//! Hill-climbing over reaction probabilities.
//!
//! Starting from the do-nothing prior, the tuner perturbs the vector of one
//! disruption type at a time, keeps a candidate if its mean weekly
//! utilisation beats the best so far, and otherwise reverts and moves on to
//! the next disruption type. Every evaluation uses the same replication
//! seeds, so candidates are compared on common random numbers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::reactive::{DisruptionKind, ReactionId, ReactionPolicy, UpdateStrategy};
use crate::replicate::{run_replications, ReplicationError, Scenario};
use crate::simulator::SimConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TunerConfig {
    pub n_runs: u64,
    pub max_iterations: usize,
    pub perturbation_scale: f64,
    /// Stop after this many consecutive iterations without improvement.
    pub patience: usize,
    pub strategy: UpdateStrategy,
    pub seed: u64,
}

impl Default for TunerConfig {
    fn default() -> Self {
        Self {
            n_runs: 10,
            max_iterations: 100,
            perturbation_scale: 0.2,
            patience: 20,
            strategy: UpdateStrategy::UP1,
            seed: 0,
        }
    }
}

impl TunerConfig {
    pub fn validate(&self) -> Result<(), TunerError> {
        if self.n_runs == 0 {
            return Err(TunerError::Config("n_runs must be at least 1".into()));
        }
        if self.max_iterations == 0 {
            return Err(TunerError::Config("max_iterations must be at least 1".into()));
        }
        if !(self.perturbation_scale > 0.0 && self.perturbation_scale <= 1.0) {
            return Err(TunerError::Config(format!(
                "perturbation_scale must lie in (0, 1], got {}",
                self.perturbation_scale
            )));
        }
        if self.patience == 0 {
            return Err(TunerError::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TunerError {
    #[error("invalid tuner config: {0}")]
    Config(String),
    #[error(transparent)]
    Replication(#[from] ReplicationError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuningStep {
    pub iteration: usize,
    /// Disruption type whose vector differs from the incumbent.
    pub disruption: DisruptionKind,
    /// The candidate's vector for that disruption type, in `ReactionId::ALL` order.
    pub candidate: [f64; 5],
    pub mean_utilisation: f64,
    pub accepted: bool,
    pub best_utilisation: f64,
}

/// One CSV row of a tuning trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub disruption: String,
    pub mean_utilisation: f64,
    pub accepted: bool,
    pub best_utilisation: f64,
    pub p_r0: f64,
    pub p_r1: f64,
    pub p_r1a: f64,
    pub p_r1b: f64,
    pub p_r2: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TuningTrace {
    pub strategy: Option<UpdateStrategy>,
    pub steps: Vec<TuningStep>,
    /// True when the run stopped because the patience window elapsed.
    pub converged: bool,
}

impl TuningTrace {
    pub fn best(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.best_utilisation)
    }

    /// Iteration of the last accepted candidate.
    pub fn last_improvement(&self) -> Option<usize> {
        self.steps.iter().rev().find(|s| s.accepted).map(|s| s.iteration)
    }

    pub fn rows(&self) -> Vec<TraceRow> {
        self.steps
            .iter()
            .map(|s| TraceRow {
                iteration: s.iteration,
                disruption: s.disruption.to_string(),
                mean_utilisation: s.mean_utilisation,
                accepted: s.accepted,
                best_utilisation: s.best_utilisation,
                p_r0: s.candidate[0],
                p_r1: s.candidate[1],
                p_r1a: s.candidate[2],
                p_r1b: s.candidate[3],
                p_r2: s.candidate[4],
            })
            .collect()
    }
}

/// Jitters the legal entries of one vector by uniform noise in
/// `[-scale, scale]`, clamps at zero and renormalises. Other vectors are
/// untouched.
pub fn perturb<R: Rng + ?Sized>(
    policy: &ReactionPolicy,
    strategy: UpdateStrategy,
    kind: DisruptionKind,
    scale: f64,
    rng: &mut R,
) -> ReactionPolicy {
    let mut out = policy.clone();
    let current = policy
        .get(strategy, kind)
        .copied()
        .unwrap_or_else(|| prior_array(kind));
    let mut weights: Vec<(ReactionId, f64)> = kind
        .legal_reactions()
        .iter()
        .map(|&r| (r, (current[r.slot()] + rng.random_range(-scale..=scale)).max(0.0)))
        .collect();
    if weights.iter().all(|&(_, w)| w <= 0.0) {
        for w in &mut weights {
            w.1 = 1.0;
        }
    }
    out.set(strategy, kind, &weights).expect("legal non-negative weights");
    out
}

fn prior_array(kind: DisruptionKind) -> [f64; 5] {
    let mut v = [0.0; 5];
    for (r, w) in ReactionPolicy::prior_vector(kind) {
        v[r.slot()] = w;
    }
    v
}

/// Tunes the policy of `config.strategy`. `evaluate` maps a candidate to its
/// mean weekly utilisation.
pub fn tune_with<F>(config: &TunerConfig, mut evaluate: F) -> Result<(ReactionPolicy, TuningTrace), TunerError>
where
    F: FnMut(&ReactionPolicy) -> Result<f64, TunerError>,
{
    config.validate()?;
    let strategy = config.strategy;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(u64::MAX);

    let mut current = ReactionPolicy::do_nothing_prior(&[strategy]);
    let mut best_policy = current.clone();
    let mut best = 0.0;
    let mut kind = DisruptionKind::D1;
    let mut since_improvement = 0;
    let mut trace = TuningTrace { strategy: Some(strategy), ..TuningTrace::default() };

    for iteration in 0..config.max_iterations {
        let candidate_kind = kind;
        let candidate = *current.get(strategy, kind).expect("every cell is set");
        let score = evaluate(&current)?;
        let accepted = score > best;
        if accepted {
            best = score;
            best_policy = current.clone();
            since_improvement = 0;
        } else {
            current = best_policy.clone();
            kind = kind.next();
            since_improvement += 1;
        }
        trace.steps.push(TuningStep {
            iteration,
            disruption: candidate_kind,
            candidate,
            mean_utilisation: score,
            accepted,
            best_utilisation: best,
        });
        if since_improvement >= config.patience {
            trace.converged = true;
            break;
        }
        current = perturb(&current, strategy, kind, config.perturbation_scale, &mut rng);
    }
    Ok((best_policy, trace))
}

/// Tunes against simulated weeks from `scenario`, scoring each candidate by
/// the mean utilisation of `config.n_runs` replications seeded from
/// `config.seed`.
pub fn tune(
    config: &TunerConfig,
    scenario: Scenario<'_>,
    sim: &SimConfig,
) -> Result<(ReactionPolicy, TuningTrace), TunerError> {
    tune_with(config, |policy| {
        let agg = run_replications(scenario, policy, config.strategy, config.n_runs, config.seed, sim)?;
        Ok(agg.utilisation.mean)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn any_kind() -> impl Strategy<Value = DisruptionKind> {
        (0..7usize).prop_map(|i| DisruptionKind::ALL[i])
    }

    proptest! {
        #[test]
        fn perturbed_vectors_are_distributions(seed in any::<u64>(), kind in any_kind(), scale in 0.001f64..=1.0) {
            let base = ReactionPolicy::tuned();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = perturb(&base, UpdateStrategy::UA, kind, scale, &mut rng);
            let v = out.get(UpdateStrategy::UA, kind).unwrap();
            prop_assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for r in ReactionId::ALL {
                prop_assert!(v[r.slot()] >= 0.0);
                if !kind.is_legal(r) {
                    prop_assert_eq!(v[r.slot()], 0.0);
                }
            }
            for other in DisruptionKind::ALL.into_iter().filter(|&k| k != kind) {
                prop_assert_eq!(out.get(UpdateStrategy::UA, other), base.get(UpdateStrategy::UA, other));
            }
            for s in UpdateStrategy::ALL.into_iter().filter(|&s| s != UpdateStrategy::UA) {
                prop_assert_eq!(out.get(s, kind), base.get(s, kind));
            }
        }
    }

    #[test]
    fn repair_only_types_never_gain_do_nothing_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = ReactionPolicy::do_nothing_prior(&[UpdateStrategy::UP1]);
        for i in 0..10_000 {
            let kind = if i % 2 == 0 { DisruptionKind::D2 } else { DisruptionKind::D4 };
            p = perturb(&p, UpdateStrategy::UP1, kind, 1.0, &mut rng);
            assert_eq!(p.probability(UpdateStrategy::UP1, kind, ReactionId::R0), 0.0);
        }
    }

    #[test]
    fn tiny_scale_is_nearly_identity() {
        let base = ReactionPolicy::tuned();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = perturb(&base, UpdateStrategy::UC, DisruptionKind::D4, 1e-12, &mut rng);
        let (a, b) = (base.get(UpdateStrategy::UC, DisruptionKind::D4).unwrap(), out.get(UpdateStrategy::UC, DisruptionKind::D4).unwrap());
        for i in 0..5 {
            assert!((a[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn zeroed_vector_is_rescued_to_uniform() {
        // Scale 1 around a uniform vector clamps everything to zero with
        // probability 1/27; run until it happens.
        let mut base = ReactionPolicy::do_nothing_prior(&[UpdateStrategy::UP2]);
        base.set(UpdateStrategy::UP2, DisruptionKind::D5, &[(ReactionId::R0, 1.0), (ReactionId::R1, 1.0), (ReactionId::R2, 1.0)])
            .unwrap();
        let mut rescued = false;
        for seed in 0..2000 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let out = perturb(&base, UpdateStrategy::UP2, DisruptionKind::D5, 1.0, &mut rng);
            let v = out.get(UpdateStrategy::UP2, DisruptionKind::D5).unwrap();
            let legal = DisruptionKind::D5.legal_reactions();
            if legal.iter().all(|r| (v[r.slot()] - 1.0 / legal.len() as f64).abs() < 1e-12) {
                rescued = true;
                break;
            }
        }
        assert!(rescued);
    }

    /// Deterministic objective: rewards R1 mass everywhere.
    fn synthetic(p: &ReactionPolicy, s: UpdateStrategy) -> f64 {
        DisruptionKind::ALL.iter().map(|&k| p.probability(s, k, ReactionId::R1)).sum()
    }

    #[test]
    fn first_evaluation_is_accepted_and_best_is_monotone() {
        let cfg = TunerConfig { max_iterations: 300, patience: 1000, ..TunerConfig::default() };
        let (best, trace) = tune_with(&cfg, |p| Ok(synthetic(p, cfg.strategy))).unwrap();
        assert!(trace.steps[0].accepted);
        assert_eq!(trace.steps.len(), 300);
        for w in trace.steps.windows(2) {
            assert!(w[1].best_utilisation >= w[0].best_utilisation);
        }
        assert!((synthetic(&best, cfg.strategy) - trace.best()).abs() < 1e-12);
        assert!(trace.best() > trace.steps[0].mean_utilisation);
    }

    #[test]
    fn one_iteration_returns_the_prior() {
        let cfg = TunerConfig { max_iterations: 1, ..TunerConfig::default() };
        let (best, trace) = tune_with(&cfg, |_| Ok(1.0)).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(best, ReactionPolicy::do_nothing_prior(&[cfg.strategy]));
    }

    #[test]
    fn candidates_differ_from_incumbent_in_one_type() {
        let cfg = TunerConfig { max_iterations: 60, patience: 1000, ..TunerConfig::default() };
        let mut incumbent: Option<(ReactionPolicy, f64)> = None;
        tune_with(&cfg, |p| {
            let score = synthetic(p, cfg.strategy);
            if let Some((inc, _)) = &incumbent {
                let differing = DisruptionKind::ALL
                    .iter()
                    .filter(|&&k| inc.get(cfg.strategy, k) != p.get(cfg.strategy, k))
                    .count();
                assert!(differing <= 1);
            }
            if incumbent.as_ref().is_none_or(|(_, best)| score > *best) {
                incumbent = Some((p.clone(), score));
            }
            Ok(score)
        })
        .unwrap();
    }

    #[test]
    fn patience_stops_a_flat_objective() {
        let cfg = TunerConfig { patience: 5, ..TunerConfig::default() };
        let (_, trace) = tune_with(&cfg, |_| Ok(2.0)).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.steps.len(), 6);
    }

    #[test]
    fn invalid_config_is_rejected() {
        for bad in [
            TunerConfig { n_runs: 0, ..TunerConfig::default() },
            TunerConfig { max_iterations: 0, ..TunerConfig::default() },
            TunerConfig { perturbation_scale: 0.0, ..TunerConfig::default() },
            TunerConfig { perturbation_scale: 1.5, ..TunerConfig::default() },
        ] {
            assert!(matches!(tune_with(&bad, |_| Ok(0.0)), Err(TunerError::Config(_))));
        }
    }
}
