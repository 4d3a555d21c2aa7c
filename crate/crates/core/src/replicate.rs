//! Independent replications of a simulated week and their summary statistics.
//!
//! Replication `i` of a batch with base seed `b` uses the seed
//! [`replication_seed`]`(b, i)`. When the scenario is a parameter set, the
//! same seed also generates that replication's week.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::instancegen::{generate_week, GenError, GenParams, WeekInstance};
use crate::reactive::{ReactionPolicy, UpdateStrategy};
use crate::simulator::{simulate_week, SimConfig, SimError, SimulationResult};

#[derive(Clone, Copy, Debug)]
pub enum Scenario<'a> {
    /// Every replication simulates the same week.
    Week(&'a WeekInstance),
    /// Every replication draws its own week.
    Params(&'a GenParams),
}

#[derive(Debug, thiserror::Error)]
pub enum ReplicationError {
    #[error("at least one replication is required")]
    Empty,
    #[error("replication {index} (seed {seed}): {source}")]
    Sim {
        index: u64,
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error("replication {index} (seed {seed}): {source}")]
    Gen {
        index: u64,
        seed: u64,
        #[source]
        source: GenError,
    },
}

/// First output of the ChaCha8 stream `index` keyed by `base`.
pub fn replication_seed(base: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(index);
    rng.next_u64()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: u64,
    pub seed: u64,
    pub utilisation: f64,
    pub overtime: f64,
    pub ne_time_to_surgery: f64,
    pub patients_treated: f64,
    pub updates: f64,
    pub runtime_secs: f64,
    pub update_secs: f64,
}

impl RunRecord {
    fn from_result(index: u64, seed: u64, r: &SimulationResult) -> Self {
        Self {
            index,
            seed,
            utilisation: r.weekly.utilisation,
            overtime: r.weekly.overtime,
            ne_time_to_surgery: r.weekly.mean_nonelective_wait,
            patients_treated: r.weekly.patients_treated as f64,
            updates: r.updates as f64,
            runtime_secs: r.runtime_secs,
            update_secs: r.mean_update_secs(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of the mean; zero for a single run.
    pub std_err: f64,
}

impl Estimate {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len() as f64;
        if xs.is_empty() {
            return Self::default();
        }
        let mean = xs.iter().sum::<f64>() / n;
        if xs.len() < 2 {
            return Self { mean, std_err: 0.0 };
        }
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        Self { mean, std_err: (var / n).sqrt() }
    }

    /// Half-width of a normal-approximation confidence interval.
    pub fn half_width(&self, z: f64) -> f64 {
        z * self.std_err
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Aggregate {
    pub strategy: UpdateStrategy,
    pub n: u64,
    pub base_seed: u64,
    pub utilisation: Estimate,
    pub overtime: Estimate,
    pub ne_time_to_surgery: Estimate,
    pub patients_treated: Estimate,
    pub updates: Estimate,
    pub runtime_secs: Estimate,
    pub update_secs: Estimate,
    pub runs: Vec<RunRecord>,
}

/// One metrics row, columns in results-table order.
/// Wall-clock columns are `None` unless timing output is requested, so that
/// files stay byte-identical across runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub strategy: String,
    pub replications: u64,
    pub utilisation: f64,
    pub utilisation_se: f64,
    pub overtime: f64,
    pub overtime_se: f64,
    pub ne_time_to_surgery: f64,
    pub ne_time_to_surgery_se: f64,
    pub patients_treated: f64,
    pub patients_treated_se: f64,
    pub runtime_s: Option<f64>,
    pub update_time_s: Option<f64>,
    pub updates: f64,
    pub updates_se: f64,
}

/// Per-replication detail row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub strategy: String,
    pub replication: u64,
    pub seed: u64,
    pub utilisation: f64,
    pub overtime: f64,
    pub ne_time_to_surgery: f64,
    pub patients_treated: f64,
    pub runtime_s: Option<f64>,
    pub update_time_s: Option<f64>,
    pub updates: f64,
}

impl Aggregate {
    pub fn from_runs(strategy: UpdateStrategy, base_seed: u64, runs: Vec<RunRecord>) -> Self {
        let est = |f: fn(&RunRecord) -> f64| Estimate::of(runs.iter().map(f));
        Self {
            strategy,
            n: runs.len() as u64,
            base_seed,
            utilisation: est(|r| r.utilisation),
            overtime: est(|r| r.overtime),
            ne_time_to_surgery: est(|r| r.ne_time_to_surgery),
            patients_treated: est(|r| r.patients_treated),
            updates: est(|r| r.updates),
            runtime_secs: est(|r| r.runtime_secs),
            update_secs: est(|r| r.update_secs),
            runs,
        }
    }

    pub fn row(&self, timing: bool) -> MetricsRow {
        MetricsRow {
            strategy: self.strategy.to_string(),
            replications: self.n,
            utilisation: self.utilisation.mean,
            utilisation_se: self.utilisation.std_err,
            overtime: self.overtime.mean,
            overtime_se: self.overtime.std_err,
            ne_time_to_surgery: self.ne_time_to_surgery.mean,
            ne_time_to_surgery_se: self.ne_time_to_surgery.std_err,
            patients_treated: self.patients_treated.mean,
            patients_treated_se: self.patients_treated.std_err,
            runtime_s: timing.then_some(self.runtime_secs.mean),
            update_time_s: timing.then_some(self.update_secs.mean),
            updates: self.updates.mean,
            updates_se: self.updates.std_err,
        }
    }

    pub fn run_rows(&self, timing: bool) -> Vec<RunRow> {
        self.runs
            .iter()
            .map(|r| RunRow {
                strategy: self.strategy.to_string(),
                replication: r.index,
                seed: r.seed,
                utilisation: r.utilisation,
                overtime: r.overtime,
                ne_time_to_surgery: r.ne_time_to_surgery,
                patients_treated: r.patients_treated,
                runtime_s: timing.then_some(r.runtime_secs),
                update_time_s: timing.then_some(r.update_secs),
                updates: r.updates,
            })
            .collect()
    }
}

fn one_run(
    scenario: Scenario<'_>,
    policy: &ReactionPolicy,
    strategy: UpdateStrategy,
    index: u64,
    base_seed: u64,
    config: &SimConfig,
) -> Result<(RunRecord, SimulationResult), ReplicationError> {
    let seed = replication_seed(base_seed, index);
    let owned;
    let week = match scenario {
        Scenario::Week(w) => w,
        Scenario::Params(p) => {
            let params = GenParams { seed, ..p.clone() };
            owned = generate_week(&params).map_err(|source| ReplicationError::Gen { index, seed, source })?;
            &owned
        }
    };
    let result =
        simulate_week(week, policy, strategy, seed, config).map_err(|source| ReplicationError::Sim { index, seed, source })?;
    Ok((RunRecord::from_result(index, seed, &result), result))
}

/// How the runs of a batch are scheduled. Results never depend on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    /// The rayon pool when the `parallel` feature is enabled, else sequential.
    #[default]
    Auto,
    Sequential,
}

/// Runs replications `0..n` and hands every full result to `inspect` in
/// index order.
#[allow(clippy::too_many_arguments)]
pub fn run_replications_with<F>(
    scenario: Scenario<'_>,
    policy: &ReactionPolicy,
    strategy: UpdateStrategy,
    n: u64,
    base_seed: u64,
    config: &SimConfig,
    execution: Execution,
    mut inspect: F,
) -> Result<Aggregate, ReplicationError>
where
    F: FnMut(&RunRecord, SimulationResult),
{
    if n == 0 {
        return Err(ReplicationError::Empty);
    }
    policy.require(strategy).map_err(|e| ReplicationError::Sim {
        index: 0,
        seed: replication_seed(base_seed, 0),
        source: e.into(),
    })?;
    let job = |i: u64| one_run(scenario, policy, strategy, i, base_seed, config);
    let outcomes: Vec<_> = match execution {
        #[cfg(feature = "parallel")]
        Execution::Auto => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(job).collect()
        }
        _ => (0..n).map(job).collect(),
    };

    let mut runs = Vec::with_capacity(n as usize);
    for outcome in outcomes {
        let (record, result) = outcome?;
        inspect(&record, result);
        runs.push(record);
    }
    Ok(Aggregate::from_runs(strategy, base_seed, runs))
}

pub fn run_replications(
    scenario: Scenario<'_>,
    policy: &ReactionPolicy,
    strategy: UpdateStrategy,
    n: u64,
    base_seed: u64,
    config: &SimConfig,
) -> Result<Aggregate, ReplicationError> {
    run_replications_with(scenario, policy, strategy, n, base_seed, config, Execution::Auto, |_, _| {})
}
