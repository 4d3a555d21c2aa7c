//! Acceptance gate. Each test prints one `criterion N: PASS|FAIL` line and
//! asserts the criterion. Run with `--nocapture` to see the lines.
//!
//! Criteria 7 and 8 share one tuning run per strategy on the calibration
//! week; it dominates the runtime of this file.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use theatre::heuristics::block_schedule;
use theatre::instancegen::{generate_week, GenParams, WeekInstance};
use theatre::mip::{assignment_from_schedule, enumerate_schedules, exhaustive_oracle, export_mip, MipModel};
use theatre::objective::{contribution, overtime, utilisation};
use theatre::reactive::{DisruptionKind, ReactionPolicy, UpdateStrategy};
use theatre::replicate::{run_replications, Aggregate, RunRecord, Scenario};
use theatre::simulator::{simulate_week, SimConfig};
use theatre::tuner::{tune, TunerConfig, TuningTrace};
use theatre::{
    check_feasibility, HorizonParams, Instance, MssSlot, OperatingRoom, Patient, PatientClass, PatientId, Placement,
    RoomId, Schedule, SpecialtyId, Surgeon, SurgeonId,
};

fn report(n: u32, pass: bool, detail: impl AsRef<str>) {
    println!("criterion {n}: {} ({})", if pass { "PASS" } else { "FAIL" }, detail.as_ref());
}

fn calibration_week() -> &'static WeekInstance {
    static WEEK: OnceLock<WeekInstance> = OnceLock::new();
    WEEK.get_or_init(|| generate_week(&GenParams::default()).expect("default parameters are valid"))
}

// ---------------------------------------------------------------------------
// Random small instances for criteria 2 and 4.

fn random_instance(rng: &mut ChaCha8Rng, max_patients: usize, max_rooms: u32, max_surgeons: u32) -> Instance {
    let rooms = rng.random_range(1..=max_rooms);
    let surgeons = rng.random_range(1..=max_surgeons);
    let n = rng.random_range(1..=max_patients);
    let quarter = |rng: &mut ChaCha8Rng, lo: u32, hi: u32| rng.random_range(lo..=hi) as f64 * 0.25;
    let mut inst = Instance {
        horizon: HorizonParams::default(),
        rooms: (0..rooms)
            .map(|r| OperatingRoom {
                id: RoomId(r),
                working: true,
                release_time: quarter(rng, 0, 4),
                equipped_specialties: vec![SpecialtyId(0)],
                reserved_for: None,
            })
            .collect(),
        surgeons: (0..surgeons).map(|h| Surgeon { id: SurgeonId(h), release_time: quarter(rng, 0, 4) }).collect(),
        specialties: 1,
        patients: Vec::new(),
        mss_assignment: BTreeMap::new(),
    };
    for i in 0..n {
        let class = match rng.random_range(0..3) {
            0 => PatientClass::ScheduledElective,
            1 => PatientClass::UnscheduledElective,
            _ => PatientClass::NonElective,
        };
        let mut eligible: Vec<SurgeonId> = (0..surgeons).filter(|_| rng.random_bool(0.6)).map(SurgeonId).collect();
        if eligible.is_empty() {
            eligible.push(SurgeonId(rng.random_range(0..surgeons)));
        }
        let p = Patient {
            id: PatientId(i as u32),
            class,
            specialty: SpecialtyId(0),
            expected_duration: quarter(rng, 2, 20),
            setup: 0.25,
            cleanup: 0.25,
            notice: (class == PatientClass::UnscheduledElective).then(|| quarter(rng, 0, 8)),
            arrival: (class == PatientClass::NonElective).then(|| quarter(rng, 0, 40)),
            eligible_surgeons: eligible.clone(),
            urgency_category: rng.random_range(1..=3),
            days_waiting: rng.random_range(0..200),
            due_date: rng.random_range(-10..100),
        };
        if class == PatientClass::ScheduledElective {
            let slot = MssSlot {
                room: RoomId(rng.random_range(0..rooms)),
                surgeon: eligible[rng.random_range(0..eligible.len())],
            };
            inst.mss_assignment.insert(p.id, slot);
        }
        inst.patients.push(p);
    }
    inst
}

fn nonelectives(inst: &Instance) -> Vec<PatientId> {
    inst.patients.iter().filter(|p| p.class == PatientClass::NonElective).map(|p| p.id).collect()
}

fn footprint_sum(s: &Schedule, inst: &Instance) -> f64 {
    s.placements().map(|pl| inst.patient(pl.patient).footprint()).sum()
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_01_feasibility_preserved_after_every_update() {
    let params = GenParams::default();
    let policy = ReactionPolicy::tuned();
    let cfg = SimConfig { verify: true, ..SimConfig::default() };
    let per_strategy = 17;
    let mut weeks = 0;
    let mut updates = 0.0;
    let mut failures = Vec::new();
    for (i, s) in UpdateStrategy::ALL.into_iter().enumerate() {
        match run_replications(Scenario::Params(&params), &policy, s, per_strategy, 1000 + i as u64, &cfg) {
            Ok(agg) => {
                weeks += agg.n;
                updates += agg.updates.mean * agg.n as f64;
            }
            Err(e) => failures.push(format!("{s}: {e}")),
        }
    }
    let pass = failures.is_empty() && weeks >= 100;
    report(1, pass, format!("{weeks} weeks, {updates:.0} verified updates, {} failures", failures.len()));
    assert!(pass, "{failures:#?}");
}

#[test]
fn criterion_02_objective_complementarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 10_000 {
        let inst = random_instance(&mut rng, 12, 4, 3);
        let now = rng.random_range(0..8) as f64 * 0.5;
        let built = block_schedule(&inst, &nonelectives(&inst), now);
        let report = check_feasibility(&built.schedule, &inst).unwrap();
        if !report.is_feasible() || built.schedule.is_empty() {
            continue;
        }
        let lhs = utilisation(&built.schedule, &inst) + overtime(&built.schedule, &inst);
        worst = worst.max((lhs - footprint_sum(&built.schedule, &inst)).abs());
        checked += 1;
    }
    let pass = worst <= 1e-9;
    report(2, pass, format!("{checked} schedules, max |U + O - occupied| = {worst:.2e} h"));
    assert!(pass);
}

#[test]
fn criterion_03_contribution_cases() {
    let h = HorizonParams::default();
    let lambda = h.lambda;
    let p = Patient {
        id: PatientId(0),
        class: PatientClass::ScheduledElective,
        specialty: SpecialtyId(0),
        expected_duration: 1.0,
        setup: 0.25,
        cleanup: 0.25,
        notice: None,
        arrival: None,
        eligible_surgeons: vec![SurgeonId(0)],
        urgency_category: 1,
        days_waiting: 0,
        due_date: 0,
    };
    let at = |start: f64, end: f64| Placement { patient: p.id, room: RoomId(0), surgeon: SurgeonId(0), start, end };
    // occupied interval is [start - 0.25, end + 0.25]
    let cases = [
        ("before opening", at(-3.0, -1.5), 0.0),
        ("spans the window", at(-1.0, 11.0), lambda),
        ("starts before, ends inside", at(-1.0, 2.0), 2.25),
        ("inside", at(3.0, 5.5), 3.0),
        ("starts inside, ends after", at(9.0, 12.0), 1.25),
        ("after closing", at(11.0, 13.0), 0.0),
    ];
    let mut bad = Vec::new();
    for (name, pl, want) in &cases {
        let got = contribution(pl, &p, &h);
        if got != *want {
            bad.push(format!("{name}: got {got}, want {want}"));
        }
    }
    let pass = bad.is_empty();
    report(3, pass, format!("{} of 6 positions exact", 6 - bad.len()));
    assert!(pass, "{bad:#?}");
}

#[test]
fn criterion_04_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut instances = 0;
    let mut problems = Vec::new();
    while instances < 60 {
        let inst = random_instance(&mut rng, 5, 2, 2);
        let Some((_, optimum)) = exhaustive_oracle(&inst).unwrap() else {
            continue;
        };
        instances += 1;
        let built = block_schedule(&inst, &nonelectives(&inst), 0.0);
        if !check_feasibility(&built.schedule, &inst).unwrap().is_feasible() {
            problems.push(format!("instance {instances}: heuristic schedule infeasible"));
        }
        let heuristic = utilisation(&built.schedule, &inst);
        if heuristic > optimum + 1e-9 {
            problems.push(format!("instance {instances}: heuristic {heuristic} > oracle {optimum}"));
        }
        let model = MipModel::parse_lp(&export_mip(&inst).unwrap()).unwrap();
        let mut best_lp = f64::NEG_INFINITY;
        enumerate_schedules(&inst, |s| {
            match model.evaluate(&assignment_from_schedule(s, &inst)).unwrap() {
                Ok(v) => best_lp = best_lp.max(v),
                Err(rows) => problems.push(format!("instance {instances}: LP rejects enumerated schedule: {rows:?}")),
            }
        })
        .unwrap();
        if (best_lp - optimum).abs() > 1e-9 {
            problems.push(format!("instance {instances}: LP best {best_lp} vs oracle {optimum}"));
        }
    }
    let pass = problems.is_empty();
    report(4, pass, format!("{instances} instances, {} discrepancies", problems.len()));
    assert!(pass, "{problems:#?}");
}

#[test]
fn criterion_05_update_latency() {
    let week = calibration_week();
    let policy = ReactionPolicy::tuned();
    let mut worst = (UpdateStrategy::UP1, 0.0);
    for s in UpdateStrategy::ALL {
        let r = simulate_week(week, &policy, s, 5, &SimConfig::default()).unwrap();
        let mean = r.mean_update_secs();
        if mean > worst.1 {
            worst = (s, mean);
        }
    }
    let pass = worst.1 <= 0.1;
    report(5, pass, format!("slowest mean update {:.2e} s under {}", worst.1, worst.0));
    assert!(pass);
}

#[test]
fn criterion_06_update_count_scale() {
    let week = calibration_week();
    let policy = ReactionPolicy::tuned();
    let cfg = SimConfig::default();
    let up1 = run_replications(Scenario::Week(week), &policy, UpdateStrategy::UP1, 10, 6, &cfg).unwrap();
    let up4 = run_replications(Scenario::Week(week), &policy, UpdateStrategy::UP4, 10, 6, &cfg).unwrap();
    let within = |x: f64, target: f64| (x - target).abs() <= 0.2 * target;
    let pass = within(up1.updates.mean, 852.10) && within(up4.updates.mean, 351.2);
    report(
        6,
        pass,
        format!("UP1 {:.1} (target 852.10), UP4 {:.1} (target 351.2), tolerance 20%", up1.updates.mean, up4.updates.mean),
    );
    assert!(pass);
}

/// Tuned policy and trace for every strategy on the calibration week.
fn tuned_policies() -> &'static (ReactionPolicy, Vec<(UpdateStrategy, TuningTrace)>) {
    static TUNED: OnceLock<(ReactionPolicy, Vec<(UpdateStrategy, TuningTrace)>)> = OnceLock::new();
    TUNED.get_or_init(|| {
        let week = calibration_week();
        let mut all = ReactionPolicy::default();
        let mut traces = Vec::new();
        for s in UpdateStrategy::ALL {
            let cfg = TunerConfig { strategy: s, seed: 8, ..TunerConfig::default() };
            let (best, trace) = tune(&cfg, Scenario::Week(week), &SimConfig::default()).unwrap();
            for k in DisruptionKind::ALL {
                all.set(s, k, &best.vector(s, k).unwrap()).unwrap();
            }
            traces.push((s, trace));
        }
        (all, traces)
    })
}

/// Lower 95% bound on the mean paired difference `f(a) - f(b)`.
fn paired_lower(a: &[RunRecord], b: &[RunRecord], f: impl Fn(&RunRecord) -> f64) -> f64 {
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| f(x) - f(y)).collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    mean - 1.96 * sd / n.sqrt()
}

#[test]
fn criterion_07_directional_reproduction() {
    let (policy, _) = tuned_policies();
    let cfg = SimConfig::default();
    let mut instances: Vec<(String, WeekInstance)> = vec![("calibration".into(), calibration_week().clone())];
    for seed in [101, 102] {
        let week = generate_week(&GenParams { seed, ..GenParams::default() }).unwrap();
        instances.push((format!("seed {seed}"), week));
    }
    let mut lines = Vec::new();
    let mut pass = true;
    for (name, week) in &instances {
        // Same base seed for every strategy: replication i sees the same
        // realised durations, so differences are paired.
        let aggs: Vec<Aggregate> = UpdateStrategy::ALL
            .into_iter()
            .map(|s| run_replications(Scenario::Week(week), policy, s, 100, 7, &cfg).unwrap())
            .collect();
        let up1 = aggs.iter().find(|a| a.strategy == UpdateStrategy::UP1).unwrap();
        let up1_lowest = aggs
            .iter()
            .filter(|a| a.strategy != UpdateStrategy::UP1)
            .all(|o| paired_lower(&o.runs, &up1.runs, |r| r.ne_time_to_surgery) > 0.0);
        let best_util = aggs.iter().max_by(|a, b| a.utilisation.mean.total_cmp(&b.utilisation.mean)).unwrap();
        let least_ot = aggs.iter().min_by(|a, b| a.overtime.mean.total_cmp(&b.overtime.mean)).unwrap();
        // Alignment fails only if the best-utilisation strategy has
        // significantly more overtime than the least-overtime one.
        let aligned = best_util.strategy == least_ot.strategy
            || paired_lower(&best_util.runs, &least_ot.runs, |r| r.overtime) <= 0.0;
        pass &= up1_lowest && aligned;
        let waits: Vec<String> =
            aggs.iter().map(|a| format!("{} {:.2}", a.strategy, a.ne_time_to_surgery.mean)).collect();
        lines.push(format!(
            "{name}: NE wait [{}], UP1 lowest at 95%: {up1_lowest}; best utilisation {} / least overtime {}",
            waits.join(", "),
            best_util.strategy,
            least_ot.strategy
        ));
    }
    report(7, pass, lines.join("; "));
    assert!(pass);
}

#[test]
fn criterion_08_tuner_monotone_and_plateaus() {
    let (_, traces) = tuned_policies();
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, trace) in traces {
        let steps = &trace.steps;
        let monotone = steps.windows(2).all(|w| w[1].best_utilisation >= w[0].best_utilisation);
        // A plateau is either the patience stop or a flat tail: the last 20
        // iterations add at most 1% of the run's total gain.
        let first = steps[0].best_utilisation;
        let last = steps[steps.len() - 1].best_utilisation;
        let tail_start = steps[steps.len().saturating_sub(21)].best_utilisation;
        let tail_share = if last > first { (last - tail_start) / (last - first) } else { 0.0 };
        let plateau = trace.converged || tail_share <= 0.01;
        let must_plateau = matches!(s, UpdateStrategy::UP1 | UpdateStrategy::UP2 | UpdateStrategy::UA | UpdateStrategy::UC);
        pass &= monotone && (!must_plateau || plateau);
        parts.push(format!(
            "{s} {} iterations, best {first:.1} -> {last:.1}, last gain at {:?}, tail share {:.2}%, plateau {plateau}",
            steps.len(),
            trace.last_improvement(),
            100.0 * tail_share
        ));
    }
    report(8, pass, parts.join("; "));
    assert!(pass);
}

#[test]
fn criterion_09_generator_calibration() {
    let base = GenParams::default();
    let n = 1000;
    let mut ne = Vec::with_capacity(n);
    let mut wl = Vec::with_capacity(n);
    for seed in 0..n as u64 {
        let week = generate_week(&GenParams { seed, ..base.clone() }).unwrap();
        let s = week.summary();
        ne.push(s.nonelective_requests as f64);
        wl.push(s.waiting_list as f64);
    }
    let stats = |xs: &[f64]| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0);
        (m, var, (var / xs.len() as f64).sqrt())
    };
    let (ne_mean, ne_var, ne_se) = stats(&ne);
    let (wl_mean, _, wl_se) = stats(&wl);
    let dispersion = ne_var / ne_mean;
    let ne_ok = (ne_mean - 113.0).abs() <= 2.0 * ne_se;
    let wl_ok = (wl_mean - base.waiting_list_mean).abs() <= 2.0 * wl_se;
    let disp_ok = (0.8..=1.2).contains(&dispersion);
    let pass = ne_ok && wl_ok && disp_ok;
    report(
        9,
        pass,
        format!(
            "NE mean {ne_mean:.2} +- {ne_se:.2} (113), waiting list {wl_mean:.1} +- {wl_se:.1} ({}), dispersion {dispersion:.3}",
            base.waiting_list_mean
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------------------
// Criterion 10 drives the binary.

fn theatre(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_theatre")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn files(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                map.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    map
}

#[test]
fn criterion_10_determinism_from_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let p = |s: &str| tmp.path().join(s).to_string_lossy().into_owned();
    let params = p("params.json");
    std::fs::write(
        &params,
        r#"{"waiting_list_mean": 600.0, "elective_request_rate": 80.0, "nonelective_request_rate": 40.0}"#,
    )
    .unwrap();

    theatre(&["generate", "--params", &params, "--seed", "5", "--out", &p("gen")]);
    let week = p("gen/week.json");
    let runs: Vec<(&str, Vec<String>)> = vec![
        ("gen", vec![]),
        ("sim", vec!["simulate".into(), "--instance".into(), week.clone(), "--replications".into(), "3".into(), "--seed".into(), "9".into(), "--out".into(), p("sim")]),
        (
            "simp",
            vec!["simulate".into(), "--params".into(), params.clone(), "--strategy".into(), "UA".into(), "--replications".into(), "2".into(), "--out".into(), p("simp")],
        ),
        (
            "tune",
            vec!["tune".into(), "--instance".into(), week.clone(), "--strategy".into(), "UP2".into(), "--iterations".into(), "6".into(), "--replications".into(), "2".into(), "--out".into(), p("tune")],
        ),
        ("mip", vec!["export-mip".into(), "--instance".into(), week.clone(), "--day".into(), "1".into(), "--out".into(), p("mip")]),
    ];
    let mut checked = Vec::new();
    let mut bad = Vec::new();
    for (name, args) in &runs {
        if !args.is_empty() {
            let a: Vec<&str> = args.iter().map(String::as_str).collect();
            theatre(&a);
        }
        let first = tmp.path().join(name);
        for attempt in ["again", "replay"] {
            let second = tmp.path().join(format!("{name}-{attempt}"));
            let second_s = second.to_string_lossy().into_owned();
            if attempt == "replay" {
                theatre(&["replay", &first.join("manifest.json").to_string_lossy(), "--out", &second_s]);
            } else if args.is_empty() {
                theatre(&["generate", "--params", &params, "--seed", "5", "--out", &second_s]);
            } else {
                let mut a: Vec<&str> = args.iter().map(String::as_str).collect();
                let last = a.len() - 1;
                a[last] = &second_s;
                theatre(&a);
            }
            let (x, y) = (files(&first), files(&second));
            if x != y {
                bad.push(format!("{name} ({attempt})"));
            }
            checked.push(format!("{name}:{attempt}:{}", x.len()));
        }
    }
    let pass = bad.is_empty();
    report(10, pass, format!("{} re-runs byte-identical, mismatches {bad:?}", checked.len() - bad.len()));
    assert!(pass);
}
