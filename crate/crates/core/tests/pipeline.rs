use theatre::gantt::gantt_svg;
use theatre::heuristics::block_schedule;
use theatre::instancegen::{generate_week, GenParams};
use theatre::io::{read_week, to_json};
use theatre::mip::{assignment_from_schedule, export_mip, MipModel};
use theatre::objective::utilisation;
use theatre::reactive::{ReactionPolicy, UpdateStrategy};
use theatre::replicate::Scenario;
use theatre::simulator::{day_subset, simulate_week, SimConfig};
use theatre::tuner::{tune, TunerConfig};
use theatre::{check_feasibility, PatientClass};

fn params() -> GenParams {
    let mut p = GenParams { waiting_list_mean: 300.0, elective_request_rate: 40.0, nonelective_request_rate: 12.0, rooms: 4, reserved_rooms: 1, specialties: 3, rooms_per_specialty: 2, ..GenParams::default() };
    p.specialty_weights.truncate(3);
    p.duration_lognormal.truncate(3);
    p
}

#[test]
fn generated_week_survives_a_file_round_trip() {
    let week = generate_week(&params()).unwrap();
    let back = read_week(&to_json(&week)).unwrap();
    assert_eq!(back, week);
}

#[test]
fn day_model_scores_the_block_schedule() {
    let week = generate_week(&params()).unwrap();
    let day = day_subset(&week, 0).unwrap();
    let queue: Vec<_> = day.patients.iter().filter(|p| p.class == PatientClass::NonElective).map(|p| p.id).collect();
    let built = block_schedule(&day, &queue, 0.0);
    assert!(built.unplaced.is_empty());
    assert!(check_feasibility(&built.schedule, &day).unwrap().is_feasible());
    let text = export_mip(&day).unwrap();
    assert_eq!(text, export_mip(&day).unwrap());
    let model = MipModel::parse_lp(&text).unwrap();
    let value = model.evaluate(&assignment_from_schedule(&built.schedule, &day)).unwrap();
    let value = value.unwrap_or_else(|rows| panic!("rows violated: {rows:?}"));
    assert!((value - utilisation(&built.schedule, &day)).abs() < 1e-9);
}

#[test]
fn simulated_days_render() {
    let week = generate_week(&params()).unwrap();
    let cfg = SimConfig { keep_days: true, ..SimConfig::default() };
    let r = simulate_week(&week, &ReactionPolicy::tuned(), UpdateStrategy::UP2, 4, &cfg).unwrap();
    assert_eq!(r.days.len(), week.days as usize);
    for d in &r.days {
        let svg = gantt_svg(&d.realised, &d.instance, "day");
        assert_eq!(svg.matches("<title>").count(), d.realised.len());
    }
}

#[test]
fn short_tuning_run_on_a_small_week() {
    let week = generate_week(&params()).unwrap();
    let cfg = TunerConfig { n_runs: 2, max_iterations: 8, strategy: UpdateStrategy::UA, ..TunerConfig::default() };
    let (policy, trace) = tune(&cfg, Scenario::Week(&week), &SimConfig::default()).unwrap();
    policy.require(UpdateStrategy::UA).unwrap();
    assert!(trace.steps[0].accepted);
    assert!(trace.steps.windows(2).all(|w| w[1].best_utilisation >= w[0].best_utilisation));
    let reloaded = ReactionPolicy::from_json(&policy.to_json(), None).unwrap();
    assert_eq!(reloaded, policy);
}
