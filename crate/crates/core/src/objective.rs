//! Utilisation, overtime and the other schedule metrics.

use serde::{Deserialize, Serialize};

use crate::domain::{HorizonParams, Hours, Instance, Patient, PatientClass, Placement, Schedule};

/// Hours of `placement` (setup and cleanup included) that fall inside the
/// opening window `[0, lambda]`.
pub fn contribution(placement: &Placement, patient: &Patient, horizon: &HorizonParams) -> Hours {
    let lambda = horizon.lambda;
    let upper = (placement.end + patient.cleanup).max(0.0).min(lambda);
    let lower = (placement.start - patient.setup).min(lambda).max(0.0);
    upper - lower
}

/// Occupied hours of the placement outside the opening window.
pub fn overtime_share(placement: &Placement, patient: &Patient, horizon: &HorizonParams) -> Hours {
    patient.footprint() - contribution(placement, patient, horizon)
}

pub fn utilisation(schedule: &Schedule, instance: &Instance) -> Hours {
    schedule
        .placements()
        .map(|pl| contribution(pl, instance.patient(pl.patient), &instance.horizon))
        .sum()
}

pub fn overtime(schedule: &Schedule, instance: &Instance) -> Hours {
    schedule
        .placements()
        .map(|pl| overtime_share(pl, instance.patient(pl.patient), &instance.horizon))
        .sum()
}

/// Total and count of non-elective waits (start minus arrival) in the schedule.
pub fn nonelective_wait_sum(schedule: &Schedule, instance: &Instance) -> (Hours, usize) {
    schedule
        .placements()
        .filter_map(|pl| {
            let p = instance.patient(pl.patient);
            (p.class == PatientClass::NonElective).then(|| pl.start - p.arrival.unwrap_or(pl.start))
        })
        .fold((0.0, 0), |(s, n), w| (s + w, n + 1))
}

/// Mean non-elective time to surgery. Zero when there are no non-electives.
pub fn mean_nonelective_wait(schedule: &Schedule, instance: &Instance) -> Hours {
    match nonelective_wait_sum(schedule, instance) {
        (_, 0) => 0.0,
        (sum, n) => sum / n as f64,
    }
}

pub fn patients_treated(schedule: &Schedule) -> usize {
    schedule.len()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsSnapshot {
    pub utilisation: Hours,
    pub overtime: Hours,
    pub mean_nonelective_wait: Hours,
    pub patients_treated: usize,
}

impl MetricsSnapshot {
    pub fn of(schedule: &Schedule, instance: &Instance) -> Self {
        Self {
            utilisation: utilisation(schedule, instance),
            overtime: overtime(schedule, instance),
            mean_nonelective_wait: mean_nonelective_wait(schedule, instance),
            patients_treated: patients_treated(schedule),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::fixtures::*;
    use crate::domain::{PatientId, Schedule};
    use proptest::prelude::*;

    fn horizon() -> HorizonParams {
        HorizonParams::default()
    }

    /// Measure of `[a, b] ∩ [0, lambda]`, written independently of `contribution`.
    fn clipped(a: f64, b: f64, lambda: f64) -> f64 {
        let lo = if a > 0.0 { a } else { 0.0 };
        let hi = if b < lambda { b } else { lambda };
        if hi > lo { hi - lo } else { 0.0 }
    }

    fn at(start: f64, duration: f64) -> (Placement, Patient) {
        let p = patient(0, PatientClass::NonElective, duration);
        (place(0, 0, 0, start, start + duration), p)
    }

    #[test]
    fn clipped_positions() {
        let h = horizon();
        // Occupied intervals include the 0.25 h flanks on either side.
        let cases = [
            (-4.0, 2.0, 0.0),           // before opening
            (-1.0, 12.0, h.lambda),     // spans the whole window
            (-1.0, 3.0, 2.25),          // clipped at the start: counts up to its end
            (2.0, 3.0, 3.5),            // inside: full footprint
            (8.0, 4.0, 2.25),           // clipped at lambda
            (11.0, 2.0, 0.0),           // after closing
        ];
        for (start, dur, expected) in cases {
            let (pl, p) = at(start, dur);
            assert_eq!(contribution(&pl, &p, &h), expected, "start {start} dur {dur}");
        }
    }

    #[test]
    fn spec_examples() {
        let h = horizon();
        // occupied [2, 5]
        let (pl, p) = at(2.25, 2.5);
        assert_eq!(contribution(&pl, &p, &h), 3.0);
        // occupied [9, 12]
        let (pl, p) = at(9.25, 2.5);
        assert_eq!(overtime_share(&pl, &p, &h), 2.0);
        // entirely after lambda, occupied 1.5
        let (pl, p) = at(12.25, 1.0);
        assert_eq!(overtime_share(&pl, &p, &h), 1.5);
    }

    #[test]
    fn schedule_level_metrics() {
        let mut inst = instance(1, 1, vec![
            patient(0, PatientClass::NonElective, 1.0),
            patient(1, PatientClass::NonElective, 1.0),
        ]);
        assert_eq!(utilisation(&Schedule::new(), &inst), 0.0);
        assert_eq!(mean_nonelective_wait(&Schedule::new(), &inst), 0.0);
        inst.patients[0].arrival = Some(3.0);
        inst.patients[1].arrival = Some(1.0);
        let mut s = Schedule::new();
        s.insert(place(0, 0, 0, 4.0, 5.0));
        s.insert(place(1, 0, 0, 4.0 - 1.5, 3.5));
        assert_eq!(mean_nonelective_wait(&s, &inst), 1.25);
        assert_eq!(patients_treated(&s), 2);
        assert!(s.get(PatientId(1)).is_some());
    }

    proptest! {
        #[test]
        fn contribution_matches_clip_oracle(
            start in -30.0f64..30.0, dur in 0.01f64..12.0, setup in 0.0f64..1.0, cleanup in 0.0f64..1.0
        ) {
            let h = horizon();
            let (pl, mut p) = at(start, dur);
            p.setup = setup;
            p.cleanup = cleanup;
            let c = contribution(&pl, &p, &h);
            prop_assert!((0.0..=h.lambda).contains(&c));
            let oracle = clipped(start - setup, start + dur + cleanup, h.lambda);
            prop_assert!((c - oracle).abs() < 1e-9);
            prop_assert!((c + overtime_share(&pl, &p, &h) - p.footprint()).abs() < 1e-12);
        }
    }
}
