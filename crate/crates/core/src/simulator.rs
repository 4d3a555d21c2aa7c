//! Discrete-event realisation of a week.
//!
//! Each day starts from a block schedule. Time then advances through
//! non-elective arrivals, surgery ends, strategy ticks and planned surgery
//! starts. Disruptions wait until the update strategy fires, at which point
//! reactions are sampled from the policy and applied.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::time::Instant as Clock;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    check_feasibility, FeasibilityReport, Hours, Instance, Instant, MssSlot, Patient, PatientClass, PatientId,
    Placement, RoomId, Schedule, SurgeonId,
};
use crate::heuristics::{block_schedule, WaitingList};
use crate::instancegen::WeekInstance;
use crate::objective::{nonelective_wait_sum, overtime, utilisation, MetricsSnapshot};
use crate::reactive::{
    run_update, should_update, Disruption, DisruptionEvent, DisruptionKind, PolicyError, ReactContext, ReactError,
    ReactionId, ReactionPolicy, RebuildOrder, UpdateContext, UpdateStrategy,
};

const EPS: f64 = 1e-9;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimConfig {
    /// Run the feasibility checker after every update.
    pub verify: bool,
    /// Keep the event log.
    pub trace: bool,
    /// Keep each day's instance and realised schedule (for Gantt charts).
    pub keep_days: bool,
    pub rebuild_order: RebuildOrder,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            verify: false,
            trace: false,
            keep_days: false,
            rebuild_order: RebuildOrder::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("invalid week: {0}")]
    InvalidWeek(String),
    #[error("day {day}: no compatible room and surgeon for patients {patients:?}")]
    Unplaceable { day: u32, patients: Vec<PatientId> },
    #[error("day {day} at {at:.3} h: infeasible schedule\n{report}")]
    Infeasible { day: u32, at: Instant, report: FeasibilityReport },
    #[error("day {day} at {at:.3} h: {source}")]
    React {
        day: u32,
        at: Instant,
        #[source]
        source: ReactError,
    },
}

/// A reaction as recorded in the trace, with week-level patient ids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppliedReaction {
    pub disruption: DisruptionKind,
    pub reaction: ReactionId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub patient: Option<PatientId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub room: Option<RoomId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    DayStart {
        broken_rooms: Vec<RoomId>,
        cancelled: Vec<PatientId>,
        scheduled: usize,
    },
    Arrival {
        patient: PatientId,
    },
    SurgeryStart {
        patient: PatientId,
        room: RoomId,
        surgeon: SurgeonId,
    },
    SurgeryEnd {
        patient: PatientId,
        deviation: Hours,
    },
    Update {
        reactions: Vec<AppliedReaction>,
    },
    DayEnd {
        metrics: MetricsSnapshot,
        carried_over: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub day: u32,
    pub at: Instant,
    #[serde(flatten)]
    pub event: TraceEvent,
}

/// A realised day: its instance (with actual durations for treated
/// patients), the surgeries that took place and the week-level id of every
/// patient of the instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: u32,
    pub instance: Instance,
    pub realised: Schedule,
    pub week_ids: Vec<PatientId>,
    pub metrics: MetricsSnapshot,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SimulationResult {
    pub weekly: MetricsSnapshot,
    pub updates: usize,
    /// Wall-clock seconds of each update pass.
    pub update_latencies: Vec<f64>,
    pub runtime_secs: f64,
    pub add_electives: usize,
    /// Mandatory patients still untreated when the week ended.
    pub untreated: Vec<PatientId>,
    pub trace: Vec<TraceEntry>,
    pub days: Vec<DayRecord>,
}

impl SimulationResult {
    pub fn mean_update_secs(&self) -> f64 {
        if self.update_latencies.is_empty() {
            0.0
        } else {
            self.update_latencies.iter().sum::<f64>() / self.update_latencies.len() as f64
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum EventKind {
    Arrival = 0,
    SurgeryEnd = 1,
    Tick = 2,
    DayEnd = 3,
}

#[derive(Clone, Debug)]
struct Event {
    at: Instant,
    kind: EventKind,
    seq: u64,
    /// Arrival: index into the day's arrivals. End: local patient id.
    payload: u32,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    /// Reversed, so the max-heap pops the earliest event first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .at
            .total_cmp(&self.at)
            .then(other.kind.cmp(&self.kind))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Seed of the duration stream of one patient.
fn duration_rng(seed: u64, patient: PatientId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(patient.0 as u64 + 1);
    rng
}

struct Carry {
    nonelective: Vec<Patient>,
    elective: Vec<(Patient, MssSlot)>,
    room_release: Vec<Instant>,
    surgeon_release: Vec<Instant>,
}

struct Simulation<'a> {
    week: &'a WeekInstance,
    policy: &'a ReactionPolicy,
    strategy: UpdateStrategy,
    config: &'a SimConfig,
    seed: u64,
    rng: ChaCha8Rng,
    actual: BTreeMap<PatientId, Hours>,
    /// Waiting list by week id, with the day each entry's dates refer to.
    waiting: BTreeMap<PatientId, (Patient, u32)>,
    result: SimulationResult,
    ne_wait: (Hours, usize),
}

impl<'a> Simulation<'a> {
    fn actual_duration(&mut self, patient: &Patient) -> Hours {
        let week = self.week;
        let seed = self.seed;
        *self
            .actual
            .entry(patient.id)
            .or_insert_with(|| week.realize_duration(patient, &mut duration_rng(seed, patient.id)))
    }

    fn log(&mut self, day: u32, at: Instant, event: TraceEvent) {
        if self.config.trace {
            self.result.trace.push(TraceEntry { day, at, event });
        }
    }

    fn run(mut self) -> Result<SimulationResult, SimError> {
        let started = Clock::now();
        let base = &self.week.instance;
        let mut carry = Carry {
            nonelective: Vec::new(),
            elective: Vec::new(),
            room_release: vec![0.0; base.rooms.len()],
            surgeon_release: vec![0.0; base.surgeons.len()],
        };
        for d in 0..self.week.days {
            carry = self.day(d, carry)?;
        }
        let ne = carry.nonelective.iter().map(|p| p.id);
        let se = carry.elective.iter().map(|(p, _)| p.id);
        self.result.untreated = ne.chain(se).collect();
        self.result.untreated.sort();
        let (sum, n) = self.ne_wait;
        self.result.weekly.mean_nonelective_wait = if n == 0 { 0.0 } else { sum / n as f64 };
        self.result.runtime_secs = started.elapsed().as_secs_f64();
        Ok(self.result)
    }

    fn day(&mut self, day: u32, carry: Carry) -> Result<Carry, SimError> {
        let week = self.week;
        let base = &week.instance;
        let lambda_star = base.horizon.lambda_star;
        let broken = &week.breakdowns[day as usize];
        let cancelled = &week.cancellations[day as usize];

        // Day instance with local ids.
        let mut week_ids: Vec<PatientId> = Vec::new();
        let mut instance = Instance {
            horizon: base.horizon.clone(),
            rooms: base.rooms.clone(),
            surgeons: base.surgeons.clone(),
            specialties: base.specialties,
            patients: Vec::new(),
            mss_assignment: BTreeMap::new(),
        };
        for room in &mut instance.rooms {
            room.working = !broken.contains(&room.id);
            room.release_time = carry.room_release[room.id.index()];
        }
        for s in &mut instance.surgeons {
            s.release_time = carry.surgeon_release[s.id.index()];
        }
        let mut add = |instance: &mut Instance, p: &Patient| {
            week_ids.push(p.id);
            instance.push_patient(p.clone())
        };
        let mut planned_mss: Vec<(Patient, MssSlot)> = carry.elective.clone();
        for &p in &week.elective_days[day as usize] {
            if !cancelled.contains(&p) {
                planned_mss.push((base.patient(p).clone(), base.mss_assignment[&p]));
            }
        }
        for (p, slot) in &planned_mss {
            let local = add(&mut instance, p);
            instance.mss_assignment.insert(local, *slot);
        }
        let mut queue = Vec::new();
        for p in &carry.nonelective {
            queue.push(add(&mut instance, p));
        }
        let weekday = week.is_weekday(day);
        if weekday {
            for (p, origin) in self.waiting.values() {
                let mut p = p.clone();
                let shift = day - origin;
                p.due_date -= shift as i64;
                p.days_waiting += shift;
                add(&mut instance, &p);
            }
        }

        let built = block_schedule(&instance, &queue, 0.0);
        if !built.unplaced.is_empty() {
            return Err(SimError::Unplaceable {
                day,
                patients: built.unplaced.iter().map(|p| week_ids[p.index()]).collect(),
            });
        }
        let mut schedule = built.schedule;
        let mut ctx = ReactContext {
            waiting: if weekday { WaitingList::from_instance(&instance) } else { WaitingList::default() },
            backlog: Vec::new(),
            rebuild_order: self.config.rebuild_order,
        };
        self.log(
            day,
            0.0,
            TraceEvent::DayStart {
                broken_rooms: broken.clone(),
                cancelled: cancelled.clone(),
                scheduled: schedule.len(),
            },
        );
        if self.config.verify {
            let report = check_feasibility(&schedule, &instance).map_err(|e| SimError::InvalidWeek(e.to_string()))?;
            if !report.is_feasible() {
                return Err(SimError::Infeasible { day, at: 0.0, report });
            }
        }

        let mut pending: Vec<Disruption> = broken
            .iter()
            .map(|&room| Disruption { at: 0.0, event: DisruptionEvent::RoomBreakdown { room } })
            .collect();
        for &p in cancelled {
            pending.push(Disruption {
                at: 0.0,
                event: DisruptionEvent::Cancellation { patient: p, room: base.mss_assignment.get(&p).map(|s| s.room) },
            });
        }

        let mut heap = BinaryHeap::new();
        let mut seq = 0u64;
        let mut push = |heap: &mut BinaryHeap<Event>, at, kind, payload| {
            seq += 1;
            heap.push(Event { at, kind, seq, payload });
        };
        let arrivals: Vec<&Patient> = week
            .nonelective_requests
            .iter()
            .filter(|r| r.day == day)
            .map(|r| &r.patient)
            .collect();
        for (i, p) in arrivals.iter().enumerate() {
            push(&mut heap, p.arrival.unwrap_or(0.0), EventKind::Arrival, i as u32);
        }
        for t in self.strategy.ticks(base.horizon.lambda, lambda_star) {
            push(&mut heap, t, EventKind::Tick, 0);
        }
        push(&mut heap, lambda_star, EventKind::DayEnd, 0);

        let mut in_progress: Vec<(PatientId, Instant)> = Vec::new();
        let mut attempted: HashSet<(PatientId, u64)> = HashSet::new();
        let mut now = 0.0;
        let mut first = true;
        loop {
            let next_event = heap.peek().map_or(f64::INFINITY, |e| e.at);
            let next_start = schedule
                .movable()
                .filter(|pl| pl.start >= now - EPS && !attempted.contains(&(pl.patient, pl.start.to_bits())))
                .map(|pl| pl.start)
                .fold(f64::INFINITY, f64::min);
            if !first && next_start < next_event && next_start < lambda_star {
                now = next_start.max(now);
                self.start_surgeries(day, now, &mut schedule, &instance, &week_ids, &mut in_progress, &mut attempted, &mut heap, &mut push);
                continue;
            }
            let t = if first { 0.0 } else { next_event };
            first = false;
            now = t;
            let mut day_over = false;
            while heap.peek().is_some_and(|e| e.at <= t + EPS) {
                let e = heap.pop().expect("peeked");
                match e.kind {
                    EventKind::Arrival => {
                        let p = arrivals[e.payload as usize];
                        week_ids.push(p.id);
                        let local = instance.push_patient(p.clone());
                        pending.push(Disruption { at: t, event: DisruptionEvent::NonElectiveArrival { patient: local } });
                        self.log(day, t, TraceEvent::Arrival { patient: p.id });
                    }
                    EventKind::SurgeryEnd => {
                        let local = PatientId(e.payload);
                        in_progress.retain(|&(p, _)| p != local);
                        let pl = *schedule.get(local).expect("started surgery is scheduled");
                        let expected = instance.patient(local).expected_duration;
                        let actual = self.actual[&week_ids[local.index()]];
                        instance.patients[local.index()].expected_duration = actual;
                        schedule.set_end(local, e.at);
                        let deviation = actual - expected;
                        let event = if deviation < 0.0 {
                            Some(DisruptionEvent::UnderTime { patient: local, room: pl.room, deviation })
                        } else if deviation > 0.0 {
                            Some(DisruptionEvent::OverTime { patient: local, room: pl.room, deviation })
                        } else {
                            None
                        };
                        if let Some(event) = event {
                            pending.push(Disruption { at: t, event });
                        }
                        self.log(day, t, TraceEvent::SurgeryEnd { patient: week_ids[local.index()], deviation });
                    }
                    EventKind::Tick => {}
                    EventKind::DayEnd => day_over = true,
                }
            }
            let uctx = UpdateContext {
                lambda: base.horizon.lambda,
                day_length: lambda_star,
                queued_nonelectives: ctx.backlog.len(),
            };
            if should_update(self.strategy, &pending, t, &uctx) {
                let clock = Clock::now();
                let record = run_update(
                    &mut schedule,
                    &instance,
                    &pending,
                    t,
                    self.strategy,
                    self.policy,
                    &mut ctx,
                    weekday,
                    self.config.verify,
                    &mut self.rng,
                )
                .map_err(|source| match source {
                    ReactError::Infeasible(report) => SimError::Infeasible { day, at: t, report },
                    ReactError::Policy(e) => SimError::Policy(e),
                    source => SimError::React { day, at: t, source },
                })?;
                self.result.update_latencies.push(clock.elapsed().as_secs_f64());
                self.result.updates += 1;
                pending.clear();
                if self.config.trace {
                    let reactions = record
                        .applied
                        .iter()
                        .map(|(d, r)| self.applied(d, *r, &week_ids))
                        .collect();
                    self.log(day, t, TraceEvent::Update { reactions });
                }
            }
            if day_over {
                break;
            }
            self.start_surgeries(day, now, &mut schedule, &instance, &week_ids, &mut in_progress, &mut attempted, &mut heap, &mut push);
        }

        // Surgeries still running at midnight finish tomorrow.
        let mut next = Carry {
            nonelective: Vec::new(),
            elective: Vec::new(),
            room_release: vec![0.0; base.rooms.len()],
            surgeon_release: vec![0.0; base.surgeons.len()],
        };
        for (local, end) in in_progress {
            let pl = *schedule.get(local).expect("running surgery is scheduled");
            instance.patients[local.index()].expected_duration = end - pl.start;
            schedule.set_end(local, end);
            let free = end + instance.patient(local).cleanup - lambda_star;
            let r = &mut next.room_release[pl.room.index()];
            *r = r.max(free);
            let h = &mut next.surgeon_release[pl.surgeon.index()];
            *h = h.max(free);
        }
        let mut realised = Schedule::new();
        for pl in schedule.placements() {
            if let Some(at) = schedule.locked_at(pl.patient) {
                realised.insert(*pl);
                realised.lock(pl.patient, at);
                if let Some(n) = schedule.notified_at(pl.patient) {
                    realised.notify(pl.patient, n);
                }
            }
        }
        for (i, p) in instance.patients.iter().enumerate() {
            let local = PatientId(i as u32);
            if realised.is_included(local) {
                if p.class == PatientClass::UnscheduledElective {
                    self.waiting.remove(&week_ids[i]);
                    self.result.add_electives += 1;
                }
                continue;
            }
            let mut p = p.clone();
            p.id = week_ids[i];
            match p.class {
                PatientClass::NonElective => {
                    p.arrival = p.arrival.map(|a| a - lambda_star);
                    next.nonelective.push(p);
                }
                PatientClass::ScheduledElective => {
                    p.due_date -= 1;
                    p.days_waiting += 1;
                    let slot = instance.mss_assignment.get(&local).copied().unwrap_or_else(|| {
                        let pl = schedule.get(local);
                        MssSlot {
                            room: pl.map_or(RoomId(0), |pl| pl.room),
                            surgeon: pl.map_or(p.eligible_surgeons[0], |pl| pl.surgeon),
                        }
                    });
                    next.elective.push((p, slot));
                }
                PatientClass::UnscheduledElective => {}
            }
        }
        for r in week.elective_requests.iter().filter(|r| r.day == day) {
            self.waiting.insert(r.patient.id, (r.patient.clone(), day));
        }

        let metrics = MetricsSnapshot {
            utilisation: utilisation(&realised, &instance),
            overtime: overtime(&realised, &instance),
            mean_nonelective_wait: crate::objective::mean_nonelective_wait(&realised, &instance),
            patients_treated: realised.len(),
        };
        let (sum, n) = nonelective_wait_sum(&realised, &instance);
        self.ne_wait.0 += sum;
        self.ne_wait.1 += n;
        let w = &mut self.result.weekly;
        w.utilisation += metrics.utilisation;
        w.overtime += metrics.overtime;
        w.patients_treated += metrics.patients_treated;
        let carried = next.nonelective.len() + next.elective.len();
        self.log(day, lambda_star, TraceEvent::DayEnd { metrics, carried_over: carried });
        if self.config.keep_days {
            self.result.days.push(DayRecord { day, instance, realised, week_ids, metrics });
        }
        Ok(next)
    }

    fn applied(&self, d: &Disruption, reaction: ReactionId, week_ids: &[PatientId]) -> AppliedReaction {
        use DisruptionEvent::*;
        let (patient, room) = match d.event {
            NonElectiveArrival { patient } => (Some(week_ids[patient.index()]), None),
            RoomBreakdown { room } | UnderTimeExpected { room } | OverTimeExpected { room } => (None, Some(room)),
            UnderTime { patient, room, .. } | OverTime { patient, room, .. } => (Some(week_ids[patient.index()]), Some(room)),
            // Cancelled patients never enter the day instance and keep their week id.
            Cancellation { patient, room } => (Some(patient), room),
        };
        AppliedReaction { disruption: d.kind(), reaction, patient, room }
    }

    /// Locks every surgery planned to start at `now` whose room and surgeon
    /// are free. A surgery blocked by an overrunning one stays unlocked; the
    /// overrun's repair moves it.
    #[allow(clippy::too_many_arguments)]
    fn start_surgeries(
        &mut self,
        day: u32,
        now: Instant,
        schedule: &mut Schedule,
        instance: &Instance,
        week_ids: &[PatientId],
        in_progress: &mut Vec<(PatientId, Instant)>,
        attempted: &mut HashSet<(PatientId, u64)>,
        heap: &mut BinaryHeap<Event>,
        push: &mut impl FnMut(&mut BinaryHeap<Event>, Instant, EventKind, u32),
    ) {
        let due: Vec<Placement> = schedule
            .movable()
            .filter(|pl| (pl.start - now).abs() <= EPS)
            .copied()
            .collect();
        for pl in due {
            attempted.insert((pl.patient, pl.start.to_bits()));
            let blocked = in_progress.iter().any(|&(p, _)| {
                let other = schedule.get(p).expect("running surgery is scheduled");
                other.room == pl.room || other.surgeon == pl.surgeon
            });
            if blocked {
                continue;
            }
            schedule.lock(pl.patient, now);
            let patient = instance.patient(pl.patient).clone();
            let mut week_patient = patient;
            week_patient.id = week_ids[pl.patient.index()];
            let actual = self.actual_duration(&week_patient);
            let end = pl.start + actual;
            in_progress.push((pl.patient, end));
            push(heap, end, EventKind::SurgeryEnd, pl.patient.0);
            self.log(
                day,
                now,
                TraceEvent::SurgeryStart { patient: week_patient.id, room: pl.room, surgeon: pl.surgeon },
            );
        }
    }
}

/// Patients known for `day` without simulating the days before it: the
/// day's planned electives that were not cancelled and the non-electives
/// arriving that day. Broken rooms are marked as not working.
pub fn day_subset(week: &WeekInstance, day: u32) -> Result<Instance, SimError> {
    week.validate().map_err(SimError::InvalidWeek)?;
    if day >= week.days {
        return Err(SimError::InvalidWeek(format!("day {day} is outside 0..{}", week.days)));
    }
    let base = &week.instance;
    let mut instance = Instance {
        horizon: base.horizon.clone(),
        rooms: base.rooms.clone(),
        surgeons: base.surgeons.clone(),
        specialties: base.specialties,
        patients: Vec::new(),
        mss_assignment: BTreeMap::new(),
    };
    for room in &mut instance.rooms {
        room.working = !week.breakdowns[day as usize].contains(&room.id);
    }
    for &p in &week.elective_days[day as usize] {
        if !week.cancellations[day as usize].contains(&p) {
            let local = instance.push_patient(base.patient(p).clone());
            instance.mss_assignment.insert(local, base.mss_assignment[&p]);
        }
    }
    for r in week.nonelective_requests.iter().filter(|r| r.day == day) {
        instance.push_patient(r.patient.clone());
    }
    Ok(instance)
}

/// Simulates one week under `strategy`. Everything random (actual
/// durations and sampled reactions) derives from `seed`; the duration of a
/// patient depends only on the seed and its week id, so all strategies see
/// the same realisations for the same seed.
pub fn simulate_week(
    week: &WeekInstance,
    policy: &ReactionPolicy,
    strategy: UpdateStrategy,
    seed: u64,
    config: &SimConfig,
) -> Result<SimulationResult, SimError> {
    policy.require(strategy)?;
    week.validate().map_err(SimError::InvalidWeek)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let waiting = week
        .instance
        .patients
        .iter()
        .filter(|p| p.class == PatientClass::UnscheduledElective)
        .map(|p| (p.id, (p.clone(), 0)))
        .collect();
    Simulation {
        week,
        policy,
        strategy,
        config,
        seed,
        rng,
        actual: BTreeMap::new(),
        waiting,
        result: SimulationResult::default(),
        ne_wait: (0.0, 0),
    }
    .run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instancegen::{generate_week, GenParams};

    fn quiet_params() -> GenParams {
        let mut p = GenParams {
            waiting_list_mean: 400.0,
            nonelective_request_rate: 0.0,
            elective_request_rate: 20.0,
            cancellation_prob: 0.0,
            breakdown_prob: 0.0,
            ..GenParams::default()
        };
        for d in &mut p.duration_lognormal {
            d[0].scale = 0.3;
            d[1].scale = 0.3;
        }
        p
    }

    fn exact(mut week: WeekInstance) -> WeekInstance {
        for s in &mut week.realization_scale {
            *s = [0.0, 0.0];
        }
        week
    }

    fn verified() -> SimConfig {
        SimConfig { verify: true, trace: true, keep_days: true, ..SimConfig::default() }
    }

    #[test]
    fn undisturbed_week_matches_initial_schedule() {
        let week = exact(generate_week(&quiet_params()).unwrap());
        let policy = ReactionPolicy::tuned();
        let r = simulate_week(&week, &policy, UpdateStrategy::UC, 1, &verified()).unwrap();
        assert_eq!(r.updates, 0);
        let mut util = 0.0;
        let mut treated = 0;
        for d in 0..week.days {
            let rec = &r.days[d as usize];
            let initial = block_schedule(&rec.instance, &[], 0.0).schedule;
            assert_eq!(initial.len(), rec.realised.len(), "day {d}");
            for pl in initial.placements() {
                assert_eq!(rec.realised.get(pl.patient), Some(pl));
            }
            util += utilisation(&initial, &rec.instance);
            treated += initial.len();
        }
        assert!((r.weekly.utilisation - util).abs() < 1e-9);
        assert_eq!(r.weekly.patients_treated, treated);
        assert!(r.untreated.is_empty());
    }

    #[test]
    fn arrival_under_continuous_updates_is_placed_at_once() {
        let mut week = exact(generate_week(&GenParams { weekdays: 1, days: 1, ..quiet_params() }).unwrap());
        let next = week.instance.patients.len() as u32;
        let p = Patient {
            id: PatientId(next),
            class: PatientClass::NonElective,
            specialty: crate::domain::SpecialtyId(0),
            expected_duration: 1.0,
            setup: 0.25,
            cleanup: 0.25,
            notice: None,
            arrival: Some(2.0),
            eligible_surgeons: vec![SurgeonId(0), SurgeonId(1)],
            urgency_category: 1,
            days_waiting: 0,
            due_date: 0,
        };
        week.nonelective_requests.push(crate::instancegen::Request { day: 0, at: 2.0, patient: p });
        let r = simulate_week(&week, &ReactionPolicy::tuned(), UpdateStrategy::UC, 3, &verified()).unwrap();
        let update = r.trace.iter().find(|e| matches!(e.event, TraceEvent::Update { .. })).unwrap();
        assert_eq!(update.at, 2.0);
        match &update.event {
            TraceEvent::Update { reactions } => {
                assert_eq!(reactions[0].disruption, DisruptionKind::D1);
                assert_eq!(reactions[0].reaction, ReactionId::R1);
            }
            _ => unreachable!(),
        }
        let rec = &r.days[0];
        let local = rec.week_ids.iter().position(|&w| w == PatientId(next)).unwrap();
        let start = rec.realised.get(PatientId(local as u32)).unwrap().start;
        // Reserved rooms are free all day.
        assert_eq!(start, 2.0);
    }

    #[test]
    fn disturbed_weeks_stay_feasible() {
        let params = GenParams { waiting_list_mean: 600.0, breakdown_prob: 0.05, cancellation_prob: 0.1, ..GenParams::default() };
        let week = generate_week(&params).unwrap();
        let policy = ReactionPolicy::tuned();
        for s in UpdateStrategy::ALL {
            let r = simulate_week(&week, &policy, s, 11, &verified()).unwrap();
            assert!(r.updates > 0, "{s}");
            // Only arrivals late on the final day may be left over.
            for p in &r.untreated {
                let req = week.nonelective_requests.iter().find(|q| q.patient.id == *p);
                assert!(req.is_some_and(|q| q.day == week.days - 1), "{s}: {p}");
            }
            for rec in &r.days {
                let occupied: f64 = rec.realised.placements().map(|pl| rec.instance.patient(pl.patient).footprint()).sum();
                assert!((rec.metrics.utilisation + rec.metrics.overtime - occupied).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn same_seed_same_outcome() {
        let week = generate_week(&GenParams { waiting_list_mean: 500.0, ..GenParams::default() }).unwrap();
        let policy = ReactionPolicy::tuned();
        let cfg = SimConfig { trace: true, ..SimConfig::default() };
        let a = simulate_week(&week, &policy, UpdateStrategy::UA, 9, &cfg).unwrap();
        let b = simulate_week(&week, &policy, UpdateStrategy::UA, 9, &cfg).unwrap();
        assert_eq!(a.weekly, b.weekly);
        assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn day_subset_holds_known_patients() {
        let week = generate_week(&GenParams { waiting_list_mean: 300.0, ..GenParams::default() }).unwrap();
        let inst = day_subset(&week, 0).unwrap();
        inst.validate().unwrap();
        let planned = week.elective_days[0].len() - week.cancellations[0].len();
        let arriving = week.nonelective_requests.iter().filter(|r| r.day == 0).count();
        assert_eq!(inst.patients.len(), planned + arriving);
        assert_eq!(inst.mss_assignment.len(), planned);
        assert!(day_subset(&week, week.days).is_err());
    }

    #[test]
    fn missing_policy_cell_is_refused() {
        let week = generate_week(&quiet_params()).unwrap();
        let policy = ReactionPolicy::from_json(r#"{"D1":{"UC":{"R1":1.0}}}"#, None).unwrap();
        let err = simulate_week(&week, &policy, UpdateStrategy::UC, 0, &SimConfig::default()).unwrap_err();
        assert!(err.to_string().contains("D2"), "{err}");
    }
}
