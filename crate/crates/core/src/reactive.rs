//! Disruptions, reactions and update triggers.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{
    check_feasibility, DomainError, FeasibilityReport, Instance, Instant, PatientClass, PatientId,
    Placement, RoomId, Schedule, TIME_EPS,
};
use crate::heuristics::{patient_bound, select_add_elective, SchedulingState, WaitingList};

#[allow(clippy::upper_case_acronyms)]
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DisruptionKind {
    D1,
    D2,
    D3,
    D4,
    D5,
    D6,
    D7,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ReactionId {
    R0,
    R1,
    R1a,
    R1b,
    R2,
}

impl ReactionId {
    pub const ALL: [ReactionId; 5] = [Self::R0, Self::R1, Self::R1a, Self::R1b, Self::R2];

    /// Index into a probability vector.
    pub fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ReactionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl DisruptionKind {
    pub const ALL: [DisruptionKind; 7] = [Self::D1, Self::D2, Self::D3, Self::D4, Self::D5, Self::D6, Self::D7];

    pub fn legal_reactions(self) -> &'static [ReactionId] {
        use ReactionId::*;
        match self {
            Self::D1 | Self::D5 | Self::D6 => &[R0, R1, R2],
            Self::D2 => &[R1, R2],
            Self::D3 | Self::D7 => &[R0, R1a, R1b, R2],
            Self::D4 => &[R1a, R1b, R2],
        }
    }

    pub fn is_legal(self, r: ReactionId) -> bool {
        self.legal_reactions().contains(&r)
    }

    /// D6 and D7 are only ever raised by the engine itself.
    pub fn is_derived(self) -> bool {
        matches!(self, Self::D6 | Self::D7)
    }

    pub fn next(self) -> Self {
        Self::ALL[(self as usize + 1) % Self::ALL.len()]
    }
}

impl fmt::Display for DisruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DisruptionEvent {
    NonElectiveArrival { patient: PatientId },
    RoomBreakdown { room: RoomId },
    /// `deviation` is actual minus expected duration (negative here).
    UnderTime { patient: PatientId, room: RoomId, deviation: f64 },
    OverTime { patient: PatientId, room: RoomId, deviation: f64 },
    Cancellation { patient: PatientId, room: Option<RoomId> },
    UnderTimeExpected { room: RoomId },
    OverTimeExpected { room: RoomId },
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disruption {
    pub at: Instant,
    pub event: DisruptionEvent,
}

impl Disruption {
    pub fn kind(&self) -> DisruptionKind {
        use DisruptionEvent::*;
        match self.event {
            NonElectiveArrival { .. } => DisruptionKind::D1,
            RoomBreakdown { .. } => DisruptionKind::D2,
            UnderTime { .. } => DisruptionKind::D3,
            OverTime { .. } => DisruptionKind::D4,
            Cancellation { .. } => DisruptionKind::D5,
            UnderTimeExpected { .. } => DisruptionKind::D6,
            OverTimeExpected { .. } => DisruptionKind::D7,
        }
    }
}

#[allow(clippy::upper_case_acronyms)]
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UpdateStrategy {
    UA,
    UC,
    UP1,
    UP2,
    UP3,
    UP4,
}

impl UpdateStrategy {
    pub const ALL: [UpdateStrategy; 6] = [Self::UP1, Self::UP2, Self::UP3, Self::UP4, Self::UA, Self::UC];

    /// Tick period of the periodic strategies.
    pub fn period(self) -> Option<f64> {
        match self {
            Self::UP1 | Self::UP3 => Some(0.25),
            Self::UP2 | Self::UP4 => Some(0.5),
            _ => None,
        }
    }

    /// Periodic ticks only during opening hours.
    pub fn in_hours_only(self) -> bool {
        matches!(self, Self::UP3 | Self::UP4)
    }

    /// Whether `t` (within a day) is one of this strategy's ticks.
    pub fn is_tick(self, t: Instant, lambda: f64, day_length: f64) -> bool {
        let Some(period) = self.period() else {
            return false;
        };
        let limit = if self.in_hours_only() { lambda } else { day_length };
        let k = (t / period).round();
        k >= 1.0 && (t - k * period).abs() < 1e-9 && t <= limit + 1e-9
    }

    /// Tick times within one day.
    pub fn ticks(self, lambda: f64, day_length: f64) -> Vec<Instant> {
        let Some(period) = self.period() else {
            return Vec::new();
        };
        let limit = if self.in_hours_only() { lambda } else { day_length };
        (1..).map(|k| k as f64 * period).take_while(|&t| t <= limit + 1e-9).collect()
    }
}

impl fmt::Display for UpdateStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for UpdateStrategy {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| PolicyError::UnknownStrategy(s.to_string()))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("policy has no probabilities for disruption {kind} under {strategy}")]
    Missing {
        strategy: UpdateStrategy,
        kind: DisruptionKind,
    },
    #[error("reaction {reaction} is not available for disruption {kind}")]
    Illegal {
        kind: DisruptionKind,
        reaction: ReactionId,
    },
    #[error("invalid probabilities for {kind} under {strategy}: {message}")]
    Invalid {
        strategy: UpdateStrategy,
        kind: DisruptionKind,
        message: String,
    },
    #[error("unknown update strategy {0:?} (expected one of UP1, UP2, UP3, UP4, UA, UC)")]
    UnknownStrategy(String),
    #[error("malformed policy JSON: {0}")]
    Json(String),
}

/// Probability of each reaction per (disruption, update strategy) pair.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct ReactionPolicy {
    cells: BTreeMap<(DisruptionKind, UpdateStrategy), [f64; 5]>,
}

type Table = BTreeMap<DisruptionKind, BTreeMap<UpdateStrategy, BTreeMap<ReactionId, f64>>>;

impl ReactionPolicy {
    /// Normalises and stores one probability vector.
    pub fn set(
        &mut self,
        strategy: UpdateStrategy,
        kind: DisruptionKind,
        weights: &[(ReactionId, f64)],
    ) -> Result<(), PolicyError> {
        let invalid = |message: String| PolicyError::Invalid {
            strategy,
            kind,
            message,
        };
        let mut v = [0.0; 5];
        for &(r, w) in weights {
            if !w.is_finite() || w < 0.0 {
                return Err(invalid(format!("weight {w} for {r}")));
            }
            if w > 0.0 && !kind.is_legal(r) {
                return Err(PolicyError::Illegal { kind, reaction: r });
            }
            v[r.slot()] += w;
        }
        let total: f64 = v.iter().sum();
        if total <= 0.0 {
            return Err(invalid("all weights are zero".into()));
        }
        for x in &mut v {
            *x /= total;
        }
        self.cells.insert((kind, strategy), v);
        Ok(())
    }

    pub fn get(&self, strategy: UpdateStrategy, kind: DisruptionKind) -> Option<&[f64; 5]> {
        self.cells.get(&(kind, strategy))
    }

    pub fn probability(&self, strategy: UpdateStrategy, kind: DisruptionKind, r: ReactionId) -> f64 {
        self.get(strategy, kind).map_or(0.0, |v| v[r.slot()])
    }

    /// Legal reactions and their probabilities.
    pub fn vector(&self, strategy: UpdateStrategy, kind: DisruptionKind) -> Option<Vec<(ReactionId, f64)>> {
        self.get(strategy, kind)
            .map(|v| kind.legal_reactions().iter().map(|&r| (r, v[r.slot()])).collect())
    }

    /// Errors with the first missing cell for `strategy`.
    pub fn require(&self, strategy: UpdateStrategy) -> Result<(), PolicyError> {
        for kind in DisruptionKind::ALL {
            if self.get(strategy, kind).is_none() {
                return Err(PolicyError::Missing { strategy, kind });
            }
        }
        Ok(())
    }

    pub fn strategies(&self) -> Vec<UpdateStrategy> {
        let mut v: Vec<UpdateStrategy> = self.cells.keys().map(|&(_, s)| s).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn sample(
        &self,
        strategy: UpdateStrategy,
        kind: DisruptionKind,
        rng: &mut impl Rng,
    ) -> Result<ReactionId, PolicyError> {
        let v = self.get(strategy, kind).ok_or(PolicyError::Missing { strategy, kind })?;
        let legal = kind.legal_reactions();
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &r in legal {
            acc += v[r.slot()];
            if u < acc {
                return Ok(r);
            }
        }
        // Rounding left a sliver above the last cumulative sum.
        Ok(*legal.iter().rev().find(|r| v[r.slot()] > 0.0).unwrap_or(&legal[legal.len() - 1]))
    }

    /// Starting point of tuning: do nothing wherever allowed, otherwise
    /// uniform over the legal repairs.
    pub fn prior_vector(kind: DisruptionKind) -> Vec<(ReactionId, f64)> {
        if kind.is_legal(ReactionId::R0) {
            vec![(ReactionId::R0, 1.0)]
        } else {
            kind.legal_reactions().iter().map(|&r| (r, 1.0)).collect()
        }
    }

    pub fn do_nothing_prior(strategies: &[UpdateStrategy]) -> Self {
        let mut p = Self::default();
        for &s in strategies {
            for k in DisruptionKind::ALL {
                p.set(s, k, &Self::prior_vector(k)).expect("prior is legal");
            }
        }
        p
    }

    /// Tuned probabilities for all six strategies.
    pub fn tuned() -> Self {
        use DisruptionKind::*;
        use ReactionId::*;
        use UpdateStrategy::*;
        let third = 1.0 / 3.0;
        let rows: Vec<(DisruptionKind, UpdateStrategy, Vec<(ReactionId, f64)>)> = vec![
            (D1, UA, vec![(R0, 1.0)]),
            (D1, UC, vec![(R1, 1.0)]),
            (D1, UP1, vec![(R0, 1.0)]),
            (D1, UP2, vec![(R0, 1.0)]),
            (D1, UP3, vec![(R0, 1.0)]),
            (D1, UP4, vec![(R0, 1.0)]),
            (D2, UA, vec![(R2, 1.0)]),
            (D2, UC, vec![(R2, 1.0)]),
            (D2, UP1, vec![(R1, 1.0)]),
            (D2, UP2, vec![(R1, 1.0)]),
            (D2, UP3, vec![(R2, 1.0)]),
            (D2, UP4, vec![(R1, 0.5), (R2, 0.5)]),
            (D3, UA, vec![(R2, 1.0)]),
            (D3, UC, vec![(R0, 0.5), (R2, 0.5)]),
            (D3, UP1, vec![(R1a, 1.0)]),
            (D3, UP2, vec![(R2, 1.0)]),
            (D3, UP3, vec![(R0, 0.5), (R1a, 0.5)]),
            (D3, UP4, vec![(R1a, 1.0)]),
            (D4, UA, vec![(R1a, third), (R1b, third), (R2, third)]),
            (D4, UC, vec![(R1a, 0.5), (R1b, 0.25), (R2, 0.25)]),
            (D4, UP1, vec![(R1a, 1.0)]),
            (D4, UP2, vec![(R1a, third), (R1b, third), (R2, third)]),
            (D4, UP3, vec![(R1a, 1.0)]),
            (D4, UP4, vec![(R1a, 1.0)]),
            (D5, UA, vec![(R0, 0.5), (R1, 0.5)]),
            (D5, UC, vec![(R0, 1.0)]),
            (D5, UP1, vec![(R1, 1.0)]),
            (D5, UP2, vec![(R1, 1.0)]),
            (D5, UP3, vec![(R1, 1.0)]),
            (D5, UP4, vec![(R1, 1.0)]),
            (D6, UA, vec![(R1, 1.0)]),
            (D6, UC, vec![(R0, 0.5), (R1, 0.5)]),
            (D6, UP1, vec![(R0, 0.25), (R1, 0.5), (R2, 0.25)]),
            (D6, UP2, vec![(R1, 0.5), (R2, 0.5)]),
            (D6, UP3, vec![(R1, 0.5), (R2, 0.5)]),
            (D6, UP4, vec![(R0, 0.5), (R1, 0.5)]),
            (D7, UA, vec![(R1b, 1.0)]),
            (D7, UC, vec![(R1b, 1.0)]),
            (D7, UP1, vec![(R0, 1.0)]),
            (D7, UP2, vec![(R1a, 1.0)]),
            (D7, UP3, vec![(R2, 1.0)]),
            (D7, UP4, vec![(R0, 1.0)]),
        ];
        let mut p = Self::default();
        for (k, s, w) in rows {
            p.set(s, k, &w).expect("tuned table is legal");
        }
        p
    }

    fn to_table(&self) -> Table {
        let mut t = Table::new();
        for (&(kind, strategy), v) in &self.cells {
            let cell = kind
                .legal_reactions()
                .iter()
                .filter(|r| v[r.slot()] > 0.0)
                .map(|&r| (r, v[r.slot()]))
                .collect();
            t.entry(kind).or_default().insert(strategy, cell);
        }
        t
    }

    /// Table-shaped JSON: disruption, then strategy, then reaction weights.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_table()).expect("policy serialises")
    }

    /// Parses table-shaped JSON. Missing cells are taken from `fill` when
    /// given; otherwise the policy only covers the cells present.
    pub fn from_json(text: &str, fill: Option<&ReactionPolicy>) -> Result<Self, PolicyError> {
        let table: Table = serde_json::from_str(text).map_err(|e| PolicyError::Json(e.to_string()))?;
        let mut p = fill.cloned().unwrap_or_default();
        for (kind, row) in table {
            for (strategy, cell) in row {
                let weights: Vec<(ReactionId, f64)> = cell.into_iter().collect();
                p.set(strategy, kind, &weights)?;
            }
        }
        Ok(p)
    }
}

/// Whatever the update decision needs besides the pending disruptions.
#[derive(Copy, Clone, Debug)]
pub struct UpdateContext {
    pub lambda: f64,
    pub day_length: f64,
    /// Non-electives already waiting from earlier do-nothing reactions.
    pub queued_nonelectives: usize,
}

/// Whether the strategy triggers a schedule update at `now`.
pub fn should_update(strategy: UpdateStrategy, pending: &[Disruption], now: Instant, ctx: &UpdateContext) -> bool {
    let any = |k: DisruptionKind| pending.iter().any(|d| d.kind() == k);
    match strategy {
        UpdateStrategy::UC => !pending.is_empty(),
        UpdateStrategy::UA => {
            let waiting = pending.iter().filter(|d| d.kind() == DisruptionKind::D1).count() + ctx.queued_nonelectives;
            let long_under = pending.iter().any(|d| {
                matches!(d.event, DisruptionEvent::UnderTime { deviation, .. } if -deviation > 0.5)
            });
            waiting >= 3
                || any(DisruptionKind::D2)
                || long_under
                || any(DisruptionKind::D4)
                || any(DisruptionKind::D5)
        }
        periodic => {
            any(DisruptionKind::D2)
                || any(DisruptionKind::D4)
                || periodic.is_tick(now, ctx.lambda, ctx.day_length)
        }
    }
}

/// Patient order used when placements are rebuilt from scratch.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RebuildOrder {
    /// Non-electives by arrival, then scheduled electives by due date.
    #[default]
    NonElectivesFirst,
    /// Scheduled electives by due date, then non-electives by arrival.
    ElectivesFirst,
    /// The order of the current planned starts.
    CurrentStart,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReactError {
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("patients {0:?} have no compatible room and surgeon")]
    Unplaceable(Vec<PatientId>),
    #[error("schedule infeasible after update:\n{0}")]
    Infeasible(FeasibilityReport),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// Mutable side information the reactions read and update.
#[derive(Clone, Debug, Default)]
pub struct ReactContext {
    /// Add-electives that may be booked today. Empty on weekends.
    pub waiting: WaitingList,
    /// Non-electives whose arrival was answered with do-nothing.
    pub backlog: Vec<PatientId>,
    pub rebuild_order: RebuildOrder,
}

fn sort_for_rebuild(ids: &mut [PatientId], instance: &Instance, schedule_before: &Schedule, order: RebuildOrder) {
    let class_rank = |c: PatientClass| match (order, c) {
        (RebuildOrder::ElectivesFirst, PatientClass::ScheduledElective) => 0,
        (RebuildOrder::ElectivesFirst, PatientClass::NonElective) => 1,
        (_, PatientClass::NonElective) => 0,
        (_, PatientClass::ScheduledElective) => 1,
        (_, PatientClass::UnscheduledElective) => 2,
    };
    let key = |p: PatientId| {
        let pat = instance.patient(p);
        let within = match pat.class {
            PatientClass::NonElective => pat.arrival.unwrap_or(0.0),
            _ => pat.due_date as f64,
        };
        (class_rank(pat.class), within)
    };
    match order {
        RebuildOrder::CurrentStart => ids.sort_by(|&a, &b| {
            let s = |p| schedule_before.get(p).map_or(f64::INFINITY, |pl: &Placement| pl.start);
            s(a).total_cmp(&s(b)).then(a.cmp(&b))
        }),
        _ => ids.sort_by(|&a, &b| {
            let (ka, kb) = (key(a), key(b));
            ka.0.cmp(&kb.0).then(ka.1.total_cmp(&kb.1)).then(a.cmp(&b))
        }),
    }
}

struct Work<'a> {
    instance: &'a Instance,
    now: Instant,
    schedule: Schedule,
    ctx: ReactContext,
}

impl<'a> Work<'a> {
    fn unlocked_where(&self, f: impl Fn(&Placement) -> bool) -> Vec<PatientId> {
        self.schedule.movable().filter(|p| f(p)).map(|p| p.patient).collect()
    }

    /// Removes the given unlocked placements and re-places them (plus
    /// `extra`) with the open heuristic. Add-electives that no longer fit
    /// before closing go back to the waiting list.
    fn rebuild(&mut self, mut ids: Vec<PatientId>, extra: &[PatientId]) -> Vec<PatientId> {
        let before = self.schedule.clone();
        for &p in &ids {
            self.schedule.remove(p);
        }
        ids.extend_from_slice(extra);
        ids.sort();
        ids.dedup();
        sort_for_rebuild(&mut ids, self.instance, &before, self.ctx.rebuild_order);
        let mut state = SchedulingState::new(self.instance, std::mem::take(&mut self.schedule), self.now);
        let mut unplaced = Vec::new();
        let lambda = self.instance.horizon.lambda;
        for p in ids {
            let pat = self.instance.patient(p);
            match state.best_choice(self.instance, p, |_| true) {
                Some(c) if pat.class == PatientClass::UnscheduledElective && c.start + pat.expected_duration > lambda + TIME_EPS => {
                    state.schedule.clear_notice(p);
                    self.ctx.waiting.insert(self.instance, p);
                }
                Some(c) => {
                    state.place(self.instance, p, c);
                }
                None if pat.class == PatientClass::UnscheduledElective => {
                    state.schedule.clear_notice(p);
                    self.ctx.waiting.insert(self.instance, p);
                }
                None => unplaced.push(p),
            }
        }
        self.schedule = state.into_schedule();
        unplaced
    }

    fn rebuild_all(&mut self, extra: &[PatientId]) -> Vec<PatientId> {
        let ids = self.unlocked_where(|_| true);
        self.rebuild(ids, extra)
    }

    /// Moves the room's unlocked surgeries earlier, in order, as far as the
    /// room, the surgeons' other surgeries and the class bounds allow.
    fn shift_earlier(&mut self, room: RoomId) {
        let timeline = self.schedule.room_timeline(room);
        for pl in timeline {
            if self.schedule.is_locked(pl.patient) {
                continue;
            }
            let current = *self.schedule.get(pl.patient).expect("placement exists");
            let pat = self.instance.patient(pl.patient);
            let mut z = patient_bound(self.instance, &self.schedule, pl.patient, self.now)
                .max(self.instance.room(room).release_time)
                .max(self.instance.surgeon(pl.surgeon).release_time);
            for other in self.schedule.placements() {
                if other.patient == pl.patient || other.start > current.start {
                    continue;
                }
                if other.room == room || other.surgeon == pl.surgeon {
                    z = z.max(other.end + self.instance.patient(other.patient).cleanup + pat.setup);
                }
            }
            if z < current.start {
                self.schedule.set_start(pl.patient, z);
            }
        }
    }

    /// Pushes unlocked surgeries later, in start order, until every room and
    /// surgeon gap holds and nothing starts before `now`. Add-electives that
    /// would then run past closing are returned to the waiting list.
    fn legalize(&mut self) {
        let mut unlocked: Vec<Placement> = self.schedule.movable().copied().collect();
        unlocked.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.patient.cmp(&b.patient)));
        let mut base = self.schedule.clone();
        for pl in &unlocked {
            base.remove(pl.patient);
        }
        let mut state = SchedulingState::new(self.instance, base, self.now);
        let lambda = self.instance.horizon.lambda;
        for pl in unlocked {
            let pat = self.instance.patient(pl.patient);
            let start = state
                .earliest_start(self.instance, pl.patient, pl.room, pl.surgeon)
                .max(pl.start);
            if pat.class == PatientClass::UnscheduledElective && start + pat.expected_duration > lambda + TIME_EPS {
                state.schedule.clear_notice(pl.patient);
                self.ctx.waiting.insert(self.instance, pl.patient);
                continue;
            }
            state.place(self.instance, pl.patient, crate::heuristics::Choice { room: pl.room, surgeon: pl.surgeon, start });
        }
        self.schedule = state.into_schedule();
    }

    fn translate_room(&mut self, room: RoomId, by: f64) {
        let ids = self.unlocked_where(|p| p.room == room);
        for p in ids {
            let start = self.schedule.get(p).expect("placement exists").start;
            self.schedule.set_start(p, start + by);
        }
        self.legalize();
    }

    fn append_add_elective(&mut self, room: Option<RoomId>) {
        let state = SchedulingState::new(self.instance, std::mem::take(&mut self.schedule), self.now);
        let pick = select_add_elective(&self.ctx.waiting, &state, self.instance, room);
        let mut state = state;
        if let Some((p, c)) = pick {
            self.ctx.waiting.remove(self.instance, p);
            state.schedule.notify(p, self.now);
            state.place(self.instance, p, c);
        }
        self.schedule = state.into_schedule();
    }

    fn apply(&mut self, d: &Disruption, r: ReactionId) -> Vec<PatientId> {
        use DisruptionEvent::*;
        use ReactionId::*;
        match (d.event, r) {
            (_, R2) => {
                let extra: Vec<PatientId> = match d.event {
                    NonElectiveArrival { patient } if !self.schedule.is_included(patient) => vec![patient],
                    _ => Vec::new(),
                };
                self.ctx.backlog.retain(|p| !extra.contains(p));
                let unplaced = self.rebuild_all(&extra);
                if let UnderTimeExpected { .. } = d.event {
                    self.append_add_elective(None);
                }
                unplaced
            }
            (NonElectiveArrival { patient }, R0) => {
                if !self.schedule.is_included(patient) && !self.ctx.backlog.contains(&patient) {
                    self.ctx.backlog.push(patient);
                }
                Vec::new()
            }
            (NonElectiveArrival { patient }, R1) => {
                self.ctx.backlog.retain(|&p| p != patient);
                if self.schedule.is_included(patient) {
                    return Vec::new();
                }
                self.rebuild(Vec::new(), &[patient])
            }
            (RoomBreakdown { room }, R1) => {
                let ids = self.unlocked_where(|p| p.room == room);
                self.rebuild(ids, &[])
            }
            (UnderTime { room, .. }, R1a) | (Cancellation { room: Some(room), .. }, R1) => {
                self.shift_earlier(room);
                Vec::new()
            }
            (Cancellation { room: None, .. }, R1) => Vec::new(),
            (OverTime { room, deviation, .. }, R1a) => {
                self.translate_room(room, deviation.max(0.0));
                Vec::new()
            }
            (UnderTime { patient, room, .. } | OverTime { patient, room, .. }, R1b) => {
                let surgeon = self.schedule.get(patient).map(|p| p.surgeon);
                let ids = self.unlocked_where(|p| p.room == room || Some(p.surgeon) == surgeon);
                self.rebuild(ids, &[])
            }
            (UnderTimeExpected { room }, R1) => {
                self.append_add_elective(Some(room));
                Vec::new()
            }
            (OverTimeExpected { room }, R1a | R1b) => {
                let surgeons: Vec<_> = self.schedule.movable().filter(|p| p.room == room).map(|p| p.surgeon).collect();
                let ids = self.unlocked_where(|p| p.room == room || surgeons.contains(&p.surgeon));
                self.rebuild(ids, &[])
            }
            (_, R0) => Vec::new(),
            _ => unreachable!("legality checked before dispatch"),
        }
    }
}

/// Applies one reaction to a copy of `schedule`.
///
/// Started surgeries are never touched. If a mandatory patient cannot be
/// placed the reaction escalates to a full rebuild, and fails if that does
/// not help either. `ctx` is only updated on success.
pub fn react(
    schedule: &Schedule,
    disruption: &Disruption,
    reaction: ReactionId,
    instance: &Instance,
    now: Instant,
    ctx: &mut ReactContext,
) -> Result<Schedule, ReactError> {
    let kind = disruption.kind();
    if !kind.is_legal(reaction) {
        return Err(PolicyError::Illegal { kind, reaction }.into());
    }
    let mut w = Work {
        instance,
        now,
        schedule: schedule.clone(),
        ctx: ctx.clone(),
    };
    let unplaced = w.apply(disruption, reaction);
    if !unplaced.is_empty() {
        let mut w2 = Work {
            instance,
            now,
            schedule: schedule.clone(),
            ctx: ctx.clone(),
        };
        let unplaced = w2.apply(disruption, ReactionId::R2);
        if !unplaced.is_empty() {
            return Err(ReactError::Unplaceable(unplaced));
        }
        w = w2;
    }
    *ctx = w.ctx;
    Ok(w.schedule)
}

/// Places every queued non-elective at its earliest start.
pub fn drain_backlog(schedule: &Schedule, instance: &Instance, now: Instant, ctx: &mut ReactContext) -> Schedule {
    if ctx.backlog.is_empty() {
        return schedule.clone();
    }
    let mut queue = std::mem::take(&mut ctx.backlog);
    queue.sort_by(|&a, &b| {
        let g = |p: PatientId| instance.patient(p).arrival.unwrap_or(0.0);
        g(a).total_cmp(&g(b)).then(a.cmp(&b))
    });
    let mut state = SchedulingState::new(instance, schedule.clone(), now);
    for p in queue {
        if state.schedule.is_included(p) {
            continue;
        }
        match state.best_choice(instance, p, |_| true) {
            Some(c) => {
                state.place(instance, p, c);
            }
            None => ctx.backlog.push(p),
        }
    }
    state.into_schedule()
}

/// Expected overtime (D7) and expected idle time (D6) per room.
///
/// D7 is raised for a room whose last surgery, including cleanup, runs past
/// closing and has not started yet. D6 is raised for a working room when an
/// add-elective from `waiting` could be appended there before closing.
pub fn detect_derived(
    schedule: &Schedule,
    instance: &Instance,
    now: Instant,
    waiting: Option<&WaitingList>,
) -> Vec<Disruption> {
    let lambda = instance.horizon.lambda;
    let mut last: Vec<Option<&Placement>> = vec![None; instance.rooms.len()];
    for pl in schedule.placements() {
        let slot = &mut last[pl.room.index()];
        let end = |p: &Placement| p.end + instance.patient(p.patient).cleanup;
        if slot.is_none_or(|q| end(pl) > end(q)) {
            *slot = Some(pl);
        }
    }
    let mut out = Vec::new();
    for (r, pl) in last.iter().enumerate() {
        if let Some(pl) = pl {
            let end = pl.end + instance.patient(pl.patient).cleanup;
            if end > lambda + TIME_EPS && !schedule.is_locked(pl.patient) {
                out.push(Disruption {
                    at: now,
                    event: DisruptionEvent::OverTimeExpected { room: RoomId(r as u32) },
                });
            }
        }
    }
    if let Some(waiting) = waiting {
        if !waiting.is_empty() && now < lambda {
            let state = SchedulingState::new(instance, schedule.clone(), now);
            for room in instance.rooms.iter().filter(|r| r.working) {
                if select_add_elective(waiting, &state, instance, Some(room.id)).is_some() {
                    out.push(Disruption {
                        at: now,
                        event: DisruptionEvent::UnderTimeExpected { room: room.id },
                    });
                }
            }
        }
    }
    out
}

/// Result of one update pass.
#[derive(Clone, Debug, Default)]
pub struct UpdateRecord {
    pub applied: Vec<(Disruption, ReactionId)>,
}

/// One scheduling pass: queued non-electives first, then a sampled reaction
/// per pending disruption, then one round of derived disruptions.
#[allow(clippy::too_many_arguments)]
pub fn run_update(
    schedule: &mut Schedule,
    instance: &Instance,
    pending: &[Disruption],
    now: Instant,
    strategy: UpdateStrategy,
    policy: &ReactionPolicy,
    ctx: &mut ReactContext,
    add_electives_allowed: bool,
    verify: bool,
    rng: &mut impl Rng,
) -> Result<UpdateRecord, ReactError> {
    let mut record = UpdateRecord::default();
    *schedule = drain_backlog(schedule, instance, now, ctx);
    for d in pending {
        let r = policy.sample(strategy, d.kind(), rng)?;
        *schedule = react(schedule, d, r, instance, now, ctx)?;
        record.applied.push((*d, r));
    }
    let waiting = add_electives_allowed.then_some(&ctx.waiting);
    let derived = detect_derived(schedule, instance, now, waiting);
    for d in derived {
        let r = policy.sample(strategy, d.kind(), rng)?;
        *schedule = react(schedule, &d, r, instance, now, ctx)?;
        record.applied.push((d, r));
    }
    if verify {
        let mut report = check_feasibility(schedule, instance)?;
        // Queued non-electives are known but deliberately not yet placed.
        report
            .violations
            .retain(|v| !(v.constraint == 32 && v.patients.iter().all(|p| ctx.backlog.contains(p))));
        if !report.is_feasible() {
            return Err(ReactError::Infeasible(report));
        }
    }
    Ok(record)
}
