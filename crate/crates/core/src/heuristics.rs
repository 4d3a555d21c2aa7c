//! Constructive schedule builders: modified block scheduling for the start of
//! the day and open scheduling for repairs.

use std::cmp::Reverse;

use crate::domain::{
    Instance, Instant, PatientClass, PatientId, Placement, RoomId, Schedule, SpecialtyId,
    SurgeonId,
};

/// Class bound of a patient at time `now`. An add-elective's notice runs
/// from its booking time, or from `now` if it has not been booked yet.
pub fn patient_bound(instance: &Instance, schedule: &Schedule, patient: PatientId, now: Instant) -> Instant {
    let p = instance.patient(patient);
    let h = &instance.horizon;
    let class_bound = match p.class {
        PatientClass::UnscheduledElective => {
            let anchor = schedule.notified_at(patient).unwrap_or(now);
            h.tau.max(anchor) + p.notice.unwrap_or(0.0)
        }
        _ => p.class_lower_bound(h),
    };
    class_bound.max(now)
}

/// A schedule plus the per-room and per-surgeon release cursors used to
/// append in constant time.
#[derive(Clone, Debug)]
pub struct SchedulingState {
    pub schedule: Schedule,
    pub now: Instant,
    room_ready: Vec<Instant>,
    surgeon_ready: Vec<Instant>,
}

/// Where and when a patient would go.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Choice {
    pub room: RoomId,
    pub surgeon: SurgeonId,
    pub start: Instant,
}

impl SchedulingState {
    pub fn new(instance: &Instance, schedule: Schedule, now: Instant) -> Self {
        let mut s = Self {
            schedule,
            now,
            room_ready: Vec::new(),
            surgeon_ready: Vec::new(),
        };
        s.recompute(instance);
        s
    }

    pub fn empty(instance: &Instance, now: Instant) -> Self {
        Self::new(instance, Schedule::new(), now)
    }

    /// Rebuilds the cursors from the placements.
    pub fn recompute(&mut self, instance: &Instance) {
        self.room_ready = vec![f64::NEG_INFINITY; instance.rooms.len()];
        self.surgeon_ready = vec![f64::NEG_INFINITY; instance.surgeons.len()];
        for pl in self.schedule.placements() {
            let free = pl.end + instance.patient(pl.patient).cleanup;
            let r = &mut self.room_ready[pl.room.index()];
            *r = r.max(free);
            let h = &mut self.surgeon_ready[pl.surgeon.index()];
            *h = h.max(free);
        }
    }

    pub fn cursors_consistent(&self, instance: &Instance) -> bool {
        let fresh = Self::new(instance, self.schedule.clone(), self.now);
        fresh.room_ready == self.room_ready && fresh.surgeon_ready == self.surgeon_ready
    }

    /// When the room is free of everything placed so far (after cleanup).
    pub fn room_ready(&self, room: RoomId) -> Instant {
        self.room_ready[room.index()]
    }

    pub fn surgeon_ready(&self, surgeon: SurgeonId) -> Instant {
        self.surgeon_ready[surgeon.index()]
    }

    /// Start bound that does not depend on the chosen room or surgeon.
    pub fn patient_bound(&self, instance: &Instance, patient: PatientId) -> Instant {
        patient_bound(instance, &self.schedule, patient, self.now)
    }

    pub fn earliest_start(
        &self,
        instance: &Instance,
        patient: PatientId,
        room: RoomId,
        surgeon: SurgeonId,
    ) -> Instant {
        let setup = instance.patient(patient).setup;
        self.patient_bound(instance, patient)
            .max(instance.room(room).release_time)
            .max(instance.surgeon(surgeon).release_time)
            .max(self.room_ready(room) + setup)
            .max(self.surgeon_ready(surgeon) + setup)
    }

    /// Earliest (start, room, surgeon) over compatible combinations, ties to
    /// the lowest room id and then the lowest surgeon id.
    pub fn best_choice(
        &self,
        instance: &Instance,
        patient: PatientId,
        room_ok: impl Fn(RoomId) -> bool,
    ) -> Option<Choice> {
        let p = instance.patient(patient);
        let bound = self.patient_bound(instance, patient);
        let mut best: Option<Choice> = None;
        for room in &instance.rooms {
            if !room.working || !room.equipped_for(p.specialty) || !room_ok(room.id) {
                continue;
            }
            let room_bound = bound.max(room.release_time).max(self.room_ready(room.id) + p.setup);
            if best.is_some_and(|b| b.start <= room_bound) {
                continue;
            }
            for &h in &p.eligible_surgeons {
                let start = room_bound
                    .max(instance.surgeon(h).release_time)
                    .max(self.surgeon_ready(h) + p.setup);
                if best.is_none_or(|b| start < b.start) {
                    best = Some(Choice {
                        room: room.id,
                        surgeon: h,
                        start,
                    });
                }
            }
        }
        best
    }

    pub fn place(&mut self, instance: &Instance, patient: PatientId, choice: Choice) -> Placement {
        let p = instance.patient(patient);
        let placement = Placement {
            patient,
            room: choice.room,
            surgeon: choice.surgeon,
            start: choice.start,
            end: choice.start + p.expected_duration,
        };
        self.schedule.insert(placement);
        let free = placement.end + p.cleanup;
        let r = &mut self.room_ready[choice.room.index()];
        *r = r.max(free);
        let h = &mut self.surgeon_ready[choice.surgeon.index()];
        *h = h.max(free);
        debug_assert!(self.cursors_consistent(instance));
        placement
    }

    pub fn into_schedule(self) -> Schedule {
        self.schedule
    }
}

/// A built schedule and the patients that could not be placed anywhere.
#[derive(Clone, Debug)]
pub struct Built {
    pub schedule: Schedule,
    pub unplaced: Vec<PatientId>,
}

/// Appends each patient in order at its earliest start over all compatible
/// (room, surgeon) pairs. Returns the patients without any compatible pair.
pub fn open_schedule(
    patients: &[PatientId],
    state: &mut SchedulingState,
    instance: &Instance,
) -> Vec<PatientId> {
    let mut unplaced = Vec::new();
    for &p in patients {
        match state.best_choice(instance, p, |_| true) {
            Some(c) => {
                state.place(instance, p, c);
            }
            None => unplaced.push(p),
        }
    }
    unplaced
}

fn by_due_date(instance: &Instance, ids: &mut [PatientId]) {
    ids.sort_by_key(|&p| (instance.patient(p).due_date, p));
}

/// Initial schedule of the day.
///
/// 1. Working rooms in id order receive their pre-assigned electives by due
///    date, each with its pre-assigned surgeon.
/// 2. Electives planned for a broken room go to any compatible room.
/// 3. Queued non-electives, longest waiting first, take the earliest start
///    in the rooms reserved for their specialty while those rooms still have
///    time before closing.
/// 4. Remaining non-electives take the pair with the earliest start.
pub fn block_schedule(instance: &Instance, nonelective_queue: &[PatientId], now: Instant) -> Built {
    let mut state = SchedulingState::empty(instance, now);
    let mut unplaced = Vec::new();
    let lambda = instance.horizon.lambda;

    let mut displaced = Vec::new();
    for room in &instance.rooms {
        let mut planned: Vec<PatientId> = instance
            .mss_assignment
            .iter()
            .filter(|(_, slot)| slot.room == room.id)
            .map(|(&p, _)| p)
            .collect();
        by_due_date(instance, &mut planned);
        if !room.working {
            displaced.extend(planned);
            continue;
        }
        for p in planned {
            let surgeon = instance.mss_assignment[&p].surgeon;
            let start = state.earliest_start(instance, p, room.id, surgeon);
            state.place(instance, p, Choice { room: room.id, surgeon, start });
        }
    }
    // Scheduled electives without a plan entry are treated like displaced ones.
    displaced.extend(
        instance
            .patients_of(PatientClass::ScheduledElective)
            .map(|p| p.id)
            .filter(|p| !instance.mss_assignment.contains_key(p)),
    );
    unplaced.extend(open_schedule(&displaced, &mut state, instance));

    let mut queue: Vec<PatientId> = nonelective_queue.to_vec();
    queue.sort_by(|&a, &b| {
        let (pa, pb) = (instance.patient(a), instance.patient(b));
        pa.arrival
            .unwrap_or(0.0)
            .total_cmp(&pb.arrival.unwrap_or(0.0))
            .then(a.cmp(&b))
    });
    let mut leftover = Vec::new();
    let mut specialties: Vec<SpecialtyId> = queue.iter().map(|&p| instance.patient(p).specialty).collect();
    specialties.sort();
    specialties.dedup();
    let mut taken = vec![false; queue.len()];
    for s in specialties {
        let reserved: Vec<RoomId> = instance
            .rooms
            .iter()
            .filter(|r| r.working && r.is_reserved_for(s) && r.equipped_for(s))
            .map(|r| r.id)
            .collect();
        if reserved.is_empty() {
            continue;
        }
        for (i, &p) in queue.iter().enumerate() {
            if instance.patient(p).specialty != s {
                continue;
            }
            let open = |r: RoomId| reserved.contains(&r) && state.room_ready(r) < lambda;
            match state.best_choice(instance, p, open) {
                Some(c) => {
                    state.place(instance, p, c);
                    taken[i] = true;
                }
                None => break,
            }
        }
    }
    for (i, &p) in queue.iter().enumerate() {
        if !taken[i] {
            leftover.push(p);
        }
    }
    unplaced.extend(open_schedule(&leftover, &mut state, instance));
    Built {
        schedule: state.into_schedule(),
        unplaced,
    }
}

/// Waiting-list add-electives grouped by specialty, each group in priority
/// order (earliest due date, then longest wait, then lowest id).
#[derive(Clone, Debug, Default)]
pub struct WaitingList {
    by_specialty: Vec<Vec<PatientId>>,
    len: usize,
}

fn priority(instance: &Instance, p: PatientId) -> (i64, Reverse<u32>, PatientId) {
    let pat = instance.patient(p);
    (pat.due_date, Reverse(pat.days_waiting), p)
}

impl WaitingList {
    pub fn new(instance: &Instance, patients: impl IntoIterator<Item = PatientId>) -> Self {
        let mut w = Self {
            by_specialty: vec![Vec::new(); instance.specialties as usize],
            len: 0,
        };
        for p in patients {
            w.by_specialty[instance.patient(p).specialty.index()].push(p);
            w.len += 1;
        }
        for list in &mut w.by_specialty {
            list.sort_by_key(|&p| priority(instance, p));
        }
        w
    }

    /// All add-electives of the instance.
    pub fn from_instance(instance: &Instance) -> Self {
        Self::new(
            instance,
            instance.patients_of(PatientClass::UnscheduledElective).map(|p| p.id),
        )
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, instance: &Instance, p: PatientId) -> bool {
        self.by_specialty[instance.patient(p).specialty.index()].contains(&p)
    }

    pub fn remove(&mut self, instance: &Instance, p: PatientId) -> bool {
        let list = &mut self.by_specialty[instance.patient(p).specialty.index()];
        match list.iter().position(|&q| q == p) {
            Some(i) => {
                list.remove(i);
                self.len -= 1;
                true
            }
            None => false,
        }
    }

    pub fn insert(&mut self, instance: &Instance, p: PatientId) {
        let key = priority(instance, p);
        let list = &mut self.by_specialty[instance.patient(p).specialty.index()];
        if let Err(i) = list.binary_search_by_key(&key, |&q| priority(instance, q)) {
            list.insert(i, p);
            self.len += 1;
        }
    }

    /// Patients in global priority order.
    pub fn iter_sorted(&self, instance: &Instance) -> Vec<PatientId> {
        let mut all: Vec<PatientId> = self.by_specialty.iter().flatten().copied().collect();
        all.sort_by_key(|&p| priority(instance, p));
        all
    }

    pub fn specialty(&self, s: SpecialtyId) -> &[PatientId] {
        &self.by_specialty[s.index()]
    }
}

/// Highest-priority add-elective that fits somewhere (optionally only in
/// `room`) with its notice respected and its surgery finished by closing.
/// Rooms reserved for non-electives are never offered.
pub fn select_add_elective(
    waiting_list: &WaitingList,
    state: &SchedulingState,
    instance: &Instance,
    room: Option<RoomId>,
) -> Option<(PatientId, Choice)> {
    let lambda = instance.horizon.lambda;
    let specialties: Vec<SpecialtyId> = match room {
        Some(r) => {
            let room = instance.room(r);
            if !room.working || room.is_reserved() {
                return None;
            }
            let latest = lambda - state.room_ready(r).max(room.release_time);
            if latest <= 0.0 {
                return None;
            }
            room.equipped_specialties.clone()
        }
        None => (0..instance.specialties).map(SpecialtyId).collect(),
    };
    let open_room = |r: RoomId| {
        let candidate = instance.room(r);
        !candidate.is_reserved() && room.is_none_or(|only| only == r)
    };
    // No add-elective can start before this, whatever the room.
    let floor = match room {
        Some(r) => state.room_ready(r).max(instance.room(r).release_time),
        None => f64::NEG_INFINITY,
    };
    let mut best: Option<(PatientId, Choice)> = None;
    for s in specialties {
        for &p in waiting_list.specialty(s) {
            if best.is_some_and(|(b, _)| priority(instance, b) < priority(instance, p)) {
                break;
            }
            let pat = instance.patient(p);
            let bound = state.patient_bound(instance, p).max(floor + pat.setup);
            if bound + pat.expected_duration > lambda {
                continue;
            }
            let choice = state.best_choice(instance, p, open_room);
            if let Some(c) = choice {
                if c.start + pat.expected_duration <= lambda {
                    best = Some((p, c));
                    break;
                }
            }
        }
    }
    best
}
