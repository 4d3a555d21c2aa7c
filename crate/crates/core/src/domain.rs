//! Core data model for daily operating-theatre sequencing.
//!
//! All times are hours since 08:00 of the scheduling day. Opening hours are
//! `[0, lambda]`; values outside that window (including negative ones for
//! urgent pre-opening starts) are legal.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Hours since 08:00 of the scheduling day.
pub type Instant = f64;
/// A duration in hours.
pub type Hours = f64;

/// Slack used when comparing times that went through floating point sums.
pub const TIME_EPS: f64 = 1e-9;

macro_rules! id_type {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl $name {
            #[inline]
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(
    /// Dense patient index within one [`Instance`].
    PatientId,
    "p"
);
id_type!(RoomId, "r");
id_type!(SurgeonId, "h");
id_type!(SpecialtyId, "s");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("invalid horizon: {0}")]
    Horizon(String),
    #[error("{kind} id {id} is not dense (found at position {position})")]
    NotDense {
        kind: &'static str,
        id: u32,
        position: usize,
    },
    #[error("invalid patient {0}: {1}")]
    Patient(PatientId, String),
    #[error("invalid room {0}: {1}")]
    Room(RoomId, String),
    #[error("invalid master schedule entry for {0}: {1}")]
    Mss(PatientId, String),
    #[error("placement references unknown {kind} {id}")]
    DanglingReference { kind: &'static str, id: u32 },
    #[error("overlap test needs two distinct patients, got {0} twice")]
    SamePatient(PatientId),
}

/// Scalar horizon parameters of a scheduling day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizonParams {
    /// Schedule start time.
    pub tau: Instant,
    /// Standard opening length.
    pub lambda: Hours,
    /// Hours in a day.
    pub lambda_star: Hours,
    /// Big-M constant used by the linear model.
    pub big_m: f64,
}

impl Default for HorizonParams {
    fn default() -> Self {
        Self {
            tau: 0.0,
            lambda: 10.0,
            lambda_star: 24.0,
            big_m: 24.0,
        }
    }
}

impl HorizonParams {
    pub fn validate(&self) -> Result<(), DomainError> {
        let finite = [self.tau, self.lambda, self.lambda_star, self.big_m]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(DomainError::Horizon("non-finite value".into()));
        }
        if !(self.lambda > 0.0 && self.lambda <= self.lambda_star) {
            return Err(DomainError::Horizon(format!(
                "need 0 < lambda <= lambda_star, got lambda={} lambda_star={}",
                self.lambda, self.lambda_star
            )));
        }
        if self.big_m < self.lambda_star {
            return Err(DomainError::Horizon(format!(
                "big_m {} is smaller than lambda_star {}",
                self.big_m, self.lambda_star
            )));
        }
        Ok(())
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatientClass {
    ScheduledElective,
    UnscheduledElective,
    NonElective,
}

impl PatientClass {
    /// Scheduled electives and non-electives must be in every schedule.
    pub fn is_mandatory(self) -> bool {
        !matches!(self, PatientClass::UnscheduledElective)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Patient {
    pub id: PatientId,
    pub class: PatientClass,
    pub specialty: SpecialtyId,
    pub expected_duration: Hours,
    pub setup: Hours,
    pub cleanup: Hours,
    /// Notice needed before an add-elective can start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<Hours>,
    /// Arrival time of a non-elective patient.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrival: Option<Instant>,
    pub eligible_surgeons: Vec<SurgeonId>,
    pub urgency_category: u8,
    pub days_waiting: u32,
    /// Days from today until the recommended surgery date (negative when overdue).
    pub due_date: i64,
}

impl Patient {
    /// Room time consumed by the surgery including setup and cleanup.
    pub fn footprint(&self) -> Hours {
        self.setup + self.expected_duration + self.cleanup
    }

    /// Class-specific lower bound on the start time.
    pub fn class_lower_bound(&self, horizon: &HorizonParams) -> Instant {
        match self.class {
            PatientClass::ScheduledElective => horizon.tau,
            PatientClass::UnscheduledElective => horizon.tau + self.notice.unwrap_or(0.0),
            PatientClass::NonElective => self.arrival.unwrap_or(f64::NEG_INFINITY),
        }
    }

    pub fn is_eligible(&self, surgeon: SurgeonId) -> bool {
        self.eligible_surgeons.binary_search(&surgeon).is_ok()
    }

    fn validate(&self) -> Result<(), DomainError> {
        let bad = |msg: &str| Err(DomainError::Patient(self.id, msg.to_string()));
        if !(self.expected_duration.is_finite() && self.expected_duration > 0.0) {
            return bad("expected duration must be positive");
        }
        if !(self.setup >= 0.0 && self.cleanup >= 0.0) {
            return bad("setup and cleanup must be non-negative");
        }
        if self.eligible_surgeons.is_empty() {
            return bad("no eligible surgeon");
        }
        if self.eligible_surgeons.windows(2).any(|w| w[0] >= w[1]) {
            return bad("eligible surgeons must be sorted and unique");
        }
        if !(1..=3).contains(&self.urgency_category) {
            return bad("urgency category must be 1, 2 or 3");
        }
        match self.class {
            PatientClass::UnscheduledElective if self.notice.is_none() => {
                bad("unscheduled elective without notice")
            }
            PatientClass::NonElective if self.arrival.is_none() => {
                bad("non-elective without arrival time")
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surgeon {
    pub id: SurgeonId,
    pub release_time: Instant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingRoom {
    pub id: RoomId,
    pub working: bool,
    pub release_time: Instant,
    pub equipped_specialties: Vec<SpecialtyId>,
    /// Specialties whose non-elective patients this room is held for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reserved_for: Option<Vec<SpecialtyId>>,
}

impl OperatingRoom {
    pub fn equipped_for(&self, specialty: SpecialtyId) -> bool {
        self.equipped_specialties.contains(&specialty)
    }

    pub fn is_reserved_for(&self, specialty: SpecialtyId) -> bool {
        self.reserved_for
            .as_ref()
            .is_some_and(|s| s.contains(&specialty))
    }

    pub fn is_reserved(&self) -> bool {
        self.reserved_for.as_ref().is_some_and(|s| !s.is_empty())
    }
}

/// Upstream room and surgeon assignment of a scheduled elective.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MssSlot {
    pub room: RoomId,
    pub surgeon: SurgeonId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub horizon: HorizonParams,
    pub rooms: Vec<OperatingRoom>,
    pub surgeons: Vec<Surgeon>,
    pub specialties: u32,
    pub patients: Vec<Patient>,
    #[serde(with = "mss_entries", default)]
    pub mss_assignment: BTreeMap<PatientId, MssSlot>,
}

mod mss_entries {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        patient: PatientId,
        room: RoomId,
        surgeon: SurgeonId,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<PatientId, MssSlot>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|(&patient, slot)| Entry {
            patient,
            room: slot.room,
            surgeon: slot.surgeon,
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<PatientId, MssSlot>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries
            .into_iter()
            .map(|e| {
                (
                    e.patient,
                    MssSlot {
                        room: e.room,
                        surgeon: e.surgeon,
                    },
                )
            })
            .collect())
    }
}

impl Instance {
    #[inline]
    pub fn patient(&self, id: PatientId) -> &Patient {
        &self.patients[id.index()]
    }

    #[inline]
    pub fn room(&self, id: RoomId) -> &OperatingRoom {
        &self.rooms[id.index()]
    }

    #[inline]
    pub fn surgeon(&self, id: SurgeonId) -> &Surgeon {
        &self.surgeons[id.index()]
    }

    /// Appends a patient, assigning it the next dense id.
    pub fn push_patient(&mut self, mut patient: Patient) -> PatientId {
        let id = PatientId(self.patients.len() as u32);
        patient.id = id;
        self.patients.push(patient);
        id
    }

    /// Whether `room` may host `patient` (working and equipped).
    pub fn room_suits(&self, room: RoomId, patient: PatientId) -> bool {
        let r = self.room(room);
        r.working && r.equipped_for(self.patient(patient).specialty)
    }

    /// Every (room, surgeon) pair that can treat `patient`, ordered by room
    /// id then surgeon id.
    pub fn combos(&self, patient: PatientId) -> impl Iterator<Item = (RoomId, SurgeonId)> + '_ {
        let p = self.patient(patient);
        self.rooms
            .iter()
            .filter(move |r| r.working && r.equipped_for(p.specialty))
            .flat_map(move |r| p.eligible_surgeons.iter().map(move |&h| (r.id, h)))
    }

    pub fn patients_of(&self, class: PatientClass) -> impl Iterator<Item = &Patient> + '_ {
        self.patients.iter().filter(move |p| p.class == class)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        self.horizon.validate()?;
        for (i, p) in self.patients.iter().enumerate() {
            if p.id.index() != i {
                return Err(DomainError::NotDense {
                    kind: "patient",
                    id: p.id.0,
                    position: i,
                });
            }
            p.validate()?;
            if p.specialty.0 >= self.specialties {
                return Err(DomainError::Patient(p.id, "unknown specialty".into()));
            }
            if let Some(&h) = p.eligible_surgeons.iter().find(|h| h.index() >= self.surgeons.len()) {
                return Err(DomainError::Patient(p.id, format!("unknown surgeon {h}")));
            }
        }
        for (i, r) in self.rooms.iter().enumerate() {
            if r.id.index() != i {
                return Err(DomainError::NotDense {
                    kind: "room",
                    id: r.id.0,
                    position: i,
                });
            }
            if r.working && r.equipped_specialties.is_empty() {
                return Err(DomainError::Room(r.id, "working room without equipment".into()));
            }
            if !r.release_time.is_finite() {
                return Err(DomainError::Room(r.id, "non-finite release time".into()));
            }
        }
        for (i, h) in self.surgeons.iter().enumerate() {
            if h.id.index() != i {
                return Err(DomainError::NotDense {
                    kind: "surgeon",
                    id: h.id.0,
                    position: i,
                });
            }
        }
        for (&pid, slot) in &self.mss_assignment {
            let Some(p) = self.patients.get(pid.index()) else {
                return Err(DomainError::Mss(pid, "unknown patient".into()));
            };
            if p.class != PatientClass::ScheduledElective {
                return Err(DomainError::Mss(pid, "only scheduled electives are pre-assigned".into()));
            }
            let Some(room) = self.rooms.get(slot.room.index()) else {
                return Err(DomainError::Mss(pid, format!("unknown room {}", slot.room)));
            };
            if !room.equipped_for(p.specialty) {
                return Err(DomainError::Mss(pid, format!("room {} not equipped", slot.room)));
            }
            if !p.is_eligible(slot.surgeon) {
                return Err(DomainError::Mss(pid, format!("surgeon {} not eligible", slot.surgeon)));
            }
        }
        Ok(())
    }
}

/// One surgery: patient, resources and expected start/end.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub patient: PatientId,
    pub room: RoomId,
    pub surgeon: SurgeonId,
    pub start: Instant,
    pub end: Instant,
}

impl Placement {
    /// Occupied interval including setup and cleanup.
    pub fn occupied(&self, patient: &Patient) -> (Instant, Instant) {
        (self.start - patient.setup, self.end + patient.cleanup)
    }
}

/// Two surgeries overlap when each starts strictly before the other ends.
pub fn overlaps(a: &Placement, b: &Placement) -> Result<bool, DomainError> {
    if a.patient == b.patient {
        return Err(DomainError::SamePatient(a.patient));
    }
    Ok(a.start < b.end && b.start < a.end)
}

/// A day schedule. A patient is included exactly when it has a placement.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    #[serde(with = "placement_list")]
    placements: BTreeMap<PatientId, Placement>,
    /// When anaesthesia began; placements listed here may no longer move.
    #[serde(default, with = "time_list")]
    anaesthetised: BTreeMap<PatientId, Instant>,
    /// When an add-elective was booked (its notice runs from here).
    #[serde(default, with = "time_list")]
    notified: BTreeMap<PatientId, Instant>,
}

mod placement_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<PatientId, Placement>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<PatientId, Placement>, D::Error> {
        let v = Vec::<Placement>::deserialize(d)?;
        Ok(v.into_iter().map(|p| (p.patient, p)).collect())
    }
}

mod time_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        patient: PatientId,
        at: Instant,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<PatientId, Instant>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|(&patient, &at)| Entry { patient, at }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<PatientId, Instant>, D::Error> {
        let v = Vec::<Entry>::deserialize(d)?;
        Ok(v.into_iter().map(|e| (e.patient, e.at)).collect())
    }
}

impl Schedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, placement: Placement) -> Option<Placement> {
        self.placements.insert(placement.patient, placement)
    }

    /// Removes a placement. Locked placements are never removed. A booking
    /// notice is kept so the patient can be put back with the same anchor.
    pub fn remove(&mut self, patient: PatientId) -> Option<Placement> {
        if self.anaesthetised.contains_key(&patient) {
            return None;
        }
        self.placements.remove(&patient)
    }

    /// Forgets the booking notice of an add-elective returned to the list.
    pub fn clear_notice(&mut self, patient: PatientId) {
        self.notified.remove(&patient);
    }

    /// Removes a placement even if it has started. Used only for data
    /// corrections (e.g. moving a finished day out of the live schedule).
    pub fn purge(&mut self, patient: PatientId) -> Option<Placement> {
        self.anaesthetised.remove(&patient);
        self.notified.remove(&patient);
        self.placements.remove(&patient)
    }

    pub fn get(&self, patient: PatientId) -> Option<&Placement> {
        self.placements.get(&patient)
    }

    /// Moves an unlocked placement to a new start, keeping its length.
    pub(crate) fn set_start(&mut self, patient: PatientId, start: Instant) {
        if self.anaesthetised.contains_key(&patient) {
            return;
        }
        if let Some(pl) = self.placements.get_mut(&patient) {
            let len = pl.end - pl.start;
            pl.start = start;
            pl.end = start + len;
        }
    }

    /// Sets the realised end of a surgery.
    pub fn set_end(&mut self, patient: PatientId, end: Instant) {
        if let Some(pl) = self.placements.get_mut(&patient) {
            pl.end = end;
        }
    }

    pub fn is_included(&self, patient: PatientId) -> bool {
        self.placements.contains_key(&patient)
    }

    pub fn placements(&self) -> impl Iterator<Item = &Placement> + '_ {
        self.placements.values()
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    /// Marks the start of anaesthesia; from then on the placement is frozen.
    pub fn lock(&mut self, patient: PatientId, at: Instant) {
        debug_assert!(self.placements.contains_key(&patient));
        self.anaesthetised.insert(patient, at);
    }

    pub fn locked_at(&self, patient: PatientId) -> Option<Instant> {
        self.anaesthetised.get(&patient).copied()
    }

    pub fn is_locked(&self, patient: PatientId) -> bool {
        self.anaesthetised.contains_key(&patient)
    }

    pub fn notify(&mut self, patient: PatientId, at: Instant) {
        self.notified.insert(patient, at);
    }

    pub fn notified_at(&self, patient: PatientId) -> Option<Instant> {
        self.notified.get(&patient).copied()
    }

    /// Placements in `room`, ordered by start.
    pub fn room_timeline(&self, room: RoomId) -> Vec<Placement> {
        let mut v: Vec<Placement> = self.placements().filter(|p| p.room == room).copied().collect();
        v.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.patient.cmp(&b.patient)));
        v
    }

    /// Placements of `surgeon`, ordered by start.
    pub fn surgeon_timeline(&self, surgeon: SurgeonId) -> Vec<Placement> {
        let mut v: Vec<Placement> =
            self.placements().filter(|p| p.surgeon == surgeon).copied().collect();
        v.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.patient.cmp(&b.patient)));
        v
    }

    /// Unlocked placements: everything a reaction is allowed to touch.
    pub fn movable(&self) -> impl Iterator<Item = &Placement> + '_ {
        self.placements
            .values()
            .filter(|p| !self.anaesthetised.contains_key(&p.patient))
    }
}

/// Smallest start at which `patient` can be appended after everything the
/// room and the surgeon already have in `schedule`.
pub fn earliest_append_start(
    instance: &Instance,
    patient: PatientId,
    surgeon: SurgeonId,
    room: RoomId,
    schedule: &Schedule,
    now: Instant,
) -> Instant {
    let p = instance.patient(patient);
    let mut z = p
        .class_lower_bound(&instance.horizon)
        .max(now)
        .max(instance.room(room).release_time)
        .max(instance.surgeon(surgeon).release_time);
    for pl in schedule.placements() {
        if pl.patient != patient && (pl.room == room || pl.surgeon == surgeon) {
            z = z.max(pl.end + instance.patient(pl.patient).cleanup + p.setup);
        }
    }
    z
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Number of the violated model constraint (17..=35).
    pub constraint: u8,
    pub patients: Vec<PatientId>,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn constraints(&self) -> Vec<u8> {
        let mut c: Vec<u8> = self.violations.iter().map(|v| v.constraint).collect();
        c.sort_unstable();
        c.dedup();
        c
    }
}

impl fmt::Display for FeasibilityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "feasible");
        }
        for v in &self.violations {
            let ids: Vec<String> = v.patients.iter().map(|p| p.to_string()).collect();
            writeln!(f, "({}) [{}] {}", v.constraint, ids.join(","), v.message)?;
        }
        Ok(())
    }
}

/// Checks a schedule against constraints (17)-(35) and lists every violation.
///
/// Constraints (17) and (30) (one room and one surgeon per included patient)
/// hold by construction since a schedule keeps one placement per patient.
/// Overlapping pairs are reported under (23)/(24); pairs that do not overlap
/// but leave too little setup/cleanup time fall under (26)/(27).
pub fn check_feasibility(
    schedule: &Schedule,
    instance: &Instance,
) -> Result<FeasibilityReport, DomainError> {
    for (&key, pl) in &schedule.placements {
        let dangling = |kind, id| Err(DomainError::DanglingReference { kind, id });
        if key != pl.patient || pl.patient.index() >= instance.patients.len() {
            return dangling("patient", pl.patient.0);
        }
        if pl.room.index() >= instance.rooms.len() {
            return dangling("room", pl.room.0);
        }
        if pl.surgeon.index() >= instance.surgeons.len() {
            return dangling("surgeon", pl.surgeon.0);
        }
    }

    let h = &instance.horizon;
    let mut out = Vec::new();
    let mut push = |constraint: u8, patients: Vec<PatientId>, message: String| {
        out.push(Violation {
            constraint,
            patients,
            message,
        })
    };

    for pl in schedule.placements() {
        let p = instance.patient(pl.patient);
        let room = instance.room(pl.room);
        let surgeon = instance.surgeon(pl.surgeon);
        let id = vec![pl.patient];
        if !room.working {
            push(18, id.clone(), format!("room {} is not working", room.id));
        }
        if pl.start < room.release_time - TIME_EPS {
            push(19, id.clone(), format!("starts {} before room release {}", pl.start, room.release_time));
        }
        if pl.start < surgeon.release_time - TIME_EPS {
            push(20, id.clone(), format!("starts {} before surgeon release {}", pl.start, surgeon.release_time));
        }
        if (pl.end - pl.start - p.expected_duration).abs() > TIME_EPS {
            push(25, id.clone(), format!("end {} != start {} + duration {}", pl.end, pl.start, p.expected_duration));
        }
        if !room.equipped_for(p.specialty) {
            push(28, id.clone(), format!("room {} not equipped for {}", room.id, p.specialty));
        }
        if !p.is_eligible(pl.surgeon) {
            push(29, id.clone(), format!("surgeon {} not qualified", pl.surgeon));
        }
        match p.class {
            PatientClass::ScheduledElective | PatientClass::UnscheduledElective => {
                if pl.start < h.tau - TIME_EPS {
                    push(31, id.clone(), format!("elective starts {} before tau {}", pl.start, h.tau));
                }
                if p.class == PatientClass::UnscheduledElective {
                    let alpha = p.notice.unwrap_or(0.0);
                    if pl.start < h.tau + alpha - TIME_EPS {
                        push(33, id.clone(), format!("starts {} with less than {alpha} h notice", pl.start));
                    }
                    // A started surgery's end is a realisation, not a plan.
                    if pl.end > h.lambda + TIME_EPS && !schedule.is_locked(pl.patient) {
                        push(35, id.clone(), format!("add-elective ends {} after lambda", pl.end));
                    }
                }
            }
            PatientClass::NonElective => {
                let gamma = p.arrival.unwrap_or(f64::NEG_INFINITY);
                if pl.start < gamma - TIME_EPS {
                    push(34, id.clone(), format!("starts {} before arrival {gamma}", pl.start));
                }
            }
        }
    }

    for p in &instance.patients {
        if p.class.is_mandatory() && !schedule.is_included(p.id) {
            push(32, vec![p.id], format!("mandatory {:?} patient not scheduled", p.class));
        }
    }

    let mut by_room: BTreeMap<RoomId, Vec<&Placement>> = BTreeMap::new();
    let mut by_surgeon: BTreeMap<SurgeonId, Vec<&Placement>> = BTreeMap::new();
    for pl in schedule.placements() {
        by_room.entry(pl.room).or_default().push(pl);
        by_surgeon.entry(pl.surgeon).or_default().push(pl);
    }
    for group in by_surgeon.values() {
        pairwise(group, instance, 23, 26, &mut push);
    }
    for group in by_room.values() {
        pairwise(group, instance, 24, 27, &mut push);
    }

    Ok(FeasibilityReport { violations: out })
}

fn pairwise(
    group: &[&Placement],
    instance: &Instance,
    overlap_constraint: u8,
    gap_constraint: u8,
    push: &mut impl FnMut(u8, Vec<PatientId>, String),
) {
    for (i, a) in group.iter().enumerate() {
        for b in &group[i + 1..] {
            let (first, second) = if (a.start, a.patient) <= (b.start, b.patient) {
                (a, b)
            } else {
                (b, a)
            };
            let ids = vec![first.patient, second.patient];
            if first.start < second.end - TIME_EPS && second.start < first.end - TIME_EPS {
                push(overlap_constraint, ids, format!("surgeries overlap ({overlap_constraint})"));
                continue;
            }
            let need = first.end
                + instance.patient(first.patient).cleanup
                + instance.patient(second.patient).setup;
            if second.start < need - TIME_EPS {
                push(
                    gap_constraint,
                    ids,
                    format!("starts {} but cleanup/setup require {}", second.start, need),
                );
            }
        }
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn patient(id: u32, class: PatientClass, duration: Hours) -> Patient {
        Patient {
            id: PatientId(id),
            class,
            specialty: SpecialtyId(0),
            expected_duration: duration,
            setup: 0.25,
            cleanup: 0.25,
            notice: (class == PatientClass::UnscheduledElective).then_some(0.0),
            arrival: (class == PatientClass::NonElective).then_some(0.0),
            eligible_surgeons: vec![SurgeonId(0)],
            urgency_category: 2,
            days_waiting: 10,
            due_date: 80,
        }
    }

    pub fn room(id: u32) -> OperatingRoom {
        OperatingRoom {
            id: RoomId(id),
            working: true,
            release_time: 0.0,
            equipped_specialties: vec![SpecialtyId(0)],
            reserved_for: None,
        }
    }

    pub fn instance(rooms: u32, surgeons: u32, patients: Vec<Patient>) -> Instance {
        Instance {
            horizon: HorizonParams::default(),
            rooms: (0..rooms).map(room).collect(),
            surgeons: (0..surgeons)
                .map(|i| Surgeon {
                    id: SurgeonId(i),
                    release_time: 0.0,
                })
                .collect(),
            specialties: 1,
            patients,
            mss_assignment: BTreeMap::new(),
        }
    }

    pub fn place(patient: u32, room: u32, surgeon: u32, start: f64, end: f64) -> Placement {
        Placement {
            patient: PatientId(patient),
            room: RoomId(room),
            surgeon: SurgeonId(surgeon),
            start,
            end,
        }
    }
}
