//! Linearised mixed-integer model of one scheduling day, its LP-format text,
//! and an exhaustive oracle for toy instances.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::domain::{
    check_feasibility, earliest_append_start, Instance, PatientClass, PatientId, Placement,
    Schedule,
};
use crate::objective::{contribution, utilisation};

/// Strict inequality (21) is written as `>= STRICT_EPS`.
pub const STRICT_EPS: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum MipError {
    #[error("instance has no working room; the model is infeasible under constraint (32)")]
    NoWorkingRoom,
    #[error("instance too large for exhaustive enumeration ({patients} patients, {rooms} rooms, {surgeons} surgeons; limit 6/2/3)")]
    TooLarge {
        patients: usize,
        rooms: usize,
        surgeons: usize,
    },
    #[error("LP parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no value for variable {0}")]
    MissingValue(String),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

impl Sense {
    fn as_str(self) -> &'static str {
        match self {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Domain {
    Binary,
    NonNegative,
    Free,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Variable {
    pub name: String,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub name: String,
    /// Model equation number this row instantiates.
    pub family: u8,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MipModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(usize, f64)>,
    pub big_m: f64,
    index: HashMap<String, usize>,
}

/// Expected constraint rows per family for an instance of the given shape.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstraintCount {
    pub by_family: BTreeMap<u8, usize>,
}

impl ConstraintCount {
    pub fn total(&self) -> usize {
        self.by_family.values().sum()
    }
}

/// Closed-form row counts implied by the instance dimensions.
pub fn expected_constraint_count(instance: &Instance) -> ConstraintCount {
    let p = instance.patients.len();
    let r = instance.rooms.len();
    let h = instance.surgeons.len();
    let count = |c| instance.patients_of(c).count();
    let (ps, pu, pn) = (
        count(PatientClass::ScheduledElective),
        count(PatientClass::UnscheduledElective),
        count(PatientClass::NonElective),
    );
    let pairs = p * p.saturating_sub(1);
    let mut f = BTreeMap::new();
    for fam in 3..=9 {
        f.insert(fam, p);
    }
    f.insert(10, 4 * p);
    f.insert(11, 4 * p);
    f.insert(17, p);
    f.insert(18, if p > 0 { r } else { 0 });
    f.insert(19, p * r);
    f.insert(20, p);
    f.insert(21, pairs);
    f.insert(22, pairs);
    f.insert(23, pairs * h);
    f.insert(24, pairs * r);
    f.insert(25, p);
    f.insert(26, pairs * h);
    f.insert(27, pairs * r);
    f.insert(28, p * r);
    f.insert(29, p * h);
    f.insert(30, p);
    f.insert(31, ps + pu);
    f.insert(32, ps + pn);
    f.insert(33, pu);
    f.insert(34, pn);
    f.insert(35, pu);
    f.retain(|_, n| *n > 0);
    ConstraintCount { by_family: f }
}

struct Builder {
    model: MipModel,
}

impl Builder {
    fn var(&mut self, name: String, domain: Domain) -> usize {
        let id = self.model.variables.len();
        self.model.index.insert(name.clone(), id);
        self.model.variables.push(Variable { name, domain });
        id
    }

    fn row(&mut self, family: u8, name: String, terms: Vec<(usize, f64)>, sense: Sense, rhs: f64) {
        let terms = terms.into_iter().filter(|&(_, c)| c != 0.0).collect();
        self.model.constraints.push(Constraint {
            name,
            family,
            terms,
            sense,
            rhs,
        });
    }
}

/// `horizon.big_m`, raised when the day's work could run past it. No
/// append-built schedule ends after the latest release or lower bound plus
/// the total room time of all patients.
pub fn safe_big_m(instance: &Instance) -> f64 {
    let h = &instance.horizon;
    let ready = instance
        .rooms
        .iter()
        .map(|r| r.release_time)
        .chain(instance.surgeons.iter().map(|s| s.release_time))
        .chain(instance.patients.iter().map(|p| p.class_lower_bound(h)))
        .fold(h.tau, f64::max);
    let work: f64 = instance.patients.iter().map(|p| p.footprint()).sum();
    h.big_m.max((ready + work).ceil())
}

/// Builds the linearised model for one day.
pub fn build_model(instance: &Instance) -> Result<MipModel, MipError> {
    if !instance.rooms.iter().any(|r| r.working) {
        return Err(MipError::NoWorkingRoom);
    }
    let h = &instance.horizon;
    let (lambda, lstar, m) = (h.lambda, h.lambda_star, safe_big_m(instance));
    let mut b = Builder {
        model: MipModel {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            big_m: m,
            index: HashMap::new(),
        },
    };
    let np = instance.patients.len();
    let eps: Vec<usize> = (0..np).map(|p| b.var(format!("eps_{p}"), Domain::Binary)).collect();
    let x: Vec<Vec<usize>> = (0..np)
        .map(|p| {
            (0..instance.rooms.len())
                .map(|r| b.var(format!("X_{p}_{r}"), Domain::Binary))
                .collect()
        })
        .collect();
    let y: Vec<Vec<usize>> = (0..np)
        .map(|p| {
            (0..instance.surgeons.len())
                .map(|s| b.var(format!("Y_{p}_{s}"), Domain::Binary))
                .collect()
        })
        .collect();
    let mut u = vec![vec![usize::MAX; np]; np];
    for (p, row) in u.iter_mut().enumerate() {
        for (q, slot) in row.iter_mut().enumerate() {
            if p != q {
                *slot = b.var(format!("U_{p}_{q}"), Domain::Binary);
            }
        }
    }
    let z: Vec<usize> = (0..np).map(|p| b.var(format!("Z_{p}"), Domain::Free)).collect();
    let zs: Vec<usize> = (0..np).map(|p| b.var(format!("Zs_{p}"), Domain::Free)).collect();
    let mut dp = vec![[0usize; 4]; np];
    let mut dm = vec![[0usize; 4]; np];
    let mut ej = vec![[0usize; 4]; np];
    for p in 0..np {
        for j in 0..4 {
            dp[p][j] = b.var(format!("dp_{}_{p}", j + 1), Domain::NonNegative);
            dm[p][j] = b.var(format!("dm_{}_{p}", j + 1), Domain::NonNegative);
            ej[p][j] = b.var(format!("e_{}_{p}", j + 1), Domain::Binary);
        }
    }
    let omega: Vec<usize> = (0..np).map(|p| b.var(format!("Omega_{p}"), Domain::NonNegative)).collect();
    b.model.objective = omega.iter().map(|&o| (o, 1.0)).collect();

    for (p, pat) in instance.patients.iter().enumerate() {
        let (vp, vm) = (pat.setup, pat.cleanup);
        b.row(3, format!("c3_{p}"), vec![(omega[p], 1.0), (eps[p], -lambda)], Sense::Le, 0.0);
        b.row(4, format!("c4_{p}"), vec![(omega[p], 1.0), (dm[p][2], 1.0), (dp[p][3], 1.0)], Sense::Le, lambda);
        b.row(5, format!("c5_{p}"), vec![(omega[p], 1.0), (eps[p], -lambda), (dm[p][2], 1.0), (dp[p][3], 1.0)], Sense::Ge, 0.0);
        b.row(6, format!("c6_{p}"), vec![(zs[p], 1.0), (dp[p][0], -1.0), (dm[p][0], 1.0)], Sense::Eq, -vm);
        b.row(7, format!("c7_{p}"), vec![(z[p], 1.0), (dp[p][1], -1.0), (dm[p][1], 1.0)], Sense::Eq, vp + lambda);
        b.row(8, format!("c8_{p}"), vec![(dp[p][0], 1.0), (dp[p][2], -1.0), (dm[p][2], 1.0)], Sense::Eq, lambda);
        b.row(9, format!("c9_{p}"), vec![(dm[p][1], -1.0), (dp[p][3], -1.0), (dm[p][3], 1.0)], Sense::Eq, -lambda);
        for j in 0..4 {
            b.row(10, format!("c10_{}_{p}", j + 1), vec![(dp[p][j], 1.0), (ej[p][j], -m)], Sense::Le, 0.0);
        }
        for j in 0..4 {
            b.row(11, format!("c11_{}_{p}", j + 1), vec![(dm[p][j], 1.0), (ej[p][j], m)], Sense::Le, m);
        }
    }
    for p in 0..np {
        let mut t: Vec<(usize, f64)> = x[p].iter().map(|&v| (v, 1.0)).collect();
        t.push((eps[p], -1.0));
        b.row(17, format!("c17_{p}"), t, Sense::Eq, 0.0);
    }
    for (r, room) in instance.rooms.iter().enumerate() {
        if np == 0 {
            break;
        }
        let t: Vec<(usize, f64)> = (0..np).map(|p| (x[p][r], 1.0)).collect();
        let cap = if room.working { np as f64 } else { 0.0 };
        b.row(18, format!("c18_{r}"), t, Sense::Le, cap);
    }
    for p in 0..np {
        for (r, room) in instance.rooms.iter().enumerate() {
            b.row(19, format!("c19_{p}_{r}"), vec![(z[p], 1.0), (x[p][r], -room.release_time)], Sense::Ge, 0.0);
        }
    }
    for p in 0..np {
        let mut t = vec![(z[p], 1.0)];
        t.extend(instance.surgeons.iter().enumerate().map(|(s, sg)| (y[p][s], -sg.release_time)));
        b.row(20, format!("c20_{p}"), t, Sense::Ge, 0.0);
    }
    for p in 0..np {
        for q in 0..np {
            if p == q {
                continue;
            }
            // Z_p - Zs_q + L*(2 - eps_p - eps_q) + L*U_pq >= STRICT_EPS
            b.row(21, format!("c21_{p}_{q}"),
                vec![(z[p], 1.0), (zs[q], -1.0), (eps[p], -lstar), (eps[q], -lstar), (u[p][q], lstar)],
                Sense::Ge, STRICT_EPS - 2.0 * lstar);
            b.row(22, format!("c22_{p}_{q}"),
                vec![(zs[q], 1.0), (z[p], -1.0), (u[p][q], -lstar)], Sense::Ge, -lstar);
        }
    }
    for p in 0..np {
        for q in 0..np {
            if p == q {
                continue;
            }
            for s in 0..instance.surgeons.len() {
                b.row(23, format!("c23_{p}_{q}_{s}"),
                    vec![(y[p][s], 1.0), (y[q][s], 1.0), (u[p][q], 1.0), (u[q][p], 1.0)], Sense::Le, 3.0);
            }
        }
    }
    for p in 0..np {
        for q in 0..np {
            if p == q {
                continue;
            }
            for r in 0..instance.rooms.len() {
                b.row(24, format!("c24_{p}_{q}_{r}"),
                    vec![(x[p][r], 1.0), (x[q][r], 1.0), (u[p][q], 1.0), (u[q][p], 1.0)], Sense::Le, 3.0);
            }
        }
    }
    for (p, pat) in instance.patients.iter().enumerate() {
        b.row(25, format!("c25_{p}"), vec![(zs[p], 1.0), (z[p], -1.0), (eps[p], -pat.expected_duration)], Sense::Eq, 0.0);
    }
    let gap = |p: usize, q: usize| instance.patients[q].setup + instance.patients[p].cleanup;
    for p in 0..np {
        for q in 0..np {
            if p == q {
                continue;
            }
            for s in 0..instance.surgeons.len() {
                // Z_q - M*U_pq - M*Y_ps - M*Y_qs - Zs_p >= -3M + V_q+ + V_p-
                b.row(26, format!("c26_{p}_{q}_{s}"),
                    vec![(z[q], 1.0), (u[p][q], -m), (y[p][s], -m), (y[q][s], -m), (zs[p], -1.0)],
                    Sense::Ge, gap(p, q) - 3.0 * m);
            }
        }
    }
    for p in 0..np {
        for q in 0..np {
            if p == q {
                continue;
            }
            for r in 0..instance.rooms.len() {
                b.row(27, format!("c27_{p}_{q}_{r}"),
                    vec![(z[q], 1.0), (u[p][q], -m), (x[p][r], -m), (x[q][r], -m), (zs[p], -1.0)],
                    Sense::Ge, gap(p, q) - 3.0 * m);
            }
        }
    }
    for (p, pat) in instance.patients.iter().enumerate() {
        for (r, room) in instance.rooms.iter().enumerate() {
            let t = if room.equipped_for(pat.specialty) { 1.0 } else { 0.0 };
            b.row(28, format!("c28_{p}_{r}"), vec![(x[p][r], 1.0)], Sense::Le, t);
        }
    }
    for (p, pat) in instance.patients.iter().enumerate() {
        for s in 0..instance.surgeons.len() {
            let e = if pat.is_eligible(crate::domain::SurgeonId(s as u32)) { 1.0 } else { 0.0 };
            b.row(29, format!("c29_{p}_{s}"), vec![(y[p][s], 1.0)], Sense::Le, e);
        }
    }
    for p in 0..np {
        let mut t: Vec<(usize, f64)> = y[p].iter().map(|&v| (v, 1.0)).collect();
        t.push((eps[p], -1.0));
        b.row(30, format!("c30_{p}"), t, Sense::Eq, 0.0);
    }
    for (p, pat) in instance.patients.iter().enumerate() {
        if pat.class != PatientClass::NonElective {
            b.row(31, format!("c31_{p}"), vec![(z[p], 1.0), (eps[p], -h.tau)], Sense::Ge, 0.0);
        }
    }
    for (p, pat) in instance.patients.iter().enumerate() {
        if pat.class.is_mandatory() {
            b.row(32, format!("c32_{p}"), vec![(eps[p], 1.0)], Sense::Eq, 1.0);
        }
    }
    for (p, pat) in instance.patients.iter().enumerate() {
        match pat.class {
            PatientClass::UnscheduledElective => {
                let a = pat.notice.unwrap_or(0.0);
                b.row(33, format!("c33_{p}"), vec![(z[p], 1.0), (eps[p], -(h.tau + a))], Sense::Ge, 0.0);
            }
            PatientClass::NonElective => {
                let g = pat.arrival.unwrap_or(0.0);
                b.row(34, format!("c34_{p}"), vec![(z[p], 1.0), (eps[p], -g)], Sense::Ge, 0.0);
            }
            PatientClass::ScheduledElective => {}
        }
    }
    for (p, pat) in instance.patients.iter().enumerate() {
        if pat.class == PatientClass::UnscheduledElective {
            b.row(35, format!("c35_{p}"), vec![(zs[p], 1.0)], Sense::Le, lambda);
        }
    }
    // Keep families in ascending order so the text reads like the model.
    b.model.constraints.sort_by_key(|c| c.family);
    Ok(b.model)
}

/// LP-format text of the day model.
pub fn export_mip(instance: &Instance) -> Result<String, MipError> {
    Ok(build_model(instance)?.to_lp_string())
}

fn fmt_num(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], vars: &[Variable]) {
    if terms.is_empty() {
        out.push_str(" 0");
        return;
    }
    for (i, &(v, c)) in terms.iter().enumerate() {
        let sign = if c < 0.0 { "-" } else { "+" };
        let mag = c.abs();
        if i == 0 && sign == "+" {
            out.push(' ');
        } else {
            let _ = write!(out, " {sign} ");
        }
        if mag != 1.0 {
            let _ = write!(out, "{} ", fmt_num(mag));
        }
        out.push_str(&vars[v].name);
    }
}

impl MipModel {
    pub fn var(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn count_by_family(&self) -> ConstraintCount {
        let mut by_family = BTreeMap::new();
        for c in &self.constraints {
            *by_family.entry(c.family).or_insert(0) += 1;
        }
        ConstraintCount { by_family }
    }

    pub fn to_lp_string(&self) -> String {
        let mut out = String::new();
        out.push_str("\\ Surgical case sequencing day model\n");
        let _ = writeln!(out, "\\ big-M {}; strict (21) written as >= {STRICT_EPS:e}", fmt_num(self.big_m));
        out.push_str("Maximize\n obj:");
        write_terms(&mut out, &self.objective, &self.variables);
        out.push_str("\nSubject To\n");
        for c in &self.constraints {
            let _ = write!(out, " {}:", c.name);
            write_terms(&mut out, &c.terms, &self.variables);
            let _ = writeln!(out, " {} {}", c.sense.as_str(), fmt_num(c.rhs));
        }
        out.push_str("Bounds\n");
        for v in &self.variables {
            if v.domain == Domain::Free {
                let _ = writeln!(out, " {} free", v.name);
            }
        }
        out.push_str("Binaries\n");
        for v in &self.variables {
            if v.domain == Domain::Binary {
                let _ = writeln!(out, " {}", v.name);
            }
        }
        out.push_str("End\n");
        out
    }

    /// Parses text produced by [`MipModel::to_lp_string`]. Only the subset of
    /// the LP format used by the exporter is understood.
    pub fn parse_lp(text: &str) -> Result<MipModel, MipError> {
        #[derive(PartialEq)]
        enum Section {
            Head,
            Objective,
            Rows,
            Bounds,
            Binaries,
            Done,
        }
        let err = |line: usize, message: &str| MipError::Parse {
            line,
            message: message.to_string(),
        };
        let mut model = MipModel {
            variables: Vec::new(),
            constraints: Vec::new(),
            objective: Vec::new(),
            big_m: 0.0,
            index: HashMap::new(),
        };
        let intern = |model: &mut MipModel, name: &str| -> usize {
            if let Some(&i) = model.index.get(name) {
                return i;
            }
            let i = model.variables.len();
            model.index.insert(name.to_string(), i);
            model.variables.push(Variable {
                name: name.to_string(),
                domain: Domain::NonNegative,
            });
            i
        };
        let mut section = Section::Head;
        for (n, raw) in text.lines().enumerate() {
            let line_no = n + 1;
            let line = raw.trim();
            if let Some(rest) = line.strip_prefix("\\ big-M ") {
                let v = rest.split(';').next().unwrap_or("");
                model.big_m = v.trim().parse().map_err(|_| err(line_no, "bad big-M"))?;
                continue;
            }
            if line.is_empty() || line.starts_with('\\') {
                continue;
            }
            match line {
                "Maximize" => {
                    section = Section::Objective;
                    continue;
                }
                "Subject To" => {
                    section = Section::Rows;
                    continue;
                }
                "Bounds" => {
                    section = Section::Bounds;
                    continue;
                }
                "Binaries" => {
                    section = Section::Binaries;
                    continue;
                }
                "End" => {
                    section = Section::Done;
                    continue;
                }
                _ => {}
            }
            match section {
                Section::Head | Section::Done => return Err(err(line_no, "text outside a section")),
                Section::Objective | Section::Rows => {
                    let (name, body) = line.split_once(':').ok_or_else(|| err(line_no, "missing row name"))?;
                    let tokens: Vec<&str> = body.split_whitespace().collect();
                    let (terms_tok, tail) = if section == Section::Rows {
                        if tokens.len() < 2 {
                            return Err(err(line_no, "row without sense"));
                        }
                        tokens.split_at(tokens.len() - 2)
                    } else {
                        (&tokens[..], &[][..])
                    };
                    let mut terms = Vec::new();
                    let mut sign = 1.0;
                    let mut coef: Option<f64> = None;
                    for t in terms_tok {
                        match *t {
                            "+" => sign = 1.0,
                            "-" => sign = -1.0,
                            t => {
                                if let Ok(v) = t.parse::<f64>() {
                                    coef = Some(v);
                                } else {
                                    let id = intern(&mut model, t);
                                    let c = sign * coef.take().unwrap_or(1.0);
                                    if c != 0.0 {
                                        terms.push((id, c));
                                    }
                                    sign = 1.0;
                                }
                            }
                        }
                    }
                    if section == Section::Objective {
                        model.objective = terms;
                    } else {
                        let sense = match tail[0] {
                            "<=" => Sense::Le,
                            ">=" => Sense::Ge,
                            "=" => Sense::Eq,
                            _ => return Err(err(line_no, "unknown sense")),
                        };
                        let rhs: f64 = tail[1].parse().map_err(|_| err(line_no, "bad right-hand side"))?;
                        let family = name
                            .strip_prefix('c')
                            .and_then(|s| s.split('_').next())
                            .and_then(|s| s.parse().ok())
                            .unwrap_or(0);
                        model.constraints.push(Constraint {
                            name: name.to_string(),
                            family,
                            terms,
                            sense,
                            rhs,
                        });
                    }
                }
                Section::Bounds => {
                    let name = line.strip_suffix(" free").ok_or_else(|| err(line_no, "unsupported bound"))?;
                    let id = intern(&mut model, name.trim());
                    model.variables[id].domain = Domain::Free;
                }
                Section::Binaries => {
                    let id = intern(&mut model, line);
                    model.variables[id].domain = Domain::Binary;
                }
            }
        }
        Ok(model)
    }

    /// Objective value at `values`, or the names of violated rows and domains.
    pub fn evaluate(&self, values: &HashMap<String, f64>) -> Result<Result<f64, Vec<String>>, MipError> {
        let mut x = vec![0.0; self.variables.len()];
        for (i, v) in self.variables.iter().enumerate() {
            x[i] = *values.get(&v.name).ok_or_else(|| MipError::MissingValue(v.name.clone()))?;
        }
        const TOL: f64 = 1e-7;
        let mut bad = Vec::new();
        for (v, &val) in self.variables.iter().zip(&x) {
            let ok = match v.domain {
                Domain::Binary => val == 0.0 || val == 1.0,
                Domain::NonNegative => val >= -TOL,
                Domain::Free => val.is_finite(),
            };
            if !ok {
                bad.push(format!("domain:{}", v.name));
            }
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, k)| k * x[v]).sum();
            let ok = match c.sense {
                Sense::Le => lhs <= c.rhs + TOL,
                Sense::Ge => lhs >= c.rhs - TOL,
                Sense::Eq => (lhs - c.rhs).abs() <= TOL,
            };
            if !ok {
                bad.push(c.name.clone());
            }
        }
        if bad.is_empty() {
            Ok(Ok(self.objective.iter().map(|&(v, k)| k * x[v]).sum()))
        } else {
            Ok(Err(bad))
        }
    }
}

/// Variable values encoding `schedule` in the linearised model.
pub fn assignment_from_schedule(schedule: &Schedule, instance: &Instance) -> HashMap<String, f64> {
    let h = &instance.horizon;
    let lambda = h.lambda;
    let np = instance.patients.len();
    let mut v = HashMap::new();
    let mut z = vec![0.0; np];
    let mut zs = vec![0.0; np];
    for (p, pat) in instance.patients.iter().enumerate() {
        let pl = schedule.get(PatientId(p as u32));
        let inc = pl.is_some();
        v.insert(format!("eps_{p}"), if inc { 1.0 } else { 0.0 });
        for r in 0..instance.rooms.len() {
            let on = pl.is_some_and(|pl| pl.room.index() == r);
            v.insert(format!("X_{p}_{r}"), if on { 1.0 } else { 0.0 });
        }
        for s in 0..instance.surgeons.len() {
            let on = pl.is_some_and(|pl| pl.surgeon.index() == s);
            v.insert(format!("Y_{p}_{s}"), if on { 1.0 } else { 0.0 });
        }
        if let Some(pl) = pl {
            z[p] = pl.start;
            zs[p] = pl.end;
        }
        v.insert(format!("Z_{p}"), z[p]);
        v.insert(format!("Zs_{p}"), zs[p]);
        let split = |val: f64| (val.max(0.0), (-val).max(0.0));
        let (d1p, d1m) = split(zs[p] + pat.cleanup);
        let (d2p, d2m) = split(z[p] - pat.setup - lambda);
        let (d3p, d3m) = split(d1p - lambda);
        let (d4p, d4m) = split(lambda - d2m);
        for (j, (dp, dm)) in [(d1p, d1m), (d2p, d2m), (d3p, d3m), (d4p, d4m)].into_iter().enumerate() {
            v.insert(format!("dp_{}_{p}", j + 1), dp);
            v.insert(format!("dm_{}_{p}", j + 1), dm);
            v.insert(format!("e_{}_{p}", j + 1), if dp > 0.0 { 1.0 } else { 0.0 });
        }
        let omega = pl.map_or(0.0, |pl| contribution(pl, pat, h));
        v.insert(format!("Omega_{p}"), omega);
    }
    for p in 0..np {
        for q in 0..np {
            if p != q {
                v.insert(format!("U_{p}_{q}"), if z[p] <= zs[q] { 1.0 } else { 0.0 });
            }
        }
    }
    v
}

fn check_oracle_size(instance: &Instance) -> Result<(), MipError> {
    let (p, r, h) = (instance.patients.len(), instance.rooms.len(), instance.surgeons.len());
    if p > 6 || r > 2 || h > 3 {
        return Err(MipError::TooLarge {
            patients: p,
            rooms: r,
            surgeons: h,
        });
    }
    Ok(())
}

/// Visits every schedule reachable by appending patients one at a time, in
/// any order and on any compatible (room, surgeon) pair, at their earliest
/// start. Optional patients may be left out. Only schedules satisfying the
/// add-elective overtime rule are visited.
pub fn enumerate_schedules(
    instance: &Instance,
    mut visit: impl FnMut(&Schedule),
) -> Result<(), MipError> {
    check_oracle_size(instance)?;
    let combos: Vec<Vec<(crate::RoomId, crate::SurgeonId)>> = instance
        .patients
        .iter()
        .map(|p| instance.combos(p.id).collect())
        .collect();
    let mandatory: Vec<bool> = instance.patients.iter().map(|p| p.class.is_mandatory()).collect();
    let mut schedule = Schedule::new();
    let mut placed = vec![false; instance.patients.len()];
    fn dfs(
        instance: &Instance,
        combos: &[Vec<(crate::RoomId, crate::SurgeonId)>],
        mandatory: &[bool],
        schedule: &mut Schedule,
        placed: &mut [bool],
        visit: &mut dyn FnMut(&Schedule),
    ) {
        if (0..placed.len()).all(|i| placed[i] || !mandatory[i]) {
            visit(schedule);
        }
        for i in 0..placed.len() {
            if placed[i] {
                continue;
            }
            let pid = PatientId(i as u32);
            let pat = instance.patient(pid);
            for &(room, surgeon) in &combos[i] {
                let start = earliest_append_start(instance, pid, surgeon, room, schedule, instance.horizon.tau);
                let end = start + pat.expected_duration;
                if pat.class == PatientClass::UnscheduledElective && end > instance.horizon.lambda {
                    continue;
                }
                schedule.insert(Placement { patient: pid, room, surgeon, start, end });
                placed[i] = true;
                dfs(instance, combos, mandatory, schedule, placed, visit);
                placed[i] = false;
                schedule.purge(pid);
            }
        }
    }
    dfs(instance, &combos, &mandatory, &mut schedule, &mut placed, &mut visit);
    Ok(())
}

/// Best utilisation over all enumerated schedules. `None` when no feasible
/// schedule exists (for example a mandatory patient without a compatible
/// room and surgeon).
pub fn exhaustive_oracle(instance: &Instance) -> Result<Option<(Schedule, f64)>, MipError> {
    let mut best: Option<(Schedule, f64)> = None;
    enumerate_schedules(instance, |s| {
        let u = utilisation(s, instance);
        if best.as_ref().is_none_or(|(_, b)| u > *b + 1e-12) {
            best = Some((s.clone(), u));
        }
    })?;
    if let Some((s, _)) = &best {
        let report = check_feasibility(s, instance).expect("oracle schedule references the instance");
        debug_assert!(report.is_feasible(), "oracle produced an infeasible schedule: {report}");
    }
    Ok(best)
}
