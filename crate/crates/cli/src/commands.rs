//! Command implementations. Each takes a fully resolved config and an
//! output directory, writes its files, then writes the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use theatre::gantt::gantt_svg;
use theatre::instancegen::{generate_week, GenParams, WeekInstance};
use theatre::io::{read_week, to_json, trace_jsonl};
use theatre::mip::export_mip;
use theatre::reactive::{PolicyError, ReactionPolicy};
use theatre::replicate::{replication_seed, run_replications, ReplicationError, Scenario};
use theatre::simulator::{day_subset, simulate_week, SimConfig, SimError};
use theatre::tuner::{tune, TunerError};

use crate::config::{
    load_base, ExportConfig, GenerateConfig, Manifest, Resolved, SimulateConfig, TuneConfig, MANIFEST,
};
use crate::error::{input, read_file};

/// Collects output files so the manifest can list them.
struct Out {
    dir: PathBuf,
    files: Vec<String>,
}

impl Out {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> anyhow::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().context("flushing CSV")?;
        self.write(name, bytes)
    }

    fn finish(self, run: Resolved) -> anyhow::Result<()> {
        let manifest = Manifest::new(run, self.files);
        let path = self.dir.join(MANIFEST);
        fs::write(&path, to_json(&manifest)).with_context(|| format!("cannot write {}", path.display()))
    }
}

fn load_params(path: Option<&Path>) -> anyhow::Result<GenParams> {
    let params: GenParams = load_base(path)?;
    params.validate().map_err(|e| input(format!("invalid generator parameters: {e}")))?;
    Ok(params)
}

fn load_week(path: &Path) -> anyhow::Result<WeekInstance> {
    let text = read_file(path)?;
    read_week(&text).map_err(|e| input(format!("{}: {e}", path.display())))
}

fn policy_input(e: PolicyError) -> anyhow::Error {
    input(format!("policy: {e}"))
}

/// Input problems surfacing from inside a simulation are reported as such.
fn sim_error(e: ReplicationError) -> anyhow::Error {
    match e {
        ReplicationError::Sim { source: SimError::Policy(p), .. } => policy_input(p),
        ReplicationError::Sim { source: SimError::InvalidWeek(m), .. } => input(format!("invalid week: {m}")),
        ReplicationError::Gen { source, .. } => input(format!("invalid generator parameters: {source}")),
        other => other.into(),
    }
}

enum Source {
    Week(WeekInstance),
    Params(GenParams),
}

impl Source {
    fn load(instance: Option<&Path>, params: Option<&Path>) -> anyhow::Result<Self> {
        match (instance, params) {
            (Some(_), Some(_)) => Err(input("give either an instance or generator parameters, not both")),
            (Some(i), None) => Ok(Self::Week(load_week(i)?)),
            (None, p) => Ok(Self::Params(load_params(p)?)),
        }
    }

    fn scenario(&self) -> Scenario<'_> {
        match self {
            Self::Week(w) => Scenario::Week(w),
            Self::Params(p) => Scenario::Params(p),
        }
    }
}

pub fn generate(cfg: &GenerateConfig, out: &Path) -> anyhow::Result<()> {
    let mut params = load_params(cfg.params.as_deref())?;
    if let Some(seed) = cfg.seed {
        params.seed = seed;
    }
    let week = generate_week(&params).map_err(|e| input(e.to_string()))?;
    let mut o = Out::new(out)?;
    o.write("week.json", to_json(&week))?;
    o.write("summary.json", to_json(&week.summary()))?;
    o.finish(Resolved::Generate(cfg.clone()))
}

pub fn simulate(cfg: &SimulateConfig, out: &Path) -> anyhow::Result<()> {
    if cfg.replications == 0 {
        return Err(input("replications must be at least 1"));
    }
    if cfg.strategies.is_empty() {
        return Err(input("no strategy selected"));
    }
    let source = Source::load(cfg.instance.as_deref(), cfg.params.as_deref())?;
    let policy = match &cfg.policy {
        None => ReactionPolicy::tuned(),
        Some(path) => {
            let text = read_file(path)?;
            let prior = ReactionPolicy::do_nothing_prior(&cfg.strategies);
            ReactionPolicy::from_json(&text, cfg.fill_prior.then_some(&prior))
                .map_err(|e| input(format!("{}: {e}", path.display())))?
        }
    };
    for &s in &cfg.strategies {
        policy.require(s).map_err(policy_input)?;
    }
    let sim = SimConfig { verify: cfg.verify, rebuild_order: cfg.rebuild_order, ..SimConfig::default() };
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut o = Out::new(out)?;
    for &s in &cfg.strategies {
        let agg = run_replications(source.scenario(), &policy, s, cfg.replications, cfg.seed, &sim).map_err(sim_error)?;
        rows.push(agg.row(cfg.timing));
        runs.extend(agg.run_rows(cfg.timing));
        if cfg.traces {
            let seed = replication_seed(cfg.seed, 0);
            let owned;
            let week = match &source {
                Source::Week(w) => w,
                Source::Params(p) => {
                    owned = generate_week(&GenParams { seed, ..p.clone() }).map_err(|e| input(e.to_string()))?;
                    &owned
                }
            };
            let detail = SimConfig { trace: true, keep_days: true, ..sim.clone() };
            let r = simulate_week(week, &policy, s, seed, &detail).with_context(|| format!("{s} trace run"))?;
            o.write(&format!("traces/{s}.jsonl"), trace_jsonl(&r.trace))?;
            for d in &r.days {
                let title = format!("{s} day {} (replication 0)", d.day);
                o.write(&format!("gantt/{s}-day{}.svg", d.day), gantt_svg(&d.realised, &d.instance, &title))?;
            }
        }
    }
    o.csv("metrics.csv", &rows)?;
    o.csv("replications.csv", &runs)?;
    o.finish(Resolved::Simulate(cfg.clone()))
}

pub fn tune_cmd(cfg: &TuneConfig, out: &Path) -> anyhow::Result<()> {
    cfg.tuner.validate().map_err(|e| input(e.to_string()))?;
    let source = Source::load(cfg.instance.as_deref(), cfg.params.as_deref())?;
    let sim = SimConfig { rebuild_order: cfg.rebuild_order, ..SimConfig::default() };
    let (policy, trace) = tune(&cfg.tuner, source.scenario(), &sim).map_err(|e| match e {
        TunerError::Config(m) => input(m),
        TunerError::Replication(r) => sim_error(r),
    })?;
    let mut o = Out::new(out)?;
    o.write("policy.json", policy.to_json())?;
    o.csv("trace.csv", &trace.rows())?;
    o.finish(Resolved::Tune(cfg.clone()))
}

pub fn export(cfg: &ExportConfig, out: &Path) -> anyhow::Result<()> {
    let path = cfg.instance.as_deref().ok_or_else(|| input("export-mip needs --instance"))?;
    let week = load_week(path)?;
    let day = day_subset(&week, cfg.day).map_err(|e| input(e.to_string()))?;
    let lp = export_mip(&day).map_err(|e| input(format!("day {}: {e}", cfg.day)))?;
    let mut o = Out::new(out)?;
    o.write(&format!("day{}.lp", cfg.day), lp)?;
    o.finish(Resolved::ExportMip(cfg.clone()))
}

pub fn run(resolved: &Resolved, out: &Path) -> anyhow::Result<()> {
    match resolved {
        Resolved::Generate(c) => generate(c, out),
        Resolved::Simulate(c) => simulate(c, out),
        Resolved::Tune(c) => tune_cmd(c, out),
        Resolved::ExportMip(c) => export(c, out),
    }
}
