//! Bundle verification: re-executes recorded runs, compares traces byte for
//! byte, and checks policy hash chains and manifest digests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::experiment::{
    digest_files, evaluate, trace_digest, ExperimentConfig, Manifest, ManifestRun, MANIFEST_FORMAT,
};
use crate::campaigns::Scenario;
use crate::rl::{run_tick, Checkpoint, Shield};
use crate::safety::{Action, PolicyConstitution, PolicyDelta, PolicyStore};
use crate::sim::{ControllerStep, Environment, NetworkState, SimConfig, SimError, TraceRecord};

pub const SCRIPT_FILE: &str = "script.json";
pub const CONFIG_FILE: &str = "config.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const STORE_FILE: &str = "policy_store.jsonl";
pub const TRACE_FILE: &str = "eval_trace.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("missing artifact {0}")]
    Missing(PathBuf),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json in {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("unsupported manifest format {0}")]
    Format(u32),
    #[error("bundle has neither {CONFIG_FILE} nor {SCRIPT_FILE}")]
    UnknownKind,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, ReplayError> {
    if !path.exists() {
        return Err(ReplayError::Missing(path.to_path_buf()));
    }
    serde_json::from_slice(&fs::read(path)?).map_err(|source| ReplayError::Json { path: path.to_path_buf(), source })
}

/// A fixed sequence of sampled actions played from a given state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRun {
    pub sim: SimConfig,
    pub scenario: Scenario,
    pub initial_state: NetworkState,
    pub env_seed: u64,
    pub episode: u64,
    /// Sampled action of every switch at every tick.
    pub actions: Vec<Vec<Action>>,
}

impl ScriptedRun {
    /// Plays the script under `pi`; returns the trace and each tick's
    /// controller step plus the step that follows the last tick.
    pub fn execute(&self, pi: &PolicyConstitution) -> Result<(Vec<TraceRecord>, Vec<ControllerStep>), SimError> {
        let mut env = Environment::from_state(
            self.sim.clone(),
            self.scenario.clone(),
            self.env_seed,
            self.initial_state.clone(),
        )?;
        let mut trace = Vec::new();
        let mut steps = Vec::new();
        for (t, row) in self.actions.iter().enumerate() {
            if row.len() != self.sim.n_switches {
                return Err(SimError::ActionCount { expected: self.sim.n_switches, got: row.len() });
            }
            let r = run_tick(&mut env, pi, Shield::Filtered, self.episode, |i, _| self.actions[t][i])?;
            steps.push(env.last_controller_step().clone());
            trace.extend(r.records);
        }
        steps.push(env.begin_tick().clone());
        Ok((trace, steps))
    }

    /// Writes a self-contained bundle: script, policy chain, trace, manifest.
    pub fn write_bundle(
        &self,
        dir: &Path,
        history: &[(PolicyConstitution, Option<PolicyDelta>)],
    ) -> Result<(), BundleWriteError> {
        let (genesis, rest) = history.split_first().ok_or(BundleWriteError::NoPolicy)?;
        fs::create_dir_all(dir)?;
        fs::write(dir.join(SCRIPT_FILE), serde_json::to_vec_pretty(self)?)?;
        let store = PolicyStore::create(dir.join(STORE_FILE), &genesis.0)?;
        for (pi, delta) in rest {
            store.append(pi, delta.as_ref().ok_or(BundleWriteError::NoPolicy)?)?;
        }
        let pi = store.latest()?;
        let (trace, _) = self.execute(&pi)?;
        crate::sim::write_trace(&dir.join(TRACE_FILE), &trace)?;
        let manifest = Manifest {
            format: MANIFEST_FORMAT,
            config_digest: crate::util::digest_of(self),
            runs: vec![ManifestRun {
                baseline: super::Baseline::FullSystem,
                seed: self.env_seed,
                dir: ".".into(),
                trace_digest: trace_digest(&trace),
                pi_digest: pi.digest(),
            }],
            files: digest_files(dir)?,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum BundleWriteError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("store: {0}")]
    Store(#[from] crate::safety::StoreError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("experiment: {0}")]
    Experiment(#[from] super::ExperimentError),
    #[error("history must start with a genesis policy and give a delta for every successor")]
    NoPolicy,
}

/// First place a regenerated trace departs from the recorded one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub run: String,
    /// Zero-based record index.
    pub line: usize,
    pub episode: Option<u64>,
    pub tick: Option<u64>,
    pub switch: Option<usize>,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub bundle: PathBuf,
    pub runs_checked: usize,
    pub chains_checked: usize,
    pub files_checked: usize,
    pub divergences: Vec<Divergence>,
    /// Chain, digest and manifest failures.
    pub problems: Vec<String>,
}

impl ReplayReport {
    pub fn passed(&self) -> bool {
        self.divergences.is_empty() && self.problems.is_empty() && self.runs_checked > 0
    }
}

fn encode(records: &[TraceRecord]) -> Vec<String> {
    records.iter().map(|r| serde_json::to_string(r).expect("trace records serialize")).collect()
}

/// Compares regenerated records with the recorded file line by line.
fn compare_trace(run: &str, recorded: &Path, fresh: &[TraceRecord]) -> Result<Option<Divergence>, ReplayError> {
    if !recorded.exists() {
        return Err(ReplayError::Missing(recorded.to_path_buf()));
    }
    let text = fs::read_to_string(recorded)?;
    let old: Vec<&str> = text.lines().collect();
    let new = encode(fresh);
    let at = |line: usize, detail: String| {
        let rec = old
            .get(line)
            .and_then(|l| serde_json::from_str::<TraceRecord>(l).ok())
            .or_else(|| fresh.get(line).cloned());
        Divergence {
            run: run.to_string(),
            line,
            episode: rec.as_ref().map(|r| r.episode),
            tick: rec.as_ref().map(|r| r.tick),
            switch: rec.as_ref().map(|r| r.switch),
            detail,
        }
    };
    if let Some(i) = old.iter().zip(&new).position(|(a, b)| *a != b.as_str()) {
        return Ok(Some(at(i, "record differs".into())));
    }
    if old.len() != new.len() {
        let i = old.len().min(new.len());
        return Ok(Some(at(i, format!("recorded {} records, replay produced {}", old.len(), new.len()))));
    }
    Ok(None)
}

fn check_files(root: &Path, manifest: &Manifest, report: &mut ReplayReport) -> Result<(), ReplayError> {
    let found = digest_files(root).map_err(|e| ReplayError::Io(std::io::Error::other(e.to_string())))?;
    for (name, digest) in &manifest.files {
        match found.get(name) {
            Some(d) if d == digest => {}
            Some(_) => report.problems.push(format!("{name}: digest differs from manifest")),
            None => report.problems.push(format!("{name}: listed in manifest but missing")),
        }
    }
    for name in found.keys().filter(|n| !manifest.files.contains_key(*n)) {
        report.problems.push(format!("{name}: not listed in manifest"));
    }
    report.files_checked = manifest.files.len();
    Ok(())
}

/// Verifies the chain at `path` and returns its latest policy.
fn check_store(path: &Path, label: &str, report: &mut ReplayReport) -> Option<PolicyConstitution> {
    if !path.exists() {
        report.problems.push(format!("{label}: policy store missing"));
        return None;
    }
    let store = PolicyStore::open(path);
    match store.verify() {
        Ok(_) => {
            report.chains_checked += 1;
            store.latest().ok()
        }
        Err(e) => {
            report.problems.push(format!("{label}: hash chain invalid: {e}"));
            None
        }
    }
}

fn replay_run(
    root: &Path,
    cfg: &ExperimentConfig,
    run: &ManifestRun,
    report: &mut ReplayReport,
) -> Result<(), ReplayError> {
    let label = format!("{}/seed_{}", run.baseline, run.seed);
    let dir = root.join(&run.dir);
    let Some(pi) = check_store(&dir.join(STORE_FILE), &label, report) else {
        return Ok(());
    };
    if pi.digest() != run.pi_digest {
        report.problems.push(format!("{label}: latest policy digest differs from manifest"));
    }
    let ck_path = dir.join(CHECKPOINT_FILE);
    if !ck_path.exists() {
        return Err(ReplayError::Missing(ck_path));
    }
    let ck = match Checkpoint::load(&ck_path) {
        Ok(ck) => ck,
        Err(e) => {
            report.problems.push(format!("{label}: checkpoint unreadable: {e}"));
            return Ok(());
        }
    };
    let eval = match evaluate(cfg, run.baseline, run.seed, &ck.agents, &pi) {
        Ok(e) => e,
        Err(e) => {
            report.problems.push(format!("{label}: re-execution failed: {e}"));
            return Ok(());
        }
    };
    let fresh: Vec<TraceRecord> = eval.into_iter().flat_map(|(_, t)| t).collect();
    if trace_digest(&fresh) != run.trace_digest {
        report.problems.push(format!("{label}: replayed trace digest differs from manifest"));
    }
    if let Some(d) = compare_trace(&label, &dir.join(TRACE_FILE), &fresh)? {
        report.divergences.push(d);
    }
    report.runs_checked += 1;
    Ok(())
}

/// Replays every run of the bundle at `root`.
pub fn replay_bundle(root: &Path) -> Result<ReplayReport, ReplayError> {
    let manifest: Manifest = read_json(&root.join(MANIFEST_FILE))?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(ReplayError::Format(manifest.format));
    }
    let mut report = ReplayReport { bundle: root.to_path_buf(), ..ReplayReport::default() };
    check_files(root, &manifest, &mut report)?;

    if root.join(CONFIG_FILE).exists() {
        let cfg: ExperimentConfig = read_json(&root.join(CONFIG_FILE))?;
        if cfg.digest() != manifest.config_digest {
            report.problems.push("config digest differs from manifest".into());
        }
        for run in &manifest.runs {
            replay_run(root, &cfg, run, &mut report)?;
        }
    } else if root.join(SCRIPT_FILE).exists() {
        let script: ScriptedRun = read_json(&root.join(SCRIPT_FILE))?;
        if crate::util::digest_of(&script) != manifest.config_digest {
            report.problems.push("script digest differs from manifest".into());
        }
        if let Some(pi) = check_store(&root.join(STORE_FILE), "script", &mut report) {
            match script.execute(&pi) {
                Ok((fresh, _)) => {
                    if manifest
                        .runs
                        .iter()
                        .any(|r| r.trace_digest != trace_digest(&fresh) || r.pi_digest != pi.digest())
                    {
                        report.problems.push("script: replayed digests differ from manifest".into());
                    }
                    if let Some(d) = compare_trace("script", &root.join(TRACE_FILE), &fresh)? {
                        report.divergences.push(d);
                    }
                    report.runs_checked += 1;
                }
                Err(e) => report.problems.push(format!("script: re-execution failed: {e}")),
            }
        }
    } else {
        return Err(ReplayError::UnknownKind);
    }
    Ok(report)
}
