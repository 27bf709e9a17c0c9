//! Paired-seed experiments: train each controller on the same episode
//! schedule, evaluate on held-out mixed and near-saturation scenarios, and
//! write a self-describing bundle.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::baselines::{Baseline, StaticThreshold};
use super::report::MetricReport;
use super::stats::{paired_compare, PairError, PairedStats};
use crate::campaigns::Scenario;
use crate::governance::{AuditRecord, Backends, GovernanceConfig, Governor};
use crate::rl::{
    run_episode, ActMode, AgentParams, Checkpoint, CheckpointError, ConfigError, FastLoop, FrozenAgents, LoopConfig,
    NoReflection, PpoConfig, ReflectionHook, SwitchPolicy,
};
use crate::safety::{PolicyConstitution, PolicyStore, StoreError};
use crate::sim::{write_trace, Environment, SimConfig, SimError, TraceRecord};
use crate::util::{digest_of, mix_seed, sha256_hex};

pub const MANIFEST_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("policy store: {0}")]
    Store(#[from] StoreError),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] CheckpointError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("pairing: {0}")]
    Pair(#[from] PairError),
}

impl From<ConfigError> for ExperimentError {
    fn from(e: ConfigError) -> Self {
        ExperimentError::Config(e.to_string())
    }
}

/// Held-out evaluation episodes per seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSchedule {
    pub mixed_episodes: u64,
    pub saturation_episodes: u64,
    /// Action selection of learned agents during evaluation.
    pub mode: ActMode,
}

impl Default for EvalSchedule {
    fn default() -> Self {
        EvalSchedule { mixed_episodes: 10, saturation_episodes: 40, mode: ActMode::Greedy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub n_switches: usize,
    pub horizon: u64,
    /// Training episodes per seed.
    pub episodes: u64,
    pub seeds: Vec<u64>,
    pub ppo: PpoConfig,
    /// Ticks between reflection rounds for governed runs.
    pub k_reflect: u64,
    pub sim: SimConfig,
    pub governance: GovernanceConfig,
    pub eval: EvalSchedule,
    pub baselines: Vec<Baseline>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_switches: 4,
            horizon: 300,
            episodes: 40,
            seeds: vec![0, 1, 2, 3, 4],
            ppo: PpoConfig::default(),
            k_reflect: 2400,
            sim: SimConfig::default(),
            governance: GovernanceConfig::default(),
            eval: EvalSchedule::default(),
            baselines: Baseline::ALL.to_vec(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.ppo.validate()?;
        self.sim_config().validate()?;
        if self.seeds.is_empty() {
            return Err(ExperimentError::Config("no seeds".into()));
        }
        if self.horizon == 0 {
            return Err(ExperimentError::Config("horizon must be positive".into()));
        }
        if self.baselines.is_empty() {
            return Err(ExperimentError::Config("no baselines".into()));
        }
        Ok(())
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig { n_switches: self.n_switches, ..self.sim.clone() }
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }

    /// Training scenario and environment seed for episode `e` of `seed`.
    pub fn training_episode(&self, seed: u64, e: u64) -> (Scenario, u64) {
        let s = mix_seed(&[seed, e, 0x7A1]);
        (Scenario::training_mix(self.n_switches, self.horizon, s), mix_seed(&[s, 0xE5]))
    }

    /// Held-out evaluation episodes: mixed first, then near-saturation.
    pub fn eval_episodes(&self, seed: u64) -> Vec<EvalEpisode> {
        let mixed = (0..self.eval.mixed_episodes).map(|q| {
            let s = mix_seed(&[seed, q, 0xE7A1]);
            EvalEpisode {
                episode: q,
                kind: EvalKind::Mixed,
                scenario: Scenario::training_mix(self.n_switches, self.horizon, s),
                env_seed: s,
            }
        });
        let sat = (0..self.eval.saturation_episodes).map(|q| {
            let s = mix_seed(&[seed, q, 0x5A7]);
            EvalEpisode {
                episode: self.eval.mixed_episodes + q,
                kind: EvalKind::Saturation,
                scenario: Scenario::saturation(self.n_switches, self.horizon, s),
                env_seed: s,
            }
        });
        mixed.chain(sat).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalKind {
    Mixed,
    Saturation,
}

#[derive(Debug, Clone)]
pub struct EvalEpisode {
    pub episode: u64,
    pub kind: EvalKind,
    pub scenario: Scenario,
    pub env_seed: u64,
}

/// One trained controller on one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub baseline: Baseline,
    pub seed: u64,
    pub pi_digest: String,
    pub pi_version: u64,
    pub update_events: usize,
    pub train_catastrophic_fraction: f64,
    /// Accepted deltas per reflection round, governed runs only.
    pub accepted_per_round: Vec<u64>,
    pub mixed: MetricReport,
    pub saturation: MetricReport,
    /// Catastrophic fraction over every evaluation episode.
    pub catastrophic_fraction: f64,
    pub trace_digest: String,
}

pub struct TrainedRun {
    pub agents: Vec<AgentParams>,
    pub pi: PolicyConstitution,
    pub audit: Vec<AuditRecord>,
    pub update_events: usize,
    pub train_catastrophic: Vec<bool>,
}

/// Paths of a run inside a bundle.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(root: &Path, baseline: Baseline, seed: u64) -> Self {
        RunPaths { dir: root.join(baseline.as_str()).join(format!("seed_{seed}")) }
    }
    pub fn store(&self) -> PathBuf {
        self.dir.join("policy_store.jsonl")
    }
    pub fn audit(&self) -> PathBuf {
        self.dir.join("audit.jsonl")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }
    pub fn trace(&self) -> PathBuf {
        self.dir.join("eval_trace.jsonl")
    }
    pub fn result(&self) -> PathBuf {
        self.dir.join("result.json")
    }
}

/// Trains one controller on the seed's episode schedule.
pub fn train(
    cfg: &ExperimentConfig,
    baseline: Baseline,
    seed: u64,
    paths: Option<&RunPaths>,
) -> Result<TrainedRun, ExperimentError> {
    let genesis = baseline.genesis();
    let store = match paths {
        Some(p) => Some(PolicyStore::create(p.store(), &genesis)?),
        None => None,
    };
    let agents: Vec<AgentParams> =
        (0..cfg.n_switches).map(|i| AgentParams::new(&cfg.ppo, mix_seed(&[seed, i as u64, 0xA6E]))).collect();
    if !baseline.learns() {
        return Ok(TrainedRun {
            agents,
            pi: genesis,
            audit: Vec::new(),
            update_events: 0,
            train_catastrophic: Vec::new(),
        });
    }
    let loop_cfg = LoopConfig {
        ppo: cfg.ppo.clone(),
        k_reflect: if baseline.reflects() { cfg.k_reflect } else { 0 },
        shield: baseline.shield(),
        learn: true,
    };
    let mut governor = baseline.reflects().then(|| {
        let gcfg = GovernanceConfig { sim: cfg.sim_config(), ..cfg.governance.clone() };
        let mut g = Governor::new(Backends::deterministic(), gcfg, cfg.n_switches);
        if let Some(s) = &store {
            g = g.with_store(s.clone());
        }
        if let Some(p) = paths {
            g = g.with_audit_log(p.audit());
        }
        g
    });
    let mut fl = FastLoop::new(loop_cfg, agents, genesis);
    let mut update_events = 0;
    let mut train_catastrophic = Vec::new();
    for e in 0..cfg.episodes {
        let (scenario, env_seed) = cfg.training_episode(seed, e);
        let mut env = Environment::new(cfg.sim_config(), scenario, env_seed)?;
        let hook: &mut dyn ReflectionHook = match governor.as_mut() {
            Some(g) => g,
            None => &mut NoReflection,
        };
        let tr = fl.run_episode(&mut env, e, hook)?;
        update_events += tr.updates.len();
        train_catastrophic.extend(super::metrics::catastrophic_episodes(&tr.records).into_values());
    }
    let audit = governor.map(|g| g.rounds).unwrap_or_default();
    Ok(TrainedRun { agents: fl.agents, pi: fl.pi, audit, update_events, train_catastrophic })
}

/// Runs the held-out evaluation episodes of `seed` in parallel.
pub fn evaluate(
    cfg: &ExperimentConfig,
    baseline: Baseline,
    seed: u64,
    agents: &[AgentParams],
    pi: &PolicyConstitution,
) -> Result<Vec<(EvalKind, Vec<TraceRecord>)>, ExperimentError> {
    let frozen = FrozenAgents { agents, mode: cfg.eval.mode };
    let policy: &dyn SwitchPolicy = if baseline.learns() { &frozen } else { &StaticThreshold };
    cfg.eval_episodes(seed)
        .into_par_iter()
        .map(|ep| {
            let mut env = Environment::new(cfg.sim_config(), ep.scenario, ep.env_seed)?;
            let tr = run_episode(&mut env, pi, baseline.shield(), policy, ep.episode)?;
            Ok((ep.kind, tr))
        })
        .collect()
}

/// Digest of a trace as its JSON-Lines encoding.
pub fn trace_digest(records: &[TraceRecord]) -> String {
    let mut bytes = Vec::new();
    for r in records {
        bytes.extend(serde_json::to_vec(r).expect("trace records serialize"));
        bytes.push(b'\n');
    }
    sha256_hex(&bytes)
}

/// Trains, evaluates and (optionally) writes one run.
pub fn run_one(
    cfg: &ExperimentConfig,
    baseline: Baseline,
    seed: u64,
    root: Option<&Path>,
) -> Result<RunResult, ExperimentError> {
    let paths = root.map(|r| RunPaths::new(r, baseline, seed));
    if let Some(p) = &paths {
        fs::create_dir_all(&p.dir)?;
        if p.audit().exists() {
            fs::remove_file(p.audit())?;
        }
    }
    let trained = train(cfg, baseline, seed, paths.as_ref())?;
    let eval = evaluate(cfg, baseline, seed, &trained.agents, &trained.pi)?;
    let split = |k: EvalKind| eval.iter().filter(|(kind, _)| *kind == k).map(|(_, t)| t.clone()).collect::<Vec<_>>();
    let mixed = split(EvalKind::Mixed);
    let saturation = split(EvalKind::Saturation);
    let all: Vec<Vec<TraceRecord>> = eval.iter().map(|(_, t)| t.clone()).collect();
    let flat: Vec<TraceRecord> = all.concat();
    let patches = &trained.pi.patches;
    let overall = MetricReport::from_episodes(&all, patches);
    let n_train = trained.train_catastrophic.len().max(1) as f64;
    let result = RunResult {
        baseline,
        seed,
        pi_digest: trained.pi.digest(),
        pi_version: trained.pi.version,
        update_events: trained.update_events,
        train_catastrophic_fraction: trained.train_catastrophic.iter().filter(|c| **c).count() as f64 / n_train,
        accepted_per_round: trained.audit.iter().map(|r| u64::from(r.accepted())).collect(),
        mixed: MetricReport::from_episodes(&mixed, patches),
        saturation: MetricReport::from_episodes(&saturation, patches),
        catastrophic_fraction: overall.catastrophic_fraction,
        trace_digest: trace_digest(&flat),
    };
    if let Some(p) = &paths {
        write_trace(&p.trace(), &flat)?;
        Checkpoint::new(&cfg.ppo, trained.agents).save(&p.checkpoint())?;
        fs::write(p.result(), serde_json::to_vec_pretty(&result)?)?;
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub a: Baseline,
    pub b: Baseline,
    pub stats: PairedStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config_digest: String,
    pub runs: Vec<RunResult>,
    pub comparisons: Vec<Comparison>,
}

impl ExperimentReport {
    pub fn run(&self, baseline: Baseline, seed: u64) -> Option<&RunResult> {
        self.runs.iter().find(|r| r.baseline == baseline && r.seed == seed)
    }

    /// Per-seed values of `metric` for `baseline`.
    pub fn per_seed(&self, baseline: Baseline, metric: impl Fn(&RunResult) -> f64) -> BTreeMap<u64, f64> {
        self.runs.iter().filter(|r| r.baseline == baseline).map(|r| (r.seed, metric(r))).collect()
    }
}

type MetricFn = fn(&RunResult) -> f64;

const COMPARED: [(&str, MetricFn); 4] = [
    ("mixed_macro_f1", |r| r.mixed.macro_f1),
    ("saturation_backlog_peak", |r| r.saturation.backlog_peak_mean),
    ("saturation_rtt_p95", |r| r.saturation.rtt_p95),
    ("catastrophic_fraction", |r| r.catastrophic_fraction),
];

fn comparisons(runs: &[RunResult], baselines: &[Baseline]) -> Result<Vec<Comparison>, ExperimentError> {
    let report = ExperimentReport { config_digest: String::new(), runs: runs.to_vec(), comparisons: Vec::new() };
    let mut out = Vec::new();
    if !baselines.contains(&Baseline::FullSystem) {
        return Ok(out);
    }
    for &a in baselines.iter().filter(|b| **b != Baseline::FullSystem) {
        for (name, f) in COMPARED {
            let stats = paired_compare(&report.per_seed(a, f), &report.per_seed(Baseline::FullSystem, f))?;
            out.push(Comparison { metric: name.into(), a, b: Baseline::FullSystem, stats });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: u32,
    pub config_digest: String,
    pub runs: Vec<ManifestRun>,
    /// Relative path → SHA-256 of every artifact.
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub baseline: Baseline,
    pub seed: u64,
    pub dir: String,
    pub trace_digest: String,
    pub pi_digest: String,
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).to_string_lossy().replace('\\', "/")
}

/// Digests every file under `root` except the manifest itself.
pub fn digest_files(root: &Path) -> Result<BTreeMap<String, String>, ExperimentError> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != "manifest.json") {
                out.insert(rel(root, &path), sha256_hex(&fs::read(&path)?));
            }
        }
    }
    Ok(out)
}

/// Runs every (baseline, seed) pair; with `out_dir`, writes the bundle.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport, ExperimentError> {
    cfg.validate()?;
    if let Some(root) = out_dir {
        fs::create_dir_all(root)?;
        fs::write(root.join("config.json"), serde_json::to_vec_pretty(cfg)?)?;
    }
    let jobs: Vec<(Baseline, u64)> =
        cfg.baselines.iter().flat_map(|b| cfg.seeds.iter().map(move |s| (*b, *s))).collect();
    let runs: Vec<RunResult> = jobs
        .par_iter()
        .map(|&(b, s)| {
            tracing::info!(baseline = %b, seed = s, "run started");
            run_one(cfg, b, s, out_dir)
        })
        .collect::<Result<_, _>>()?;
    let report =
        ExperimentReport { config_digest: cfg.digest(), comparisons: comparisons(&runs, &cfg.baselines)?, runs };
    if let Some(root) = out_dir {
        write_bundle_summary(root, cfg, &report)?;
    }
    Ok(report)
}

fn write_bundle_summary(root: &Path, cfg: &ExperimentConfig, report: &ExperimentReport) -> Result<(), ExperimentError> {
    fs::write(root.join("report.json"), serde_json::to_vec_pretty(report)?)?;
    super::csv::write_all(root, report)?;
    let manifest = Manifest {
        format: MANIFEST_FORMAT,
        config_digest: cfg.digest(),
        runs: report
            .runs
            .iter()
            .map(|r| ManifestRun {
                baseline: r.baseline,
                seed: r.seed,
                dir: rel(root, &RunPaths::new(root, r.baseline, r.seed).dir),
                trace_digest: r.trace_digest.clone(),
                pi_digest: r.pi_digest.clone(),
            })
            .collect(),
        files: digest_files(root)?,
    };
    fs::write(root.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}
