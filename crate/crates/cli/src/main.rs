//! `reflexnet`: train, evaluate, reflect, replay and report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use reflexnet::eval::{
    digest_files, evaluate, replay_bundle, run_experiment, trace_digest, Baseline, EvalKind, ExperimentConfig,
    ExperimentReport, Manifest, MetricReport, StaticThreshold, MANIFEST_FORMAT,
};
use reflexnet::governance::{
    append_audit, read_audit, reflect_and_validate, Backends, GovernanceConfig, HttpBackend, Tolerances, API_KEY_ENV,
};
use reflexnet::rl::{ActMode, Checkpoint, FrozenAgents, SwitchPolicy};
use reflexnet::safety::PolicyStore;
use reflexnet::sim::{read_trace, TraceRecord};
use reflexnet::PolicyConstitution;

#[derive(Parser)]
#[command(name = "reflexnet", version, about = "Governed multi-agent SDN-IoT defense experiments")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate every selected baseline, writing a replayable bundle.
    Train(TrainArgs),
    /// Re-evaluate the checkpoints of a trained bundle.
    Evaluate(EvaluateArgs),
    /// Run one governance round on a trace window.
    Reflect(ReflectArgs),
    /// Re-execute a bundle and verify traces, digests and policy chains.
    Replay(ReplayArgs),
    /// Summarize a trained bundle.
    Report(ReportArgs),
}

#[derive(Args)]
struct Selection {
    /// Experiment configuration (TOML or JSON); defaults apply otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seeds as `0,1,2` or `0..5`.
    #[arg(long)]
    seed_set: Option<String>,
    /// Comma-separated baselines, or `all`.
    #[arg(long)]
    baseline: Option<String>,
    /// Gate tolerances as `f1=0.01,rtt_ms=1.0,ctrl_rel=0.05` or a TOML file.
    #[arg(long)]
    tolerances: Option<String>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    select: Selection,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Bundle written by `train`.
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long)]
    seed_set: Option<String>,
    #[arg(long)]
    baseline: Option<String>,
    /// Where to write `evaluation.json` and its manifest.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ReflectArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tolerances: Option<String>,
    /// Trace window (JSON Lines) the round reflects on.
    #[arg(long)]
    trace: PathBuf,
    /// Agents evaluated in the gate; the static baseline when absent.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Policy store to extend; `<out-dir>/policy_store.jsonl` by default,
    /// created from the bootstrap constitution when missing.
    #[arg(long)]
    store: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    /// Chat-completions endpoint serving every role; the key is read from
    /// the environment variable named by `--api-key-env`.
    #[arg(long, requires = "model")]
    endpoint: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long, default_value = API_KEY_ENV)]
    api_key_env: String,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long, visible_alias = "out-dir")]
    bundle: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long, visible_alias = "out-dir")]
    bundle: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        ensure!(a < b, "empty seed range `{s}`");
        return Ok((a..b).collect());
    }
    let seeds = s
        .split(',')
        .map(|x| x.trim().parse::<u64>().with_context(|| format!("bad seed `{x}`")))
        .collect::<Result<Vec<_>>>()?;
    ensure!(!seeds.is_empty(), "no seeds");
    Ok(seeds)
}

fn parse_baselines(s: &str) -> Result<Vec<Baseline>> {
    if s.trim() == "all" {
        return Ok(Baseline::ALL.to_vec());
    }
    s.split(',').map(|b| b.trim().parse::<Baseline>().map_err(anyhow::Error::msg)).collect()
}

fn parse_tolerances(s: &str) -> Result<Tolerances> {
    let path = Path::new(s);
    if path.is_file() {
        let text = fs::read_to_string(path)?;
        return toml::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    let mut t = Tolerances::default();
    for pair in s.split(',').filter(|p| !p.trim().is_empty()) {
        let (k, v) = pair.split_once('=').with_context(|| format!("expected key=value, got `{pair}`"))?;
        let v: f64 = v.trim().parse().with_context(|| format!("bad value in `{pair}`"))?;
        ensure!(v.is_finite() && v >= 0.0, "tolerance `{pair}` must be a non-negative number");
        match k.trim() {
            "f1" => t.f1 = v,
            "rtt_ms" | "rtt" => t.rtt_ms = v,
            "ctrl_rel" | "ctrl" => t.ctrl_rel = v,
            other => bail!("unknown tolerance `{other}`"),
        }
    }
    Ok(t)
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let Some(path) = path else {
        return Ok(ExperimentConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    Ok(cfg)
}

fn select(args: &Selection) -> Result<ExperimentConfig> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = &args.seed_set {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(b) = &args.baseline {
        cfg.baselines = parse_baselines(b)?;
    }
    if let Some(t) = &args.tolerances {
        cfg.governance.tolerances = parse_tolerances(t)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_runs(report: &ExperimentReport) {
    println!(
        "{:<24} {:>5} {:>9} {:>9} {:>10} {:>9} {:>9} {:>8}",
        "baseline", "seed", "macro_f1", "worst_f1", "sat_peak", "rtt_p95", "cat_frac", "pi_ver"
    );
    for r in &report.runs {
        println!(
            "{:<24} {:>5} {:>9.4} {:>9.4} {:>10.2} {:>9.2} {:>9.3} {:>8}",
            r.baseline.as_str(),
            r.seed,
            r.mixed.macro_f1,
            r.mixed.worst_agent_f1,
            r.saturation.backlog_peak_mean,
            r.mixed.rtt_p95,
            r.catastrophic_fraction,
            r.pi_version
        );
    }
}

fn train(args: TrainArgs) -> Result<ExitCode> {
    let cfg = select(&args.select)?;
    let report = run_experiment(&cfg, Some(&args.out_dir))?;
    print_runs(&report);
    println!("bundle written to {}", args.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(serde::Serialize)]
struct Evaluation {
    baseline: Baseline,
    seed: u64,
    trace_digest: String,
    matches_bundle: bool,
    mixed: MetricReport,
    saturation: MetricReport,
}

fn evaluate_bundle(args: EvaluateArgs) -> Result<ExitCode> {
    let cfg: ExperimentConfig =
        serde_json::from_slice(&fs::read(args.bundle.join("config.json")).context("bundle has no config.json")?)?;
    let manifest: Manifest =
        serde_json::from_slice(&fs::read(args.bundle.join("manifest.json")).context("bundle has no manifest.json")?)?;
    let seeds = args.seed_set.as_deref().map(parse_seeds).transpose()?;
    let baselines = args.baseline.as_deref().map(parse_baselines).transpose()?;
    let mut out = Vec::new();
    for run in &manifest.runs {
        if seeds.as_ref().is_some_and(|s| !s.contains(&run.seed))
            || baselines.as_ref().is_some_and(|b| !b.contains(&run.baseline))
        {
            continue;
        }
        let dir = args.bundle.join(&run.dir);
        let store = PolicyStore::open(dir.join("policy_store.jsonl"));
        store.verify().with_context(|| format!("{}: policy chain", run.dir))?;
        let pi = store.latest()?;
        let ck = Checkpoint::load(&dir.join("checkpoint.json"))?;
        let eval = evaluate(&cfg, run.baseline, run.seed, &ck.agents, &pi)?;
        let part = |k: EvalKind| eval.iter().filter(|(kind, _)| *kind == k).map(|(_, t)| t.clone()).collect::<Vec<_>>();
        let flat: Vec<TraceRecord> = eval.iter().flat_map(|(_, t)| t.iter().cloned()).collect();
        let digest = trace_digest(&flat);
        out.push(Evaluation {
            baseline: run.baseline,
            seed: run.seed,
            matches_bundle: digest == run.trace_digest,
            trace_digest: digest,
            mixed: MetricReport::from_episodes(&part(EvalKind::Mixed), &pi.patches),
            saturation: MetricReport::from_episodes(&part(EvalKind::Saturation), &pi.patches),
        });
    }
    ensure!(!out.is_empty(), "no run in the bundle matches the selection");
    for e in &out {
        println!(
            "{:<24} seed {:>3}  macro_f1 {:.4}  sat_peak {:.2}  rtt_p95 {:.2}  {}",
            e.baseline.as_str(),
            e.seed,
            e.mixed.macro_f1,
            e.saturation.backlog_peak_mean,
            e.mixed.rtt_p95,
            if e.matches_bundle { "matches bundle" } else { "DIFFERS from bundle" }
        );
    }
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("evaluation.json"), serde_json::to_vec_pretty(&out)?)?;
        write_manifest(dir, manifest.config_digest.clone())?;
    }
    Ok(if out.iter().all(|e| e.matches_bundle) { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

/// Manifest of a directory with no replayable runs.
fn write_manifest(dir: &Path, config_digest: String) -> Result<()> {
    let manifest = Manifest { format: MANIFEST_FORMAT, config_digest, runs: Vec::new(), files: digest_files(dir)? };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn reflect(args: ReflectArgs) -> Result<ExitCode> {
    let cfg = load_config(args.config.as_deref())?;
    let mut gcfg = GovernanceConfig { sim: cfg.sim_config(), ..cfg.governance.clone() };
    if let Some(t) = &args.tolerances {
        gcfg.tolerances = parse_tolerances(t)?;
    }
    fs::create_dir_all(&args.out_dir)?;
    let store_path = args.store.clone().unwrap_or_else(|| args.out_dir.join("policy_store.jsonl"));
    let store = if store_path.exists() {
        let s = PolicyStore::open(&store_path);
        s.verify().context("policy chain")?;
        s
    } else {
        PolicyStore::create(&store_path, &PolicyConstitution::bootstrap())?
    };
    let pi = store.latest()?;
    let window = read_trace(&args.trace).with_context(|| format!("reading {}", args.trace.display()))?;
    let n_switches = window.iter().map(|r| r.switch + 1).max().unwrap_or(cfg.n_switches);
    gcfg.sim.n_switches = n_switches;

    let checkpoint = args.checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let frozen = checkpoint.as_ref().map(|c| FrozenAgents { agents: &c.agents, mode: ActMode::Greedy });
    if let Some(f) = &frozen {
        ensure!(
            f.agents.len() == n_switches,
            "checkpoint has {} agents, trace has {n_switches} switches",
            f.agents.len()
        );
    }
    let policy: &dyn SwitchPolicy = match &frozen {
        Some(f) => f,
        None => &StaticThreshold,
    };
    let backends = match (&args.endpoint, &args.model) {
        (Some(endpoint), Some(model)) => {
            let mut http = HttpBackend::new(endpoint.clone(), model.clone());
            http.api_key_env = args.api_key_env.clone();
            Backends::external(Arc::new(http))
        }
        _ => Backends::deterministic(),
    };

    let audit_path = args.out_dir.join("audit.jsonl");
    let round = if audit_path.exists() { read_audit(&audit_path)?.len() as u64 } else { 0 };
    let outcome = reflect_and_validate(&pi, round, &window, policy, n_switches, &backends, &gcfg, Some(&store));
    append_audit(&audit_path, &outcome.record)?;
    write_manifest(&args.out_dir, reflexnet::util::digest_of(&gcfg))?;

    let rec = &outcome.record;
    println!("round {round}: {:?}", rec.decision);
    println!("pi_k    {}", rec.pi_k);
    println!("pi_next {}", rec.pi_next);
    for incident in &rec.incidents {
        println!("incident: {incident}");
    }
    Ok(ExitCode::SUCCESS)
}

fn replay(args: ReplayArgs) -> Result<ExitCode> {
    let report = replay_bundle(&args.bundle)?;
    println!("runs {}  chains {}  files {}", report.runs_checked, report.chains_checked, report.files_checked);
    for d in &report.divergences {
        println!(
            "divergence in {} at record {} (episode {:?}, tick {:?}, switch {:?}): {}",
            d.run, d.line, d.episode, d.tick, d.switch, d.detail
        );
    }
    for p in &report.problems {
        println!("problem: {p}");
    }
    if report.passed() {
        println!("PASS");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("FAIL");
        Ok(ExitCode::FAILURE)
    }
}

fn report(args: ReportArgs) -> Result<ExitCode> {
    let path = args.bundle.join("report.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let report: ExperimentReport = serde_json::from_str(&text)?;
    match args.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
        Format::Text => {
            print_runs(&report);
            println!();
            println!("{:<26} {:<24} {:<24} {:>10} {:>9} {:>8}", "metric", "a", "b", "mean(b-a)", "se", "d");
            for c in &report.comparisons {
                println!(
                    "{:<26} {:<24} {:<24} {:>10.4} {:>9.4} {:>8.3}",
                    c.metric,
                    c.a.as_str(),
                    c.b.as_str(),
                    c.stats.mean_delta,
                    c.stats.std_error,
                    c.stats.cohens_d
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { tracing::Level::INFO } else { tracing::Level::WARN };
    tracing_subscriber::fmt().with_max_level(level).with_writer(std::io::stderr).init();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_bundle(a),
        Command::Reflect(a) => reflect(a),
        Command::Replay(a) => replay(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
