use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use reflexnet::campaigns::CampaignClass;
use reflexnet::eval::fixture::{self, BUNDLE_NAME};
use reflexnet::eval::*;
use reflexnet::safety::{Action, Patches};
use reflexnet::sim::{Telemetry, TraceRecord, TrafficLabel};

fn record(episode: u64, tick: u64, attack: bool, executed: Action) -> TraceRecord {
    TraceRecord {
        episode,
        tick,
        switch: 0,
        telemetry: Telemetry::default(),
        sampled_action: executed,
        executed_action: executed,
        reward: Default::default(),
        reward_scalar: 0.0,
        backlog: 0,
        rtt: 77.0,
        flowmods_submitted: 0,
        label: if attack { TrafficLabel::Attack(CampaignClass::HighVolumeBurst) } else { TrafficLabel::Benign },
        queue: 0.0,
        packetins: 0,
        packetin_drops: 0,
        sync_flag: false,
    }
}

fn bundled_fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(BUNDLE_NAME)
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            copy_dir(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

/// Rewrites the backlog of trace line `line` and returns that record's tick.
fn edit_trace_line(path: &Path, line: usize) -> u64 {
    let text = fs::read_to_string(path).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut rec: TraceRecord = serde_json::from_str(&lines[line]).unwrap();
    rec.backlog += 1;
    lines[line] = serde_json::to_string(&rec).unwrap();
    fs::write(path, lines.join("\n") + "\n").unwrap();
    rec.tick
}

fn smoke_config(baselines: Vec<Baseline>) -> ExperimentConfig {
    ExperimentConfig {
        n_switches: 2,
        horizon: 10,
        episodes: 1,
        seeds: vec![0, 1],
        eval: EvalSchedule { mixed_episodes: 1, saturation_episodes: 1, ..EvalSchedule::default() },
        baselines,
        ..ExperimentConfig::default()
    }
}

#[test]
fn macro_f1_hand_example() {
    let mut preds = vec![true; 8];
    let mut labels = vec![true; 8];
    preds.push(true);
    labels.push(false);
    preds.extend([false; 2]);
    labels.extend([true; 2]);
    preds.extend([false; 9]);
    labels.extend([false; 9]);
    let f1 = macro_f1(&preds, &labels).unwrap();
    let pos = 2.0 * 8.0 / (2.0 * 8.0 + 1.0 + 2.0);
    let neg = 2.0 * 9.0 / (2.0 * 9.0 + 2.0 + 1.0);
    assert!((f1 - (pos + neg) / 2.0).abs() < 1e-12);
    assert!((f1 - 0.850).abs() < 1e-3);
}

#[test]
fn macro_f1_scores_an_absent_class_zero() {
    assert_eq!(macro_f1(&[true, true], &[true, true]).unwrap(), 0.5);
    assert_eq!(macro_f1(&[true], &[true, false]), Err(MetricError::Length(1, 2)));
}

#[test]
fn disruption_examples() {
    let patches = Patches::default();
    let idle: Vec<_> = (0..10).map(|t| record(0, t, false, Action::Allow)).collect();
    assert_eq!(disruption_score(&idle, &patches), 0.0);
    assert_eq!(disruption_score(&[record(0, 0, false, Action::Quarantine)], &patches), 4.0);

    let mixed = vec![
        record(0, 0, false, Action::RateLimit),
        record(0, 1, false, Action::DropFlow),
        record(0, 2, true, Action::DropFlow),
        record(0, 3, true, Action::Mirror),
        record(0, 4, false, Action::Mirror),
        record(0, 5, false, Action::Alert),
        record(0, 6, true, Action::Quarantine),
    ];
    assert_eq!(disruption_score(&mixed, &patches), 1.0 + 2.0 + 0.5 + 0.5);
}

#[test]
fn paired_compare_recovers_a_known_effect() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = Normal::new(1.0, 1.0).unwrap();
    let mut estimates = Vec::new();
    for _ in 0..100 {
        let a: BTreeMap<u64, f64> = (0..100).map(|s| (s, s as f64 * 0.1)).collect();
        let b: BTreeMap<u64, f64> = a.iter().map(|(s, v)| (*s, v + noise.sample(&mut rng))).collect();
        estimates.push(paired_compare(&a, &b).unwrap().cohens_d);
    }
    assert!(estimates.iter().all(|d| (0.5..=1.5).contains(d)), "{estimates:?}");
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    assert!((mean - 1.0).abs() < 0.1, "mean d {mean}");
}

#[test]
fn paired_compare_refuses_unpaired_input() {
    let a: BTreeMap<u64, f64> = [(1, 0.0), (2, 1.0)].into();
    let b: BTreeMap<u64, f64> = [(1, 0.0), (3, 1.0)].into();
    assert_eq!(paired_compare(&a, &b), Err(PairError::SeedMismatch));
    assert_eq!(paired_compare(&BTreeMap::new(), &BTreeMap::new()), Err(PairError::Empty));
}

#[test]
fn smoke_run_populates_the_report() {
    let cfg = smoke_config(vec![Baseline::StaticThreshold]);
    let started = std::time::Instant::now();
    let report = run_experiment(&cfg, None).unwrap();
    assert!(started.elapsed().as_secs() < 10);
    assert_eq!(report.runs.len(), 2);
    for run in &report.runs {
        for m in [&run.mixed, &run.saturation] {
            assert_eq!(m.episodes, 1);
            assert_eq!(m.f1_per_agent.len(), 2);
            assert!((0.0..=1.0).contains(&m.macro_f1));
            assert!((0.0..=1.0).contains(&m.catastrophic_fraction));
            assert!(!m.rtt_cdf.is_empty() && !m.f1_cdf.is_empty());
        }
        assert!(!run.trace_digest.is_empty());
    }
    assert_eq!(report, run_experiment(&cfg, None).unwrap());
}

#[test]
fn invalid_config_fails_before_compute() {
    let cfg = ExperimentConfig { seeds: vec![], ..smoke_config(vec![Baseline::FullSystem]) };
    assert!(matches!(run_experiment(&cfg, None), Err(ExperimentError::Config(_))));
}

#[test]
fn report_arrays_are_monotone() {
    let cfg = ExperimentConfig { horizon: 40, ..smoke_config(vec![Baseline::StaticThreshold]) };
    for run in run_experiment(&cfg, None).unwrap().runs {
        for m in [&run.mixed, &run.saturation] {
            let p = [m.rtt_p10, m.rtt_p50, m.rtt_p90, m.rtt_p95];
            assert!(p.windows(2).all(|w| w[0] <= w[1]), "{p:?}");
            for cdf in [&m.rtt_cdf, &m.f1_cdf] {
                assert!(cdf.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 <= w[1].1));
                assert_eq!(cdf.last().unwrap().1, 1.0);
            }
        }
    }
}

#[test]
fn baselines_share_evaluation_scenarios() {
    let cfg = ExperimentConfig::default();
    let digests =
        |seed| cfg.eval_episodes(seed).iter().map(|e| reflexnet::util::digest_of(&e.scenario)).collect::<Vec<_>>();
    assert_eq!(digests(3), digests(3));
    assert_ne!(digests(3), digests(4));
    // the schedule takes no baseline, so every controller faces the same streams
    let static_runs = run_experiment(&smoke_config(vec![Baseline::StaticThreshold]), None).unwrap();
    let again =
        run_experiment(&smoke_config(vec![Baseline::StaticThreshold, Baseline::PpoConstrainedNoGov]), None).unwrap();
    for run in &static_runs.runs {
        assert_eq!(run.trace_digest, again.run(Baseline::StaticThreshold, run.seed).unwrap().trace_digest);
    }
}

#[test]
fn experiment_bundle_replays_and_detects_an_edited_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { horizon: 20, k_reflect: 20, episodes: 2, ..smoke_config(Baseline::ALL.to_vec()) };
    run_experiment(&cfg, Some(dir.path())).unwrap();

    let report = replay_bundle(dir.path()).unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!(report.runs_checked, 8);
    assert_eq!(report.chains_checked, 8);

    let trace = dir.path().join("full_system/seed_1/eval_trace.jsonl");
    let tick = edit_trace_line(&trace, 7);
    let report = replay_bundle(dir.path()).unwrap();
    assert!(!report.passed());
    assert_eq!(report.divergences.len(), 1);
    let d = &report.divergences[0];
    assert_eq!((d.run.as_str(), d.line, d.tick), ("full_system/seed_1", 7, Some(tick)));
    assert!(report.problems.iter().any(|p| p.contains("eval_trace.jsonl")));
}

#[test]
fn missing_artifacts_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(replay_bundle(dir.path()), Err(ReplayError::Missing(_))));
    let run = smoke_config(vec![Baseline::StaticThreshold]);
    run_experiment(&run, Some(dir.path())).unwrap();
    fs::remove_file(dir.path().join("static_threshold/seed_0/checkpoint.json")).unwrap();
    assert!(matches!(replay_bundle(dir.path()), Err(ReplayError::Missing(_))));
}

#[test]
fn bundled_fixture_replays() {
    let report = replay_bundle(&bundled_fixture()).unwrap();
    assert!(report.passed(), "{report:?}");
    assert_eq!((report.runs_checked, report.chains_checked), (1, 1));
}

#[test]
fn bundled_fixture_matches_its_constructor() {
    let (script, history) = fixture::runtime_trace();
    let bundled: ScriptedRun =
        serde_json::from_slice(&fs::read(bundled_fixture().join("script.json")).unwrap()).unwrap();
    assert_eq!(bundled, script);
    let dir = tempfile::tempdir().unwrap();
    script.write_bundle(dir.path(), &history).unwrap();
    for name in ["script.json", "policy_store.jsonl", "eval_trace.jsonl", "manifest.json"] {
        assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(bundled_fixture().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn bundled_fixture_shows_overload_masking() {
    let trace: Vec<TraceRecord> = fs::read_to_string(bundled_fixture().join("eval_trace.jsonl"))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let sw0 = &trace[0];
    assert_eq!(sw0.backlog, 41);
    assert_eq!((sw0.sampled_action, sw0.executed_action), (Action::DropFlow, Action::RateLimit));
    assert!((sw0.queue - 0.48).abs() <= 0.02);
    assert_eq!(trace.iter().find(|r| r.tick == 1).unwrap().backlog, 39);
}

#[test]
fn edited_fixture_diverges_at_that_tick() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&bundled_fixture(), dir.path());
    let tick = edit_trace_line(&dir.path().join("eval_trace.jsonl"), 2);
    let report = replay_bundle(dir.path()).unwrap();
    assert_eq!(report.divergences.len(), 1);
    assert_eq!((report.divergences[0].line, report.divergences[0].tick), (2, Some(tick)));
    assert_eq!(tick, 1);
}

#[test]
fn tampered_fixture_chain_fails() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&bundled_fixture(), dir.path());
    let store = dir.path().join("policy_store.jsonl");
    let text = fs::read_to_string(&store).unwrap().replacen("backlog_cap", "backlog_cax", 1);
    fs::write(&store, text).unwrap();
    let report = replay_bundle(dir.path()).unwrap();
    assert!(!report.passed());
    assert!(report.problems.iter().any(|p| p.contains("hash chain")), "{:?}", report.problems);
}
