mod common;

use proptest::prelude::*;

use reflexnet::campaigns::Scenario;
use reflexnet::safety::Action;
use reflexnet::sim::*;

proptest! {
    #[test]
    fn backlog_update_matches_wide_arithmetic(d in 0u64..=256, arrivals in 0u64..400, served in 0u64..400) {
        prop_assert_eq!(backlog_update(d, arrivals, served, 256), common::backlog_oracle(d, arrivals, served, 256));
    }

    #[test]
    fn backlog_stays_in_buffer(d in 0u64..=256, arrivals in 0u64..1000, served in 0u64..50, buffer in 1u64..512) {
        let (next, dropped) = backlog_update(d.min(buffer), arrivals, served, buffer);
        prop_assert!(next <= buffer);
        prop_assert!(dropped == 0 || next == buffer);
    }

    #[test]
    fn queue_update_is_clamped(q in 0.0f64..=1.0, load in 0.0f64..2.0, service in 0.0f64..1.0, delta in 0.0f64..1.0) {
        let (next, overflow) = queue_update(q, load, service, delta);
        prop_assert!((0.0..=1.0).contains(&next));
        prop_assert!(overflow >= 0.0);
        prop_assert!((next + overflow - (q + load - service + delta).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn entropy_is_normalized(raw in prop::collection::vec(0.0f64..1.0, 2..16)) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let p: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let h = source_entropy(&p).unwrap();
        prop_assert!((0.0..=1.0).contains(&h));
    }

    #[test]
    fn random_actions_keep_state_well_formed(seed in any::<u64>(), picks in prop::collection::vec(0usize..6, 120)) {
        let mut env = Environment::new(SimConfig::default(), Scenario::training_mix(4, 30, seed), seed).unwrap();
        let mut k = 0;
        while !env.is_done() {
            env.begin_tick();
            let acts: Vec<Action> = (0..4).map(|_| { k += 1; Action::from_index(picks[k - 1]).unwrap() }).collect();
            let out = env.apply(&acts).unwrap();
            prop_assert!(env.state().check().is_ok(), "{:?}", env.state().check());
            prop_assert!(env.state().controller.backlog <= 256);
            prop_assert!(out.iter().all(|o| o.rtt_ms.is_finite() && (0.0..=1.0).contains(&o.queue_after)));
        }
    }
}

#[test]
fn entropy_closed_forms() {
    for k in 2..=12usize {
        assert!((source_entropy(&vec![1.0 / k as f64; k]).unwrap() - 1.0).abs() < 1e-9);
        let mut point = vec![0.0; k];
        point[k / 2] = 1.0;
        assert_eq!(source_entropy(&point).unwrap(), 0.0);
    }
    for p in [0.1, 0.25, 0.5, 0.9] {
        let binary = -(p * f64::ln(p) + (1.0 - p) * f64::ln(1.0 - p)) / 2f64.ln();
        assert!((source_entropy(&[p, 1.0 - p]).unwrap() - binary).abs() < 1e-9);
    }
    // two equal bins out of k: ln 2 / ln k
    for k in 3..=8usize {
        let mut h = vec![0.0; k];
        h[0] = 0.5;
        h[1] = 0.5;
        assert!((source_entropy(&h).unwrap() - 2f64.ln() / (k as f64).ln()).abs() < 1e-9);
    }
}

#[test]
fn stability_dichotomy() {
    let mu = SimConfig::default().service_rate;
    for model in [ServiceModel::Deterministic, ServiceModel::Stochastic] {
        let (mean, _) = common::backlog_process(0.8 * mu, 10_000, model, 3);
        assert!(mean < 40.0, "{model:?} stable mean {mean}");
        let (_, peak) = common::backlog_process(1.2 * mu, 10_000, model, 3);
        assert_eq!(peak, 256, "{model:?} overloaded peak");
    }
}

#[test]
fn hint_flips_at_the_configured_rate() {
    let cfg = SimConfig { n_switches: 1, ..SimConfig::default() };
    let mut state = NetworkState::new(1, cfg.service_rate, cfg.flow_timeout_ticks);
    state.regime = Scenario::saturation(1, 10, 0).regime(0);
    let attack = state.regime.switches[0].label.is_attack();
    let n = 20_000u64;
    let mut flips = 0u64;
    for seed in 0..n {
        let t = observe(&state, &cfg, 0, seed, 0.8).unwrap();
        flips += u64::from((t.hint == 1.0) != attack);
        assert_eq!(observe(&state, &cfg, 0, seed, 1.0).unwrap().hint == 1.0, attack);
    }
    let p = flips as f64 / n as f64;
    let ci = 4.0 * (0.2f64 * 0.8 / n as f64).sqrt();
    assert!((p - 0.2).abs() < ci, "flip rate {p}");
}

#[test]
fn identical_seed_gives_identical_trace_file() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let mut env = Environment::new(SimConfig::default(), Scenario::training_mix(4, 60, 9), 9).unwrap();
        let pi = reflexnet::PolicyConstitution::bootstrap();
        let policy = reflexnet::rl::ConstantPolicy(Action::RateLimit);
        let trace = reflexnet::rl::run_episode(&mut env, &pi, reflexnet::rl::Shield::Filtered, &policy, 0).unwrap();
        let path = dir.path().join(name);
        write_trace(&path, &trace).unwrap();
        assert_eq!(read_trace(&path).unwrap(), trace);
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a.jsonl"), run("b.jsonl"));
}
