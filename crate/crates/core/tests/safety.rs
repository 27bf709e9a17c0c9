mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use reflexnet::safety::*;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn executed_action_is_feasible(seed in any::<u64>(), sampled in 0usize..6, used_fm in 0u32..8, used_heavy in 0u32..3) {
        let mut r = rng(seed);
        let pi = common::random_constitution(&mut r);
        let ctx = common::random_context(&mut r);
        let a = Action::from_index(sampled).unwrap();
        let feasible = feasible_set(&pi, &ctx);
        prop_assert!(feasible.contains(safety_filter(a, feasible)));
        let budget = ActuationBudget { flowmods_used: used_fm, heavy_used: used_heavy };
        let tight = feasible_set_with_budget(&pi, &ctx, &budget);
        prop_assert!(tight.is_subset(feasible));
        let executed = safety_filter(a, tight);
        prop_assert!(tight.contains(executed));
        prop_assert!(executed <= a);
    }

    #[test]
    fn forbid_rules_never_enlarge_the_feasible_set(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pi = common::random_constitution(&mut r);
        let ctx = common::random_context(&mut r);
        let rule = common::random_rule(&mut r, RuleMode::Forbid);
        let mut direct = pi.clone();
        direct.mask_rules.push(rule.clone());
        let merged = merge(&pi, &PolicyDelta { mask_rule_edits: vec![MaskEdit::Add { rule }], ..PolicyDelta::default() }).unwrap();
        let before = feasible_set(&pi, &ctx);
        prop_assert!(feasible_set(&direct, &ctx).is_subset(before));
        prop_assert!(feasible_set(&merged, &ctx).is_subset(before));
    }

    #[test]
    fn merge_is_idempotent_on_duplicate_rules(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pi = common::random_constitution(&mut r);
        let rules: Vec<MaskRule> = (0..3).map(|_| common::random_rule(&mut r, RuleMode::Forbid)).collect();
        let once = PolicyDelta { mask_rule_edits: rules.iter().cloned().map(|rule| MaskEdit::Add { rule }).collect(), ..PolicyDelta::default() };
        let twice = PolicyDelta { mask_rule_edits: once.mask_rule_edits.iter().chain(&once.mask_rule_edits).cloned().collect(), ..PolicyDelta::default() };
        let a = merge(&pi, &once).unwrap();
        prop_assert_eq!(&merge(&pi, &twice).unwrap().mask_rules, &a.mask_rules);
        prop_assert_eq!(&merge(&a, &once).unwrap().mask_rules, &a.mask_rules);
    }

    #[test]
    fn merged_candidates_keep_floor_bounds_and_drift(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pi = common::random_constitution(&mut r);
        let mut delta = common::random_delta(&mut r, &pi);
        // try to strip the floor as well
        delta.mask_rule_edits.extend(hard_floor_rules().into_iter().map(|f| MaskEdit::Remove { canonical_id: f.canonical_id }));
        let cand = merge(&pi, &delta).unwrap();
        prop_assert!(common::has_floor(&cand));
        prop_assert!(cand.structural_violations().is_empty(), "{:?}", cand.structural_violations());
        for t in cand.thresholds.values() {
            prop_assert!(t.value >= t.min && t.value <= t.max);
        }
        prop_assert!(cand.reward_weights.max_abs_diff(&pi.reward_weights) <= 0.25 + 1e-12);
        prop_assert_eq!(cand.version, pi.version + 1);
        prop_assert_eq!(cand.parent_hash, pi.digest());
    }

    #[test]
    fn merge_is_deterministic(seed in any::<u64>()) {
        let mut r = rng(seed);
        let pi = common::random_constitution(&mut r);
        let delta = common::random_delta(&mut r, &pi);
        prop_assert_eq!(merge(&pi, &delta).unwrap().digest(), merge(&pi, &delta).unwrap().digest());
    }

    #[test]
    fn constitution_round_trips_through_json(seed in any::<u64>()) {
        let pi = common::random_constitution(&mut rng(seed));
        let back: PolicyConstitution = serde_json::from_str(&serde_json::to_string(&pi).unwrap()).unwrap();
        prop_assert_eq!(back.digest(), pi.digest());
    }
}

#[test]
fn hard_floor_blocks_heavy_actions_at_saturation() {
    let pi = PolicyConstitution::bootstrap();
    let ctx = RuleContext { utilization: 0.95, ..RuleContext::default() };
    let f = feasible_set(&pi, &ctx);
    assert!(!f.contains(Action::DropFlow) && !f.contains(Action::Quarantine));
    assert_eq!(safety_filter(Action::Quarantine, f), Action::RateLimit);
    assert_eq!(feasible_set(&pi, &RuleContext { utilization: 0.94, ..ctx }), ActionSet::FULL);
}

#[test]
fn unknown_threshold_is_rejected_whole() {
    let pi = PolicyConstitution::bootstrap();
    let delta = PolicyDelta { threshold_updates: [("nope".to_string(), 1.0)].into(), ..PolicyDelta::default() };
    assert_eq!(merge(&pi, &delta), Err(MergeError::UnknownThreshold("nope".into())));
}
