//! The deterministic merge operator applying a delta to a constitution.
//!
//! Precedence: hard floor, then masks, then thresholds, then the reward patch.

use thiserror::Error;

use super::constitution::{
    hard_floor_rules, PolicyConstitution, ACTION_COST_BOUNDS, FLOWMOD_THROTTLE_BOUNDS, HEAVY_CAP_BOUNDS,
    HINT_TRUST_BOUNDS, MIN_SECURITY_WEIGHT, WEIGHT_BOUNDS, WEIGHT_DRIFT_LIMIT,
};
use super::delta::{MaskEdit, PolicyDelta};
use super::rule::{MaskRule, RuleMode, RuleOrigin};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MergeError {
    #[error("unknown threshold `{0}`")]
    UnknownThreshold(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

/// Applies `delta` to `pi` and returns the candidate successor.
///
/// Either the whole delta applies or an error is returned; `pi` is never
/// modified.
pub fn merge(pi: &PolicyConstitution, delta: &PolicyDelta) -> Result<PolicyConstitution, MergeError> {
    validate(pi, delta)?;
    let floor = hard_floor_rules();
    let is_floor = |id: &str| floor.iter().any(|r| r.canonical_id == id);

    let mut cand = pi.clone();

    // (1) hard floor: reassert, and ignore any attempt to remove it
    cand.mask_rules.retain(|r| r.origin != RuleOrigin::HardFloor);

    // (2) masks
    for edit in &delta.mask_rule_edits {
        match edit {
            MaskEdit::Remove { canonical_id } => {
                if !is_floor(canonical_id) {
                    cand.mask_rules.retain(|r| &r.canonical_id != canonical_id);
                }
            }
            MaskEdit::Add { rule } => {
                let mut rule = rule.clone();
                rule.origin = RuleOrigin::Governance;
                rule.normalize();
                if is_floor(&rule.canonical_id) || cand.has_rule(&rule.canonical_id) {
                    continue;
                }
                let key = rule.predicate_key();
                match rule.mode {
                    RuleMode::Allow => {
                        let shadowed = cand
                            .mask_rules
                            .iter()
                            .chain(floor.iter())
                            .any(|r| r.mode == RuleMode::Forbid && r.predicate_key() == key);
                        if shadowed {
                            continue;
                        }
                    }
                    RuleMode::Forbid => {
                        cand.mask_rules.retain(|r| !(r.mode == RuleMode::Allow && r.predicate_key() == key));
                    }
                }
                cand.mask_rules.push(rule);
            }
        }
    }
    let mut rules = floor;
    rules.append(&mut cand.mask_rules);
    cand.mask_rules = rules;

    // (3) thresholds
    for (name, value) in &delta.threshold_updates {
        let spec = cand.thresholds.get_mut(name).expect("validated");
        spec.value = value.clamp(spec.min, spec.max);
    }

    // (4) reward weights and χ
    let old = pi.reward_weights.as_array();
    let mut w = old;
    for (i, d) in delta.reward_patch.weight_deltas.as_array().iter().enumerate() {
        let d = d.clamp(-WEIGHT_DRIFT_LIMIT, WEIGHT_DRIFT_LIMIT);
        w[i] = (old[i] + d).clamp(WEIGHT_BOUNDS.0, WEIGHT_BOUNDS.1);
    }
    w[0] = w[0].max(MIN_SECURITY_WEIGHT);
    cand.reward_weights = super::constitution::RewardWeights::from_array(w);

    let edits = &delta.reward_patch.patch_edits;
    if let Some(table) = &edits.action_cost_table {
        for (a, c) in table {
            cand.patches.action_cost_table.insert(*a, c.clamp(ACTION_COST_BOUNDS.0, ACTION_COST_BOUNDS.1));
        }
    }
    if let Some(h) = edits.hint_trust {
        cand.patches.hint_trust = h.clamp(HINT_TRUST_BOUNDS.0, HINT_TRUST_BOUNDS.1);
    }
    if let Some(t) = edits.flowmod_throttle {
        cand.patches.flowmod_throttle = t.clamp(FLOWMOD_THROTTLE_BOUNDS.0, FLOWMOD_THROTTLE_BOUNDS.1);
    }
    if let Some(c) = edits.heavy_action_cap {
        cand.patches.heavy_action_cap = c.clamp(HEAVY_CAP_BOUNDS.0, HEAVY_CAP_BOUNDS.1);
    }

    cand.version = pi.version + 1;
    cand.parent_hash = pi.digest();
    Ok(cand)
}

fn validate(pi: &PolicyConstitution, delta: &PolicyDelta) -> Result<(), MergeError> {
    for (name, value) in &delta.threshold_updates {
        if !pi.thresholds.contains_key(name) {
            return Err(MergeError::UnknownThreshold(name.clone()));
        }
        if !value.is_finite() {
            return Err(MergeError::NonFinite(format!("threshold `{name}`")));
        }
    }
    for rule in delta.added_rules() {
        check_rule(pi, rule)?;
    }
    if delta.reward_patch.weight_deltas.as_array().iter().any(|d| !d.is_finite()) {
        return Err(MergeError::NonFinite("weight deltas".into()));
    }
    let edits = &delta.reward_patch.patch_edits;
    if edits.hint_trust.is_some_and(|h| !h.is_finite()) {
        return Err(MergeError::NonFinite("hint_trust".into()));
    }
    if edits.action_cost_table.as_ref().is_some_and(|t| t.values().any(|c| !c.is_finite())) {
        return Err(MergeError::NonFinite("action cost table".into()));
    }
    Ok(())
}

fn check_rule(pi: &PolicyConstitution, rule: &MaskRule) -> Result<(), MergeError> {
    if !rule.constants_finite() {
        return Err(MergeError::NonFinite("mask rule constant".into()));
    }
    for name in rule.threshold_refs() {
        if !pi.thresholds.contains_key(name) {
            return Err(MergeError::UnknownThreshold(name.to_string()));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safety::action::Action;
    use crate::safety::constitution::BACKLOG_CAP;
    use crate::safety::filter::feasible_set;
    use crate::safety::rule::{Atom, Comparator, PredicateVar, RuleContext};

    fn backlog_rule(mode: RuleMode) -> MaskRule {
        MaskRule::new(
            Action::DropFlow,
            mode,
            vec![Atom::constant(PredicateVar::Backlog, Comparator::Gt, 40.0)],
            RuleOrigin::Governance,
        )
    }

    fn add(rule: MaskRule) -> MaskEdit {
        MaskEdit::Add { rule }
    }

    #[test]
    fn duplicate_add_changes_only_version() {
        let d = PolicyDelta { mask_rule_edits: vec![add(backlog_rule(RuleMode::Forbid))], ..Default::default() };
        let p1 = merge(&PolicyConstitution::bootstrap(), &d).unwrap();
        let p2 = merge(&p1, &d).unwrap();
        assert_eq!(p1.mask_rules, p2.mask_rules);
        assert_eq!(p2.version, p1.version + 1);
        assert_eq!(p2.parent_hash, p1.digest());
    }

    #[test]
    fn forbid_wins_conflict() {
        let with_forbid = merge(
            &PolicyConstitution::bootstrap(),
            &PolicyDelta { mask_rule_edits: vec![add(backlog_rule(RuleMode::Forbid))], ..Default::default() },
        )
        .unwrap();
        let cand = merge(
            &with_forbid,
            &PolicyDelta { mask_rule_edits: vec![add(backlog_rule(RuleMode::Allow))], ..Default::default() },
        )
        .unwrap();
        let ctx = RuleContext { backlog: 41.0, ..Default::default() };
        assert!(!feasible_set(&cand, &ctx).contains(Action::DropFlow));
        assert!(cand.mask_rules.iter().all(|r| r.mode == RuleMode::Forbid));
    }

    #[test]
    fn forbid_replaces_existing_allow() {
        let with_allow = merge(
            &PolicyConstitution::bootstrap(),
            &PolicyDelta { mask_rule_edits: vec![add(backlog_rule(RuleMode::Allow))], ..Default::default() },
        )
        .unwrap();
        let cand = merge(
            &with_allow,
            &PolicyDelta { mask_rule_edits: vec![add(backlog_rule(RuleMode::Forbid))], ..Default::default() },
        )
        .unwrap();
        assert!(cand.mask_rules.iter().all(|r| r.mode == RuleMode::Forbid));
        assert_eq!(cand.governance_rules().count(), 1);
    }

    #[test]
    fn thresholds_are_clipped() {
        let mut d = PolicyDelta::default();
        d.threshold_updates.insert(BACKLOG_CAP.into(), 10.0);
        let cand = merge(&PolicyConstitution::bootstrap(), &d).unwrap();
        assert_eq!(cand.threshold(BACKLOG_CAP), Some(20.0));
    }

    #[test]
    fn unknown_threshold_rejected() {
        let mut d = PolicyDelta::default();
        d.threshold_updates.insert("mystery".into(), 1.0);
        assert_eq!(merge(&PolicyConstitution::bootstrap(), &d), Err(MergeError::UnknownThreshold("mystery".into())));
        let rule = MaskRule::forbid(
            Action::Quarantine,
            vec![Atom::threshold(PredicateVar::Queue, Comparator::Gt, "nope")],
            RuleOrigin::Governance,
        );
        let d = PolicyDelta { mask_rule_edits: vec![add(rule)], ..Default::default() };
        assert!(merge(&PolicyConstitution::bootstrap(), &d).is_err());
    }

    #[test]
    fn hard_floor_cannot_be_removed() {
        let pi = PolicyConstitution::bootstrap();
        let d = PolicyDelta {
            mask_rule_edits: hard_floor_rules()
                .into_iter()
                .map(|r| MaskEdit::Remove { canonical_id: r.canonical_id })
                .collect(),
            ..Default::default()
        };
        let cand = merge(&pi, &d).unwrap();
        assert!(cand.has_hard_floor());
        assert_eq!(cand.mask_rules, pi.mask_rules);
    }

    #[test]
    fn weight_drift_is_bounded() {
        let mut d = PolicyDelta::default();
        d.reward_patch.weight_deltas.ctrl = 5.0;
        d.reward_patch.weight_deltas.sec = -5.0;
        let pi = PolicyConstitution::bootstrap();
        let cand = merge(&pi, &d).unwrap();
        assert!((cand.reward_weights.ctrl - 0.75).abs() < 1e-12);
        assert!((cand.reward_weights.sec - 0.75).abs() < 1e-12);
        assert!(cand.reward_weights.max_abs_diff(&pi.reward_weights) <= WEIGHT_DRIFT_LIMIT + 1e-12);
    }
}
