//! Constraint-induced action mask and the runtime safety filter.

use super::action::{Action, ActionSet};
use super::constitution::{Patches, PolicyConstitution};
use super::rule::{RuleContext, RuleMode};

/// Actions not targeted by any satisfied forbid rule, plus ALLOW.
pub fn feasible_set(pi: &PolicyConstitution, ctx: &RuleContext) -> ActionSet {
    let mut set = ActionSet::FULL;
    for rule in &pi.mask_rules {
        if rule.mode == RuleMode::Forbid && rule.predicate_holds(ctx, |n| pi.threshold(n)) {
            set.remove(rule.target);
        }
    }
    set.insert(Action::Allow);
    set
}

/// Per-tick actuation budget shared by all switches: FlowMod submissions and
/// controller-heavy actions are capped by χ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ActuationBudget {
    pub flowmods_used: u32,
    pub heavy_used: u32,
}

impl ActuationBudget {
    pub fn admits(&self, a: Action, patches: &Patches) -> bool {
        let fm_ok = self.flowmods_used + a.nominal_flowmods() <= patches.flowmod_throttle;
        let heavy_ok = !a.is_controller_heavy() || self.heavy_used < patches.heavy_action_cap;
        fm_ok && heavy_ok
    }

    pub fn reserve(&mut self, a: Action) {
        self.flowmods_used += a.nominal_flowmods();
        if a.is_controller_heavy() {
            self.heavy_used += 1;
        }
    }
}

/// [`feasible_set`] further restricted by the remaining tick budget.
pub fn feasible_set_with_budget(pi: &PolicyConstitution, ctx: &RuleContext, budget: &ActuationBudget) -> ActionSet {
    let mut set = feasible_set(pi, ctx);
    for a in Action::ALL {
        if !budget.admits(a, &pi.patches) {
            set.remove(a);
        }
    }
    set.insert(Action::Allow);
    set
}

/// Keeps `sampled` if feasible, otherwise the most severe feasible action
/// below it, otherwise ALLOW.
pub fn safety_filter(sampled: Action, feasible: ActionSet) -> Action {
    if feasible.contains(sampled) {
        return sampled;
    }
    (0..sampled.index()).rev().filter_map(Action::from_index).find(|a| feasible.contains(*a)).unwrap_or(Action::Allow)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safety::constitution::BACKLOG_CAP;
    use crate::safety::rule::{Atom, Comparator, MaskRule, PredicateVar, RuleOrigin};

    #[test]
    fn overload_mask_projects_drop_to_rate_limit() {
        let mut pi = PolicyConstitution::bootstrap();
        pi.mask_rules.push(MaskRule::forbid(
            Action::DropFlow,
            vec![Atom::threshold(PredicateVar::Backlog, Comparator::Gt, BACKLOG_CAP)],
            RuleOrigin::Governance,
        ));
        let ctx = RuleContext { backlog: 41.0, flow_pressure: 0.66, ..Default::default() };
        let feasible = feasible_set(&pi, &ctx);
        assert!(!feasible.contains(Action::DropFlow));
        assert!(feasible.contains(Action::Quarantine));
        assert_eq!(safety_filter(Action::DropFlow, feasible), Action::RateLimit);
    }

    #[test]
    fn empty_rules_admit_everything() {
        let mut pi = PolicyConstitution::bootstrap();
        pi.mask_rules.clear();
        assert_eq!(feasible_set(&pi, &RuleContext::default()), ActionSet::FULL);
    }

    #[test]
    fn walk_down_to_allow() {
        let only_allow = ActionSet::only(Action::Allow);
        assert_eq!(safety_filter(Action::Quarantine, only_allow), Action::Allow);
        assert_eq!(safety_filter(Action::Allow, only_allow), Action::Allow);
    }

    #[test]
    fn budget_limits_heavy_actions() {
        let pi = PolicyConstitution::bootstrap();
        let mut budget = ActuationBudget::default();
        for _ in 0..pi.patches.heavy_action_cap {
            assert!(budget.admits(Action::DropFlow, &pi.patches));
            budget.reserve(Action::DropFlow);
        }
        let set = feasible_set_with_budget(&pi, &RuleContext::default(), &budget);
        assert!(!set.contains(Action::DropFlow));
        assert!(!set.contains(Action::Quarantine));
        assert!(set.contains(Action::Allow));
    }
}
