//! Mask rules: conjunctions of threshold atoms over telemetry and controller
//! variables that forbid (or explicitly allow) one action.

use serde::{Deserialize, Serialize};

use super::action::Action;
use crate::util::digest_of;

/// Closed set of variables a mask predicate may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredicateVar {
    /// Controller backlog `d`.
    #[serde(rename = "d")]
    Backlog,
    #[serde(rename = "q_i")]
    Queue,
    /// Alias of [`PredicateVar::FlowPressure`]; normalized away.
    #[serde(rename = "f_i")]
    FlowTable,
    #[serde(rename = "rho_i")]
    CtrlStress,
    #[serde(rename = "phi_i")]
    Actuation,
    #[serde(rename = "flow_pressure")]
    FlowPressure,
    #[serde(rename = "utilization")]
    Utilization,
}

impl PredicateVar {
    pub fn normalized(self) -> Self {
        match self {
            PredicateVar::FlowTable => PredicateVar::FlowPressure,
            v => v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=", alias = "≤")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=", alias = "≥")]
    Ge,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }
}

/// Right-hand side of an atom: a literal or a named threshold from τ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Bound {
    Const(f64),
    Threshold(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Atom {
    pub var: PredicateVar,
    pub cmp: Comparator,
    pub bound: Bound,
}

impl Atom {
    pub fn new(var: PredicateVar, cmp: Comparator, bound: Bound) -> Self {
        Atom { var, cmp, bound }
    }

    pub fn threshold(var: PredicateVar, cmp: Comparator, name: &str) -> Self {
        Atom::new(var, cmp, Bound::Threshold(name.to_string()))
    }

    pub fn constant(var: PredicateVar, cmp: Comparator, value: f64) -> Self {
        Atom::new(var, cmp, Bound::Const(value))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleMode {
    Forbid,
    Allow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleOrigin {
    HardFloor,
    Governance,
    Bootstrap,
}

/// Values a predicate is evaluated against for one switch at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RuleContext {
    pub backlog: f64,
    pub queue: f64,
    pub flow_pressure: f64,
    pub ctrl_stress: f64,
    pub actuation: f64,
    pub utilization: f64,
}

impl RuleContext {
    pub fn value(&self, var: PredicateVar) -> f64 {
        match var.normalized() {
            PredicateVar::Backlog => self.backlog,
            PredicateVar::Queue => self.queue,
            PredicateVar::FlowPressure | PredicateVar::FlowTable => self.flow_pressure,
            PredicateVar::CtrlStress => self.ctrl_stress,
            PredicateVar::Actuation => self.actuation,
            PredicateVar::Utilization => self.utilization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskRule {
    pub target: Action,
    pub mode: RuleMode,
    pub predicate: Vec<Atom>,
    pub origin: RuleOrigin,
    #[serde(default)]
    pub canonical_id: String,
}

#[derive(Serialize)]
struct IdForm<'a> {
    target: Action,
    mode: Option<RuleMode>,
    predicate: &'a [Atom],
}

impl MaskRule {
    pub fn new(target: Action, mode: RuleMode, predicate: Vec<Atom>, origin: RuleOrigin) -> Self {
        let mut rule = MaskRule { target, mode, predicate, origin, canonical_id: String::new() };
        rule.normalize();
        rule
    }

    pub fn forbid(target: Action, predicate: Vec<Atom>, origin: RuleOrigin) -> Self {
        MaskRule::new(target, RuleMode::Forbid, predicate, origin)
    }

    /// Resolves aliases, sorts and deduplicates atoms, and recomputes the id.
    pub fn normalize(&mut self) {
        for atom in &mut self.predicate {
            atom.var = atom.var.normalized();
        }
        self.predicate.sort_by_cached_key(crate::util::canonical_json);
        self.predicate.dedup();
        self.canonical_id =
            digest_of(&IdForm { target: self.target, mode: Some(self.mode), predicate: &self.predicate });
    }

    /// Identity of (target, predicate) regardless of mode; used to detect
    /// allow/forbid conflicts.
    pub fn predicate_key(&self) -> String {
        let mut probe = self.clone();
        probe.normalize();
        digest_of(&IdForm { target: probe.target, mode: None, predicate: &probe.predicate })
    }

    /// True if every atom holds. Unresolvable threshold names count as
    /// satisfied so that a forbid rule errs on the restrictive side.
    pub fn predicate_holds(&self, ctx: &RuleContext, threshold: impl Fn(&str) -> Option<f64>) -> bool {
        self.predicate.iter().all(|atom| {
            let rhs = match &atom.bound {
                Bound::Const(v) => Some(*v),
                Bound::Threshold(name) => threshold(name),
            };
            match rhs {
                Some(rhs) => atom.cmp.holds(ctx.value(atom.var), rhs),
                None => true,
            }
        })
    }

    pub fn threshold_refs(&self) -> impl Iterator<Item = &str> {
        self.predicate.iter().filter_map(|a| match &a.bound {
            Bound::Threshold(n) => Some(n.as_str()),
            Bound::Const(_) => None,
        })
    }

    pub fn constants_finite(&self) -> bool {
        self.predicate.iter().all(|a| match a.bound {
            Bound::Const(v) => v.is_finite(),
            Bound::Threshold(_) => true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atoms() -> (Atom, Atom) {
        (
            Atom::constant(PredicateVar::Backlog, Comparator::Gt, 40.0),
            Atom::constant(PredicateVar::FlowPressure, Comparator::Gt, 0.75),
        )
    }

    #[test]
    fn canonical_id_ignores_atom_order_and_aliases() {
        let (a, b) = atoms();
        let r1 = MaskRule::forbid(Action::DropFlow, vec![a.clone(), b.clone()], RuleOrigin::Governance);
        let r2 = MaskRule::forbid(Action::DropFlow, vec![b, a.clone()], RuleOrigin::Bootstrap);
        assert_eq!(r1.canonical_id, r2.canonical_id);

        let alias = Atom::constant(PredicateVar::FlowTable, Comparator::Gt, 0.75);
        let r3 = MaskRule::forbid(Action::DropFlow, vec![alias, a], RuleOrigin::Governance);
        assert_eq!(r1.canonical_id, r3.canonical_id);
    }

    #[test]
    fn mode_changes_id_but_not_predicate_key() {
        let (a, _) = atoms();
        let f = MaskRule::new(Action::DropFlow, RuleMode::Forbid, vec![a.clone()], RuleOrigin::Governance);
        let al = MaskRule::new(Action::DropFlow, RuleMode::Allow, vec![a], RuleOrigin::Governance);
        assert_ne!(f.canonical_id, al.canonical_id);
        assert_eq!(f.predicate_key(), al.predicate_key());
    }

    #[test]
    fn predicate_evaluation() {
        let rule = MaskRule::forbid(
            Action::DropFlow,
            vec![Atom::threshold(PredicateVar::Backlog, Comparator::Gt, "backlog_cap")],
            RuleOrigin::Governance,
        );
        let ctx = RuleContext { backlog: 41.0, ..Default::default() };
        assert!(rule.predicate_holds(&ctx, |_| Some(40.0)));
        assert!(!rule.predicate_holds(&ctx, |_| Some(41.0)));
        // unknown threshold is treated as satisfied
        assert!(rule.predicate_holds(&RuleContext::default(), |_| None));
    }

    #[test]
    fn rejects_unknown_variable_on_parse() {
        let json = r#"{"var":"theta","cmp":">","bound":{"const":1.0}}"#;
        assert!(serde_json::from_str::<Atom>(json).is_err());
        let ok = r#"{"var":"utilization","cmp":">=","bound":{"threshold":"x"}}"#;
        assert!(serde_json::from_str::<Atom>(ok).is_ok());
    }
}
