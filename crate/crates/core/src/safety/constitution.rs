//! The policy constitution: mask rules, bounded thresholds, reward weights and
//! patches. A published constitution is immutable; edits go through
//! [`merge`](super::merge::merge) and produce a new version.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::action::Action;
use super::rule::{Atom, Comparator, MaskRule, PredicateVar, RuleMode, RuleOrigin};
use crate::util::{canonical_json, digest_of, GENESIS_HASH};

/// Maximum per-merge change of any reward weight.
pub const WEIGHT_DRIFT_LIMIT: f64 = 0.25;
pub const WEIGHT_BOUNDS: (f64, f64) = (0.0, 2.0);
pub const MIN_SECURITY_WEIGHT: f64 = 0.1;
pub const HINT_TRUST_BOUNDS: (f64, f64) = (0.5, 0.99);
pub const FLOWMOD_THROTTLE_BOUNDS: (u32, u32) = (1, 32);
pub const HEAVY_CAP_BOUNDS: (u32, u32) = (0, 64);
pub const ACTION_COST_BOUNDS: (f64, f64) = (0.0, 10.0);
/// Utilization level at which the hard floor disables controller-heavy actions.
pub const HARD_FLOOR_UTILIZATION: f64 = 0.95;

pub const BACKLOG_CAP: &str = "backlog_cap";
pub const FLOW_PRESSURE_CAP: &str = "flow_pressure_cap";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub value: f64,
    pub min: f64,
    pub max: f64,
}

impl ThresholdSpec {
    pub fn new(value: f64, min: f64, max: f64) -> Self {
        ThresholdSpec { value, min, max }
    }

    pub fn in_bounds(&self) -> bool {
        self.value.is_finite() && self.value >= self.min && self.value <= self.max
    }
}

/// Scalarization weights over (security, latency, controller, cost).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub sec: f64,
    pub lat: f64,
    pub ctrl: f64,
    pub cost: f64,
}

impl RewardWeights {
    pub fn as_array(&self) -> [f64; 4] {
        [self.sec, self.lat, self.ctrl, self.cost]
    }

    pub fn from_array(w: [f64; 4]) -> Self {
        RewardWeights { sec: w[0], lat: w[1], ctrl: w[2], cost: w[3] }
    }

    pub fn l1_norm(&self) -> f64 {
        self.as_array().iter().map(|w| w.abs()).sum()
    }

    pub fn max_abs_diff(&self, other: &RewardWeights) -> f64 {
        self.as_array().iter().zip(other.as_array()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_valid(&self) -> bool {
        self.as_array().iter().all(|w| w.is_finite() && *w >= WEIGHT_BOUNDS.0 && *w <= WEIGHT_BOUNDS.1)
            && self.sec >= MIN_SECURITY_WEIGHT
    }
}

/// χ: action cost table, hint-trust calibration, FlowMod throttle and heavy-action cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Patches {
    pub action_cost_table: BTreeMap<Action, f64>,
    pub hint_trust: f64,
    /// Maximum FlowMod jobs submitted network-wide per tick.
    pub flowmod_throttle: u32,
    /// Maximum number of switches executing a controller-heavy action per tick.
    pub heavy_action_cap: u32,
}

impl Patches {
    pub fn action_cost(&self, a: Action) -> f64 {
        self.action_cost_table.get(&a).copied().unwrap_or(0.0)
    }
}

impl Default for Patches {
    fn default() -> Self {
        let action_cost_table = [
            (Action::Allow, 0.0),
            (Action::Alert, 0.0),
            (Action::Mirror, 0.5),
            (Action::RateLimit, 1.0),
            (Action::DropFlow, 2.0),
            (Action::Quarantine, 4.0),
        ]
        .into_iter()
        .collect();
        Patches { action_cost_table, hint_trust: 0.8, flowmod_throttle: 6, heavy_action_cap: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConstitution {
    pub version: u64,
    pub mask_rules: Vec<MaskRule>,
    pub thresholds: BTreeMap<String, ThresholdSpec>,
    pub reward_weights: RewardWeights,
    pub patches: Patches,
    pub parent_hash: String,
}

impl PolicyConstitution {
    /// Version-0 constitution: hard floor only, default thresholds and weights.
    pub fn bootstrap() -> Self {
        let thresholds = [
            (BACKLOG_CAP.to_string(), ThresholdSpec::new(40.0, 20.0, 80.0)),
            (FLOW_PRESSURE_CAP.to_string(), ThresholdSpec::new(0.75, 0.5, 0.95)),
        ]
        .into_iter()
        .collect();
        PolicyConstitution {
            version: 0,
            mask_rules: hard_floor_rules(),
            thresholds,
            reward_weights: RewardWeights { sec: 1.0, lat: 0.5, ctrl: 0.5, cost: 0.25 },
            patches: Patches::default(),
            parent_hash: GENESIS_HASH.to_string(),
        }
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(self)
    }

    pub fn threshold(&self, name: &str) -> Option<f64> {
        self.thresholds.get(name).map(|t| t.value)
    }

    pub fn has_rule(&self, canonical_id: &str) -> bool {
        self.mask_rules.iter().any(|r| r.canonical_id == canonical_id)
    }

    pub fn governance_rules(&self) -> impl Iterator<Item = &MaskRule> {
        self.mask_rules.iter().filter(|r| r.origin != RuleOrigin::HardFloor)
    }

    /// Copy with every non-hard-floor mask removed.
    pub fn without_governance_masks(&self) -> Self {
        let mut pi = self.clone();
        pi.mask_rules.retain(|r| r.origin == RuleOrigin::HardFloor);
        pi
    }

    pub fn has_hard_floor(&self) -> bool {
        hard_floor_rules().iter().all(|hf| self.mask_rules.iter().any(|r| r == hf))
    }

    /// Structural HardSafety violations; empty when the constitution is sound.
    pub fn structural_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.has_hard_floor() {
            out.push("hard-floor rules missing or altered".to_string());
        }
        for (name, t) in &self.thresholds {
            if !t.in_bounds() {
                out.push(format!("threshold `{name}`={} outside [{}, {}]", t.value, t.min, t.max));
            }
        }
        for rule in &self.mask_rules {
            if !rule.constants_finite() {
                out.push(format!("rule {} has a non-finite constant", rule.canonical_id));
            }
            for name in rule.threshold_refs() {
                if !self.thresholds.contains_key(name) {
                    out.push(format!("rule {} references unknown threshold `{name}`", rule.canonical_id));
                }
            }
        }
        if !self.reward_weights.is_valid() {
            out.push(format!("reward weights out of range: {:?}", self.reward_weights));
        }
        let p = &self.patches;
        if !(p.hint_trust.is_finite() && p.hint_trust >= HINT_TRUST_BOUNDS.0 && p.hint_trust <= HINT_TRUST_BOUNDS.1) {
            out.push(format!("hint_trust {} out of range", p.hint_trust));
        }
        if p.flowmod_throttle < FLOWMOD_THROTTLE_BOUNDS.0 || p.flowmod_throttle > FLOWMOD_THROTTLE_BOUNDS.1 {
            out.push(format!("flowmod_throttle {} out of range", p.flowmod_throttle));
        }
        if p.heavy_action_cap > HEAVY_CAP_BOUNDS.1 {
            out.push(format!("heavy_action_cap {} out of range", p.heavy_action_cap));
        }
        if p.action_cost_table
            .values()
            .any(|c| !c.is_finite() || *c < ACTION_COST_BOUNDS.0 || *c > ACTION_COST_BOUNDS.1)
        {
            out.push("action cost table out of range".to_string());
        }
        out
    }
}

/// The fixed safety floor: no controller-heavy action once PacketIn load
/// reaches 95% of controller capacity.
pub fn hard_floor_rules() -> Vec<MaskRule> {
    [Action::DropFlow, Action::Quarantine]
        .into_iter()
        .map(|a| {
            MaskRule::new(
                a,
                RuleMode::Forbid,
                vec![Atom::constant(PredicateVar::Utilization, Comparator::Ge, HARD_FLOOR_UTILIZATION)],
                RuleOrigin::HardFloor,
            )
        })
        .collect()
}
