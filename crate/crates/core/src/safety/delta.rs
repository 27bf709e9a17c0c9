//! Structured edits to a constitution. The vocabulary is closed: masks,
//! thresholds, reward weights and χ patches. Nothing here can name a model
//! parameter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::action::Action;
use super::rule::MaskRule;
use crate::util::digest_of;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskEdit {
    Add { rule: MaskRule },
    Remove { canonical_id: String },
}

/// Additive changes to the four reward weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightDeltas {
    pub sec: f64,
    pub lat: f64,
    pub ctrl: f64,
    pub cost: f64,
}

impl WeightDeltas {
    pub fn as_array(&self) -> [f64; 4] {
        [self.sec, self.lat, self.ctrl, self.cost]
    }

    pub fn is_zero(&self) -> bool {
        self.as_array().iter().all(|d| *d == 0.0)
    }
}

/// Replacement values for χ entries; `None` leaves the entry untouched.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchEdits {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action_cost_table: Option<BTreeMap<Action, f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hint_trust: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flowmod_throttle: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heavy_action_cap: Option<u32>,
}

impl PatchEdits {
    pub fn is_empty(&self) -> bool {
        self.action_cost_table.is_none()
            && self.hint_trust.is_none()
            && self.flowmod_throttle.is_none()
            && self.heavy_action_cap.is_none()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardPatch {
    pub weight_deltas: WeightDeltas,
    pub patch_edits: PatchEdits,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Provenance {
    pub roles: Vec<String>,
    pub evidence_digest: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyDelta {
    pub mask_rule_edits: Vec<MaskEdit>,
    pub threshold_updates: BTreeMap<String, f64>,
    pub reward_patch: RewardPatch,
    pub rationale: String,
    pub provenance: Provenance,
}

impl PolicyDelta {
    /// True when the delta carries no edit (rationale and provenance aside).
    pub fn is_empty(&self) -> bool {
        self.mask_rule_edits.is_empty()
            && self.threshold_updates.is_empty()
            && self.reward_patch.weight_deltas.is_zero()
            && self.reward_patch.patch_edits.is_empty()
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }

    pub fn added_rules(&self) -> impl Iterator<Item = &MaskRule> {
        self.mask_rule_edits.iter().filter_map(|e| match e {
            MaskEdit::Add { rule } => Some(rule),
            MaskEdit::Remove { .. } => None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safety::rule::{Atom, Comparator, PredicateVar, RuleOrigin};

    #[test]
    fn empty_delta_round_trips() {
        let d = PolicyDelta::default();
        assert!(d.is_empty());
        let back: PolicyDelta = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        let minimal: PolicyDelta = serde_json::from_str("{}").unwrap();
        assert_eq!(minimal, d);
    }

    #[test]
    fn rejects_fields_outside_vocabulary() {
        assert!(serde_json::from_str::<PolicyDelta>(r#"{"agent_weights":[1,2]}"#).is_err());
        assert!(
            serde_json::from_str::<PolicyDelta>(r#"{"reward_patch":{"patch_edits":{"learning_rate":0.1}}}"#).is_err()
        );
    }

    #[test]
    fn mask_edit_tagging() {
        let rule = MaskRule::forbid(
            Action::DropFlow,
            vec![Atom::constant(PredicateVar::Backlog, Comparator::Gt, 40.0)],
            RuleOrigin::Governance,
        );
        let d = PolicyDelta { mask_rule_edits: vec![MaskEdit::Add { rule }], ..Default::default() };
        let json = serde_json::to_value(&d).unwrap();
        assert_eq!(json["mask_rule_edits"][0]["op"], "add");
        assert!(!d.is_empty());
    }
}
