//! Actions, the policy constitution, the runtime safety filter and the
//! delta merge operator.

pub mod action;
pub mod chain;
pub mod constitution;
pub mod delta;
pub mod filter;
pub mod merge;
pub mod rule;

pub use action::{Action, ActionSet};
pub use chain::{hash_chain_verify, ChainEntry, ChainError, PolicyStore, StoreError};
pub use constitution::{hard_floor_rules, Patches, PolicyConstitution, RewardWeights, ThresholdSpec};
pub use delta::{MaskEdit, PatchEdits, PolicyDelta, Provenance, RewardPatch, WeightDeltas};
pub use filter::{feasible_set, feasible_set_with_budget, safety_filter, ActuationBudget};
pub use merge::{merge, MergeError};
pub use rule::{Atom, Bound, Comparator, MaskRule, PredicateVar, RuleContext, RuleMode, RuleOrigin};
