//! The reward vector, its scalarization under the constitution's weights,
//! and CVaR estimators for return distributions.

mod cvar;

pub use cvar::{cvar_ru, discounted_return, lower_tail_cvar, CvarError, ReturnSample};

use serde::{Deserialize, Serialize};

use crate::safety::{Action, PolicyConstitution};
use crate::sim::TrafficLabel;

/// Ticks after an attack phase begins during which ALLOW is not yet a miss.
pub const DETECTION_WINDOW: u64 = 5;
/// Normalizers of the controller-stress penalty.
pub const BACKLOG_SCALE: f64 = 40.0;
pub const DROP_SCALE: f64 = 20.0;
pub const FLOWMOD_SCALE: f64 = 8.0;
/// Action cost that maps to the full cost penalty.
pub const COST_SCALE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardVector {
    pub sec: f64,
    pub lat: f64,
    pub ctrl: f64,
    pub cost: f64,
}

impl RewardVector {
    pub fn as_array(&self) -> [f64; 4] {
        [self.sec, self.lat, self.ctrl, self.cost]
    }
}

/// Everything the reward of one switch at one tick depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardInputs {
    pub executed: Action,
    pub label: TrafficLabel,
    /// Tick minus the onset of the current attack phase.
    pub ticks_since_onset: Option<u64>,
    pub queue_next: f64,
    pub backlog: u64,
    pub packetin_drops: u64,
    pub flowmods: u64,
}

pub fn security_score(executed: Action, label: TrafficLabel, ticks_since_onset: Option<u64>) -> f64 {
    if label.is_attack() {
        if executed.is_containment() {
            1.0
        } else if executed == Action::Allow {
            if ticks_since_onset.is_some_and(|s| s < DETECTION_WINDOW) {
                0.0
            } else {
                -1.0
            }
        } else {
            0.0
        }
    } else if executed == Action::Allow {
        1.0
    } else if executed.is_containment() {
        -1.0
    } else {
        0.0
    }
}

/// Reward vector and its scalarization `w·g` under `pi`.
pub fn compute_reward(x: &RewardInputs, pi: &PolicyConstitution) -> (RewardVector, f64) {
    let g = RewardVector {
        sec: security_score(x.executed, x.label, x.ticks_since_onset),
        lat: 1.0 - 2.0 * x.queue_next.clamp(0.0, 1.0),
        ctrl: -(x.backlog as f64 / BACKLOG_SCALE
            + x.packetin_drops as f64 / DROP_SCALE
            + x.flowmods as f64 / FLOWMOD_SCALE)
            .clamp(0.0, 1.0),
        cost: -(pi.patches.action_cost(x.executed) / COST_SCALE).clamp(0.0, 1.0),
    };
    let w = pi.reward_weights.as_array();
    let r = g.as_array().iter().zip(w).map(|(g, w)| g * w).sum();
    (g, r)
}
