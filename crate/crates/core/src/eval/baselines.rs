//! Comparator controllers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rl::{Shield, SwitchPolicy};
use crate::safety::{Action, PolicyConstitution};
use crate::sim::Telemetry;

/// Load above which the static baseline rate-limits.
pub const STATIC_RATE_LIMIT_LOAD: f64 = 0.7;
/// Load above which the static baseline drops flows flagged by the hint.
pub const STATIC_DROP_LOAD: f64 = 0.9;

/// Fixed telemetry thresholds; independent of any constitution.
#[derive(Debug, Clone, Copy, Default)]
pub struct StaticThreshold;

impl StaticThreshold {
    pub fn decide_obs(obs: &Telemetry) -> Action {
        if obs.rate > STATIC_DROP_LOAD && obs.hint >= 0.5 {
            Action::DropFlow
        } else if obs.rate > STATIC_RATE_LIMIT_LOAD {
            Action::RateLimit
        } else {
            Action::Allow
        }
    }
}

impl SwitchPolicy for StaticThreshold {
    fn decide(&self, _: usize, obs: &Telemetry, _: u64) -> Action {
        Self::decide_obs(obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    StaticThreshold,
    /// PPO under a constitution stripped of every mask rule, no reflection.
    PpoUnconstrained,
    /// PPO under the bootstrap constitution, no reflection.
    PpoConstrainedNoGov,
    /// PPO under a governed, evolving constitution.
    FullSystem,
}

impl Baseline {
    pub const ALL: [Baseline; 4] =
        [Baseline::StaticThreshold, Baseline::PpoUnconstrained, Baseline::PpoConstrainedNoGov, Baseline::FullSystem];

    pub fn as_str(self) -> &'static str {
        match self {
            Baseline::StaticThreshold => "static_threshold",
            Baseline::PpoUnconstrained => "ppo_unconstrained",
            Baseline::PpoConstrainedNoGov => "ppo_constrained_no_gov",
            Baseline::FullSystem => "full_system",
        }
    }

    pub fn learns(self) -> bool {
        self != Baseline::StaticThreshold
    }

    pub fn reflects(self) -> bool {
        self == Baseline::FullSystem
    }

    pub fn shield(self) -> Shield {
        match self {
            Baseline::StaticThreshold => Shield::Bypass,
            _ => Shield::Filtered,
        }
    }

    /// Starting constitution. The unconstrained controller keeps the χ
    /// budget but has no mask rules, not even the hard floor.
    pub fn genesis(self) -> PolicyConstitution {
        let mut pi = PolicyConstitution::bootstrap();
        if self == Baseline::PpoUnconstrained {
            pi.mask_rules.clear();
        }
        pi
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Baseline {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Baseline::ALL.into_iter().find(|b| b.as_str() == s).ok_or_else(|| format!("unknown baseline `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn static_map() {
        let mut o = Telemetry::from_array([0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(StaticThreshold::decide_obs(&o), Action::Allow);
        o.rate = 0.8;
        assert_eq!(StaticThreshold::decide_obs(&o), Action::RateLimit);
        o.rate = 0.95;
        assert_eq!(StaticThreshold::decide_obs(&o), Action::DropFlow);
        o.hint = 0.0;
        assert_eq!(StaticThreshold::decide_obs(&o), Action::RateLimit);
    }
}
