//! Simulator configuration. Every rate is per tick; queue quantities are
//! fractions of switch buffer occupancy.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::safety::Action;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceModel {
    /// Exactly μ jobs per tick on average via a fractional credit.
    #[default]
    Deterministic,
    /// Geometric number of jobs per tick with mean μ.
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_switches: usize,
    /// Controller service rate μ (jobs per tick).
    pub service_rate: f64,
    pub service_model: ServiceModel,
    /// PacketIn buffer bound B (jobs).
    pub buffer: u64,
    /// Controller-mediation weight κ(a) of each action.
    pub kappa: BTreeMap<Action, f64>,
    /// Conversion of the actuation penalty into queue units.
    pub c_delta: f64,
    /// Per-switch queue service μ_i (occupancy per tick).
    pub queue_service: f64,
    /// Service lost to mirroring overhead.
    pub mirror_service_penalty: f64,
    /// Queue level benign senders back off towards.
    pub target_queue: f64,
    /// Strength of benign back-off around `target_queue`.
    pub elastic_gain: f64,
    /// Flow-table capacity in entries.
    pub flow_capacity: f64,
    pub flow_timeout_ticks: u64,
    /// Ticks a mitigation rule stays installed without being refreshed.
    pub rule_lifetime: u64,
    /// Share of evicted entries that miss again on the next tick.
    pub re_miss_fraction: f64,
    /// Half-width of the multiplicative telemetry noise.
    pub noise: f64,
    /// Load that maps to a normalized rate of 1.
    pub rate_ref: f64,
    pub rtt_base_ms: f64,
    pub rtt_queue_ms: f64,
    pub rtt_pending_ms: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_switches: 4,
            service_rate: 7.0,
            service_model: ServiceModel::Deterministic,
            buffer: 256,
            kappa: default_kappa(),
            c_delta: 0.01,
            queue_service: 0.30,
            mirror_service_penalty: 0.03,
            target_queue: 0.5,
            elastic_gain: 2.0,
            flow_capacity: 32.0,
            flow_timeout_ticks: 20,
            rule_lifetime: 8,
            re_miss_fraction: 0.5,
            noise: 0.05,
            rate_ref: 0.6,
            rtt_base_ms: 75.0,
            rtt_queue_ms: 4.0,
            rtt_pending_ms: 1.0,
        }
    }
}

pub fn default_kappa() -> BTreeMap<Action, f64> {
    [
        (Action::Allow, 0.0),
        (Action::Alert, 0.0),
        (Action::Mirror, 0.1),
        (Action::RateLimit, 0.5),
        (Action::DropFlow, 2.0),
        (Action::Quarantine, 2.5),
    ]
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulator config: {0}")]
    Config(String),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("switch {0} does not exist")]
    NoSuchSwitch(usize),
    #[error("expected {expected} actions, got {got}")]
    ActionCount { expected: usize, got: usize },
}

impl SimConfig {
    pub fn kappa(&self, a: Action) -> f64 {
        self.kappa.get(&a).copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.n_switches == 0 {
            return bad("n_switches must be at least 1");
        }
        if !(self.service_rate.is_finite() && self.service_rate > 0.0) {
            return bad("service_rate must be positive");
        }
        if self.buffer == 0 {
            return bad("buffer must be positive");
        }
        for a in Action::ALL {
            match self.kappa.get(&a) {
                Some(k) if k.is_finite() && *k >= 0.0 => {}
                _ => return Err(SimError::Config(format!("kappa for {a} missing or negative"))),
            }
        }
        let k = |a| self.kappa(a);
        if !(k(Action::Quarantine) >= k(Action::DropFlow)
            && k(Action::DropFlow) > k(Action::RateLimit)
            && k(Action::RateLimit) >= k(Action::Mirror))
        {
            return bad("kappa must satisfy QUARANTINE >= DROP_FLOW > RATE_LIMIT >= MIRROR");
        }
        let positive =
            [("queue_service", self.queue_service), ("flow_capacity", self.flow_capacity), ("rate_ref", self.rate_ref)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(SimError::Config(format!("{name} must be positive")));
            }
        }
        let non_negative = [
            ("c_delta", self.c_delta),
            ("mirror_service_penalty", self.mirror_service_penalty),
            ("elastic_gain", self.elastic_gain),
            ("re_miss_fraction", self.re_miss_fraction),
            ("noise", self.noise),
            ("rtt_base_ms", self.rtt_base_ms),
            ("rtt_queue_ms", self.rtt_queue_ms),
            ("rtt_pending_ms", self.rtt_pending_ms),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::Config(format!("{name} must be non-negative")));
            }
        }
        if self.noise >= 1.0 {
            return bad("noise must be below 1");
        }
        if self.flow_timeout_ticks == 0 || self.rule_lifetime == 0 {
            return bad("timeouts must be positive");
        }
        Ok(())
    }
}
