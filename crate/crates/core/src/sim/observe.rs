//! The observation kernel: noisy per-switch telemetry derived from counters.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::{SimConfig, SimError};
use super::state::NetworkState;
use crate::safety::RuleContext;
use crate::util::rng_for;

/// Local observation of one switch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Telemetry {
    pub rate: f64,
    pub queue: f64,
    pub compute: f64,
    pub flow_pressure: f64,
    pub entropy: f64,
    pub port_diversity: f64,
    pub ctrl_stress: f64,
    pub actuation: f64,
    pub hint: f64,
}

impl Telemetry {
    pub const DIM: usize = 9;

    pub fn as_array(&self) -> [f64; Self::DIM] {
        [
            self.rate,
            self.queue,
            self.compute,
            self.flow_pressure,
            self.entropy,
            self.port_diversity,
            self.ctrl_stress,
            self.actuation,
            self.hint,
        ]
    }

    pub fn from_array(v: [f64; Self::DIM]) -> Self {
        Telemetry {
            rate: v[0],
            queue: v[1],
            compute: v[2],
            flow_pressure: v[3],
            entropy: v[4],
            port_diversity: v[5],
            ctrl_stress: v[6],
            actuation: v[7],
            hint: v[8],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.as_array().iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EntropyError {
    #[error("histogram needs at least two bins")]
    TooFewBins,
    #[error("histogram has negative or non-finite mass")]
    InvalidMass,
    #[error("histogram sums to {0}, not 1")]
    NotNormalized(f64),
}

/// Normalized Shannon entropy −(1/ln K)·Σ p ln p, with 0·ln 0 = 0.
pub fn source_entropy(histogram: &[f64]) -> Result<f64, EntropyError> {
    if histogram.len() < 2 {
        return Err(EntropyError::TooFewBins);
    }
    if histogram.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(EntropyError::InvalidMass);
    }
    let sum: f64 = histogram.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(EntropyError::NotNormalized(sum));
    }
    let h: f64 = histogram.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum();
    Ok((h / (histogram.len() as f64).ln()).clamp(0.0, 1.0))
}

/// Benign back-off factor: senders slow down as the queue rises past target.
pub fn elastic_factor(queue: f64, cfg: &SimConfig) -> f64 {
    (1.0 + cfg.elastic_gain * (cfg.target_queue - queue)).clamp(0.5, 1.5)
}

/// Offered load at switch `i` before mitigation.
pub fn offered_load(state: &NetworkState, i: usize, cfg: &SimConfig) -> f64 {
    state.regime.switches.get(i).map_or(0.0, |t| t.benign_load * elastic_factor(state.queues[i], cfg) + t.attack_load)
}

/// Noisy telemetry of switch `switch`. Deterministic in `(state, seed)`.
///
/// The hint reports the true attack indicator, flipped with probability
/// `1 - hint_trust`.
pub fn observe(
    state: &NetworkState,
    cfg: &SimConfig,
    switch: usize,
    seed: u64,
    hint_trust: f64,
) -> Result<Telemetry, SimError> {
    if switch >= state.n_switches() {
        return Err(SimError::NoSuchSwitch(switch));
    }
    let mut rng = rng_for(&[seed, state.step_index, switch as u64, 0x0B5E]);
    let mut noisy = |v: f64| v * (1.0 + cfg.noise * rng.gen_range(-1.0..=1.0));

    let traffic = state.regime.switches.get(switch);
    let entropy = traffic
        .and_then(|t| source_entropy(&t.histogram).ok())
        .filter(|_| traffic.is_some_and(|t| t.benign_flows + t.attack_flows > 0.0))
        .unwrap_or(0.0);
    let ports = traffic.map_or(0.0, |t| t.port_diversity);
    let table = &state.flow_tables[switch];

    let rate = noisy(offered_load(state, switch, cfg) / cfg.rate_ref);
    let queue = noisy(state.queues[switch]).clamp(0.0, 1.0);
    let compute = noisy(state.compute[switch]);
    let flow_pressure = noisy(table.occupancy).clamp(0.0, 1.0);
    let entropy = noisy(entropy).clamp(0.0, 1.0);
    let port_diversity = noisy(ports).clamp(0.0, 1.0);
    let ctrl_stress = noisy(state.last_packetins[switch] as f64 / state.controller.service_rate);
    let actuation = noisy(state.actuation[switch]);

    let attack = traffic.is_some_and(|t| t.label.is_attack());
    let flip = rng.gen_bool((1.0 - hint_trust).clamp(0.0, 1.0));
    let hint = if attack != flip { 1.0 } else { 0.0 };

    Ok(Telemetry { rate, queue, compute, flow_pressure, entropy, port_diversity, ctrl_stress, actuation, hint })
}

/// Values a mask predicate sees at switch `i`: controller quantities are
/// exact, switch quantities come from the telemetry.
pub fn rule_context(state: &NetworkState, obs: &Telemetry) -> RuleContext {
    RuleContext {
        backlog: state.controller.backlog as f64,
        queue: obs.queue,
        flow_pressure: obs.flow_pressure,
        ctrl_stress: obs.ctrl_stress,
        actuation: obs.actuation,
        utilization: state.controller.utilization,
    }
}
