//! Per-tick traffic contributions of campaigns and the benign baseline.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{CampaignClass, CampaignSpec};
use crate::util::rng_for;

/// Number of source bins in every histogram.
pub const K_SOURCES: usize = 8;

/// Concentrated device population (normalized entropy ≈ 0.45).
pub const BENIGN_HISTOGRAM: [f64; K_SOURCES] = [0.75, 0.11, 0.06, 0.035, 0.025, 0.012, 0.005, 0.003];
/// Same concentration as the benign population, different dominant sources.
const MIMICRY_HISTOGRAM: [f64; K_SOURCES] = [0.11, 0.75, 0.035, 0.06, 0.012, 0.025, 0.003, 0.005];
/// Spoofed sources spread almost evenly.
const BROAD_HISTOGRAM: [f64; K_SOURCES] = [0.14, 0.13, 0.13, 0.12, 0.12, 0.12, 0.12, 0.12];
const UNIFORM_HISTOGRAM: [f64; K_SOURCES] = [0.125; K_SOURCES];
const SLOW_HISTOGRAM: [f64; K_SOURCES] = [0.45, 0.2, 0.12, 0.08, 0.06, 0.04, 0.03, 0.02];

/// Period and on-phase length of burst-and-idle campaigns.
pub const BURST_IDLE_PERIOD: u64 = 20;
pub const BURST_IDLE_ON: u64 = 10;
/// Period and on-phase length of correlated multi-switch pulses.
const CORRELATED_PERIOD: u64 = 10;
const CORRELATED_ON: u64 = 6;

/// Steady background traffic of the IoT device population at each switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenignProfile {
    pub load: f64,
    pub flows: f64,
    /// Relative per-tick jitter of load and flows.
    pub jitter: f64,
    pub port_diversity: f64,
}

impl Default for BenignProfile {
    fn default() -> Self {
        BenignProfile { load: 0.30, flows: 0.8, jitter: 0.15, port_diversity: 0.2 }
    }
}

/// What one campaign adds at one switch for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct Contribution {
    pub load: f64,
    pub flows: f64,
    pub histogram: [f64; K_SOURCES],
    pub port_diversity: f64,
    pub attack: bool,
    pub sync_flag: bool,
    /// Start of the current active phase.
    pub phase_onset: u64,
}

impl Contribution {
    pub fn is_zero(&self) -> bool {
        self.load == 0.0 && self.flows == 0.0
    }
}

fn jitter(spec: &CampaignSpec, tick: u64, switch: usize, amount: f64) -> f64 {
    let mut rng = rng_for(&[spec.seed, tick, switch as u64, spec.class as u64, 0x6E4]);
    1.0 + amount * rng.gen_range(-1.0..=1.0)
}

/// Whether `switch` takes part in a synchronized event of this campaign.
fn joins_sync(spec: &CampaignSpec, switch: usize) -> bool {
    let mut rng = rng_for(&[spec.seed, switch as u64, spec.class as u64, 0x5C]);
    rng.gen_bool(spec.sync_probability.clamp(0.0, 1.0))
}

/// Contribution of `spec` at `switch` on `tick`, or `None` when it is idle
/// there.
pub fn generate(spec: &CampaignSpec, tick: u64, switch: usize) -> Option<Contribution> {
    if spec.intensity <= 0.0 || !spec.active_at(tick) || !spec.targets.contains(&switch) {
        return None;
    }
    let i = spec.intensity;
    let since = tick - spec.onset;
    let (load, flows, histogram, port_diversity, phase_onset) = match spec.class {
        CampaignClass::HighVolumeBurst => (0.35 * i, 2.0 * i, BROAD_HISTOGRAM, 0.3, spec.onset),
        CampaignClass::DistributedLowRateScan => (0.03 * i, 1.5 * i, UNIFORM_HISTOGRAM, 0.9, spec.onset),
        CampaignClass::SynchronizedMimicry | CampaignClass::BenignSyncBurst => {
            if !joins_sync(spec, switch) {
                return None;
            }
            let hist = if spec.class == CampaignClass::BenignSyncBurst { BENIGN_HISTOGRAM } else { MIMICRY_HISTOGRAM };
            (0.25 * i, 1.0 * i, hist, 0.22, spec.onset)
        }
        CampaignClass::BurstAndIdle => {
            if since % BURST_IDLE_PERIOD >= BURST_IDLE_ON {
                return None;
            }
            let onset = spec.onset + since / BURST_IDLE_PERIOD * BURST_IDLE_PERIOD;
            (0.35 * i, 2.0 * i, BROAD_HISTOGRAM, 0.3, onset)
        }
        CampaignClass::MultiSwitchCorrelated => {
            if since % CORRELATED_PERIOD >= CORRELATED_ON {
                return None;
            }
            let onset = spec.onset + since / CORRELATED_PERIOD * CORRELATED_PERIOD;
            (0.2 * i, 1.2 * i, BROAD_HISTOGRAM, 0.35, onset)
        }
        CampaignClass::LowAndSlow => (0.05 * i, 0.3 * i, SLOW_HISTOGRAM, 0.4, spec.onset),
    };
    let j = jitter(spec, tick, switch, 0.1);
    Some(Contribution {
        load: load * j,
        flows: flows * j,
        histogram,
        port_diversity,
        attack: spec.class.is_attack(),
        sync_flag: spec.class == CampaignClass::BenignSyncBurst,
        phase_onset,
    })
}
