//! Campaign specifications: one scripted traffic pattern with its timing,
//! intensity and targets.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::rng_for;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignClass {
    HighVolumeBurst,
    DistributedLowRateScan,
    SynchronizedMimicry,
    BurstAndIdle,
    MultiSwitchCorrelated,
    LowAndSlow,
    BenignSyncBurst,
}

impl CampaignClass {
    pub const ALL: [CampaignClass; 7] = [
        CampaignClass::HighVolumeBurst,
        CampaignClass::DistributedLowRateScan,
        CampaignClass::SynchronizedMimicry,
        CampaignClass::BurstAndIdle,
        CampaignClass::MultiSwitchCorrelated,
        CampaignClass::LowAndSlow,
        CampaignClass::BenignSyncBurst,
    ];

    pub const ATTACKS: [CampaignClass; 6] = [
        CampaignClass::HighVolumeBurst,
        CampaignClass::DistributedLowRateScan,
        CampaignClass::SynchronizedMimicry,
        CampaignClass::BurstAndIdle,
        CampaignClass::MultiSwitchCorrelated,
        CampaignClass::LowAndSlow,
    ];

    pub fn is_attack(self) -> bool {
        self != CampaignClass::BenignSyncBurst
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CampaignClass::HighVolumeBurst => "high_volume_burst",
            CampaignClass::DistributedLowRateScan => "distributed_low_rate_scan",
            CampaignClass::SynchronizedMimicry => "synchronized_mimicry",
            CampaignClass::BurstAndIdle => "burst_and_idle",
            CampaignClass::MultiSwitchCorrelated => "multi_switch_correlated",
            CampaignClass::LowAndSlow => "low_and_slow",
            CampaignClass::BenignSyncBurst => "benign_sync_burst",
        }
    }

    /// Default share of the horizon a randomized campaign of this class lasts.
    fn typical_duration(self, horizon: u64) -> u64 {
        let frac = match self {
            CampaignClass::LowAndSlow | CampaignClass::DistributedLowRateScan => 0.5,
            CampaignClass::BurstAndIdle => 0.4,
            CampaignClass::BenignSyncBurst | CampaignClass::SynchronizedMimicry => 0.15,
            _ => 0.25,
        };
        ((horizon as f64 * frac).round() as u64).max(1)
    }

    /// How many switches a randomized campaign of this class targets.
    fn typical_targets(self, n: usize) -> usize {
        match self {
            CampaignClass::DistributedLowRateScan | CampaignClass::BenignSyncBurst => n,
            CampaignClass::MultiSwitchCorrelated => n.min(3),
            CampaignClass::HighVolumeBurst => n.min(2),
            _ => 1,
        }
    }
}

impl fmt::Display for CampaignClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown campaign class `{0}`")]
pub struct UnknownClass(pub String);

impl FromStr for CampaignClass {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CampaignClass::ALL.into_iter().find(|c| c.as_str() == s).ok_or_else(|| UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSpec {
    pub class: CampaignClass,
    /// Multiplier on the class's attack volume; 0 disables the campaign.
    pub intensity: f64,
    /// Probability that each target joins a synchronized event.
    pub sync_probability: f64,
    pub onset: u64,
    pub duration: u64,
    pub targets: Vec<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("intensity must be finite and non-negative, got {0}")]
    Intensity(f64),
    #[error("sync probability must lie in [0, 1], got {0}")]
    SyncProbability(f64),
    #[error("target switch {0} out of range for {1} switches")]
    Target(usize, usize),
    #[error("campaign has no targets")]
    NoTargets,
}

impl CampaignSpec {
    pub fn new(
        class: CampaignClass,
        intensity: f64,
        onset: u64,
        duration: u64,
        targets: Vec<usize>,
        seed: u64,
    ) -> Self {
        CampaignSpec { class, intensity, sync_probability: 1.0, onset, duration, targets, seed }
    }

    /// Randomized timing and targets within a horizon, as attack timing is
    /// not fixed across seeds.
    pub fn randomized(class: CampaignClass, intensity: f64, horizon: u64, n_switches: usize, seed: u64) -> Self {
        let mut rng = rng_for(&[seed, 0xCA4F, class as u64]);
        let duration = class.typical_duration(horizon).min(horizon.max(1));
        let latest = horizon.saturating_sub(duration);
        let onset = rng.gen_range(latest / 10..=latest.max(latest / 10));
        let k = class.typical_targets(n_switches).max(1);
        let mut all: Vec<usize> = (0..n_switches).collect();
        for i in 0..k.min(n_switches) {
            let j = rng.gen_range(i..n_switches);
            all.swap(i, j);
        }
        let mut targets = all[..k.min(n_switches)].to_vec();
        targets.sort_unstable();
        let sync_probability = if matches!(class, CampaignClass::BenignSyncBurst | CampaignClass::SynchronizedMimicry) {
            0.8
        } else {
            1.0
        };
        CampaignSpec { class, intensity, sync_probability, onset, duration, targets, seed }
    }

    pub fn validate(&self, n_switches: usize) -> Result<(), SpecError> {
        if !self.intensity.is_finite() || self.intensity < 0.0 {
            return Err(SpecError::Intensity(self.intensity));
        }
        if !(0.0..=1.0).contains(&self.sync_probability) {
            return Err(SpecError::SyncProbability(self.sync_probability));
        }
        if self.targets.is_empty() {
            return Err(SpecError::NoTargets);
        }
        if let Some(&t) = self.targets.iter().find(|&&t| t >= n_switches) {
            return Err(SpecError::Target(t, n_switches));
        }
        Ok(())
    }

    pub fn active_at(&self, tick: u64) -> bool {
        tick >= self.onset && tick < self.onset + self.duration
    }
}

/// `levels` specs of one class with intensity spanning mild to
/// near-saturation; everything else is held fixed.
pub fn intensity_ladder(
    class: CampaignClass,
    levels: usize,
    horizon: u64,
    n_switches: usize,
    seed: u64,
) -> Vec<CampaignSpec> {
    let levels = levels.max(2);
    let base = CampaignSpec::randomized(class, 0.0, horizon, n_switches, seed);
    (0..levels)
        .map(|k| {
            let t = k as f64 / (levels - 1) as f64;
            CampaignSpec { intensity: MILD_INTENSITY + t * (SATURATING_INTENSITY - MILD_INTENSITY), ..base.clone() }
        })
        .collect()
}

/// Intensity that keeps controller utilization well below 60%.
pub const MILD_INTENSITY: f64 = 0.2;
/// Intensity at which summed PacketIn arrivals approach controller capacity.
pub const SATURATING_INTENSITY: f64 = 1.0;
