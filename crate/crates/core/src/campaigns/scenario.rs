//! A scenario is a benign baseline plus a list of campaigns; it yields the
//! traffic regime for any tick as a pure function of its seed.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::generate::{generate, BenignProfile, BENIGN_HISTOGRAM, K_SOURCES};
use super::spec::{CampaignClass, CampaignSpec, SpecError, SATURATING_INTENSITY};
use crate::sim::{SwitchTraffic, TrafficLabel, TrafficRegime};
use crate::util::rng_for;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n_switches: usize,
    pub horizon: u64,
    pub seed: u64,
    #[serde(default)]
    pub benign: BenignProfile,
    #[serde(default)]
    pub campaigns: Vec<CampaignSpec>,
    /// Fixed regime returned for every tick, overriding the generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinned: Option<TrafficRegime>,
}

impl Scenario {
    pub fn benign(n_switches: usize, horizon: u64, seed: u64) -> Self {
        Scenario { n_switches, horizon, seed, benign: BenignProfile::default(), campaigns: Vec::new(), pinned: None }
    }

    /// Scenario that repeats `regime` on every tick.
    pub fn pinned(regime: TrafficRegime, horizon: u64) -> Self {
        Scenario { pinned: Some(regime.clone()), ..Scenario::benign(regime.switches.len(), horizon, 0) }
    }

    pub fn with_campaigns(n_switches: usize, horizon: u64, seed: u64, campaigns: Vec<CampaignSpec>) -> Self {
        Scenario { campaigns, ..Scenario::benign(n_switches, horizon, seed) }
    }

    /// Mixed episode: two or three attack campaigns of random classes and
    /// intensities plus a benign synchronized burst.
    pub fn training_mix(n_switches: usize, horizon: u64, seed: u64) -> Self {
        let mut rng = rng_for(&[seed, 0x7EA1]);
        let count = rng.gen_range(2..=3);
        let mut campaigns: Vec<CampaignSpec> = CampaignClass::ATTACKS
            .choose_multiple(&mut rng, count)
            .enumerate()
            .map(|(k, class)| {
                let intensity = rng.gen_range(0.4..=SATURATING_INTENSITY);
                CampaignSpec::randomized(*class, intensity, horizon, n_switches, seed.wrapping_add(k as u64 * 7919))
            })
            .collect();
        campaigns.push(CampaignSpec::randomized(
            CampaignClass::BenignSyncBurst,
            rng.gen_range(0.6..=1.0),
            horizon,
            n_switches,
            seed ^ 0xB5,
        ));
        Scenario::with_campaigns(n_switches, horizon, seed, campaigns)
    }

    /// Near-saturation high-volume bursts plus a correlated campaign.
    pub fn saturation(n_switches: usize, horizon: u64, seed: u64) -> Self {
        let campaigns = vec![
            CampaignSpec::randomized(CampaignClass::HighVolumeBurst, SATURATING_INTENSITY, horizon, n_switches, seed),
            CampaignSpec::randomized(
                CampaignClass::MultiSwitchCorrelated,
                SATURATING_INTENSITY,
                horizon,
                n_switches,
                seed ^ 0xC0,
            ),
            CampaignSpec::randomized(CampaignClass::BenignSyncBurst, 0.8, horizon, n_switches, seed ^ 0xB5),
        ];
        Scenario::with_campaigns(n_switches, horizon, seed, campaigns)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if let Some(p) = &self.pinned {
            if p.switches.len() != self.n_switches {
                return Err(SpecError::Target(p.switches.len(), self.n_switches));
            }
        }
        self.campaigns.iter().try_for_each(|c| c.validate(self.n_switches))
    }

    /// Traffic at every switch on `tick`.
    pub fn regime(&self, tick: u64) -> TrafficRegime {
        if let Some(p) = &self.pinned {
            return p.clone();
        }
        let switches = (0..self.n_switches).map(|i| self.switch_traffic(tick, i)).collect();
        TrafficRegime { switches }
    }

    fn switch_traffic(&self, tick: u64, switch: usize) -> SwitchTraffic {
        let b = &self.benign;
        let mut rng = rng_for(&[self.seed, tick, switch as u64, 0xBE9]);
        let benign_load = b.load * (1.0 + b.jitter * rng.gen_range(-1.0..=1.0));
        let benign_flows = b.flows * (1.0 + b.jitter * rng.gen_range(-1.0..=1.0));

        let mut t = SwitchTraffic {
            benign_load,
            attack_load: 0.0,
            benign_flows,
            attack_flows: 0.0,
            histogram: vec![0.0; K_SOURCES],
            port_diversity: 0.0,
            label: TrafficLabel::Benign,
            sync_flag: false,
            attack_onset: None,
        };
        let mut weighted_hist = BENIGN_HISTOGRAM.map(|p| p * benign_flows);
        let mut weighted_ports = b.port_diversity * benign_flows;
        let mut strongest = 0.0;
        for spec in &self.campaigns {
            let Some(c) = generate(spec, tick, switch) else { continue };
            if c.is_zero() {
                continue;
            }
            if c.attack {
                t.attack_load += c.load;
                t.attack_flows += c.flows;
                if c.load >= strongest || !t.label.is_attack() {
                    strongest = c.load;
                    t.label = TrafficLabel::Attack(spec.class);
                }
                t.attack_onset = Some(t.attack_onset.map_or(c.phase_onset, |o| o.min(c.phase_onset)));
            } else {
                t.benign_load += c.load;
                t.benign_flows += c.flows;
            }
            t.sync_flag |= c.sync_flag;
            for (w, p) in weighted_hist.iter_mut().zip(c.histogram) {
                *w += p * c.flows;
            }
            weighted_ports += c.port_diversity * c.flows;
        }
        let total: f64 = weighted_hist.iter().sum();
        let flows = t.benign_flows + t.attack_flows;
        if total > 0.0 {
            t.histogram = weighted_hist.iter().map(|w| w / total).collect();
            t.port_diversity = weighted_ports / flows;
        } else {
            t.histogram = BENIGN_HISTOGRAM.to_vec();
        }
        t
    }
}
