//! Latent network state: switch queues, flow tables, the shared controller
//! and the hidden traffic regime.

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::campaigns::CampaignClass;
use crate::safety::Action;

/// Ground truth for one switch at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum TrafficLabel {
    #[default]
    Benign,
    Attack(CampaignClass),
}

impl TrafficLabel {
    pub fn is_attack(self) -> bool {
        matches!(self, TrafficLabel::Attack(_))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrafficLabel::Benign => "benign",
            TrafficLabel::Attack(c) => c.as_str(),
        }
    }
}

impl fmt::Display for TrafficLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for TrafficLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TrafficLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "benign" {
            return Ok(TrafficLabel::Benign);
        }
        match s.parse::<CampaignClass>() {
            Ok(c) if c.is_attack() => Ok(TrafficLabel::Attack(c)),
            _ => Err(serde::de::Error::custom(format!("unknown label `{s}`"))),
        }
    }
}

/// Offered traffic at one switch for one tick, before mitigation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchTraffic {
    /// Benign offered load in queue-occupancy units per tick.
    pub benign_load: f64,
    pub attack_load: f64,
    /// Expected new flows (flow-table misses) per tick.
    pub benign_flows: f64,
    pub attack_flows: f64,
    /// Distribution of traffic over the source bins.
    pub histogram: Vec<f64>,
    pub port_diversity: f64,
    pub label: TrafficLabel,
    pub sync_flag: bool,
    /// Tick at which the current attack phase began.
    pub attack_onset: Option<u64>,
}

impl SwitchTraffic {
    pub fn idle(k_sources: usize) -> Self {
        let mut histogram = vec![0.0; k_sources];
        histogram[0] = 1.0;
        SwitchTraffic {
            benign_load: 0.0,
            attack_load: 0.0,
            benign_flows: 0.0,
            attack_flows: 0.0,
            histogram,
            port_diversity: 0.0,
            label: TrafficLabel::Benign,
            sync_flag: false,
            attack_onset: None,
        }
    }
}

/// The hidden regime z: per-switch traffic for the current tick.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrafficRegime {
    pub switches: Vec<SwitchTraffic>,
}

/// A rule installed in a switch's table that mitigates its traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveRule {
    pub action: Action,
    pub expires_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTableState {
    pub occupancy: f64,
    /// Installs plus evictions in the last tick, in table-capacity units.
    pub churn_rate: f64,
    pub timeout_ticks: u64,
    pub eviction_count: u64,
    pub mitigation: Option<ActiveRule>,
    /// Evicted entries that will miss again next tick.
    pub re_miss: f64,
    /// Fractional PacketIn carried to the next tick.
    pub packetin_carry: f64,
}

impl FlowTableState {
    pub fn new(timeout_ticks: u64) -> Self {
        FlowTableState {
            occupancy: 0.0,
            churn_rate: 0.0,
            timeout_ticks,
            eviction_count: 0,
            mitigation: None,
            re_miss: 0.0,
            packetin_carry: 0.0,
        }
    }

    /// Action of the active rule, or ALLOW when none is installed.
    pub fn mitigation_level(&self) -> Action {
        self.mitigation.map_or(Action::Allow, |r| r.action)
    }
}

/// A FlowMod or meter job submitted to the controller and not yet active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRule {
    pub switch: usize,
    pub action: Action,
    pub submit_tick: u64,
    pub ready_tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub backlog: u64,
    pub service_rate: f64,
    pub pending_rules: Vec<PendingRule>,
    pub packetin_drops: u64,
    /// Offered controller load relative to capacity, capped at 1.
    pub utilization: f64,
    /// Fractional service credit of the deterministic service model.
    pub service_credit: f64,
}

impl ControllerState {
    pub fn new(service_rate: f64) -> Self {
        ControllerState {
            backlog: 0,
            service_rate,
            pending_rules: Vec::new(),
            packetin_drops: 0,
            utilization: 0.0,
            service_credit: 0.0,
        }
    }

    pub fn pending_for(&self, switch: usize) -> impl Iterator<Item = &PendingRule> {
        self.pending_rules.iter().filter(move |r| r.switch == switch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkState {
    pub step_index: u64,
    pub queues: Vec<f64>,
    pub flow_tables: Vec<FlowTableState>,
    pub controller: ControllerState,
    pub regime: TrafficRegime,
    /// Compute pressure per switch.
    pub compute: Vec<f64>,
    /// Actuation activity per switch.
    pub actuation: Vec<f64>,
    /// PacketIns sent by each switch in the last tick.
    pub last_packetins: Vec<u64>,
    /// Jobs each switch sends to the controller at the next controller step.
    pub inbound_jobs: Vec<u64>,
}

impl NetworkState {
    pub fn new(n_switches: usize, service_rate: f64, timeout_ticks: u64) -> Self {
        NetworkState {
            step_index: 0,
            queues: vec![0.0; n_switches],
            flow_tables: vec![FlowTableState::new(timeout_ticks); n_switches],
            controller: ControllerState::new(service_rate),
            regime: TrafficRegime::default(),
            compute: vec![0.0; n_switches],
            actuation: vec![0.0; n_switches],
            last_packetins: vec![0; n_switches],
            inbound_jobs: vec![0; n_switches],
        }
    }

    pub fn n_switches(&self) -> usize {
        self.queues.len()
    }

    /// Checks the structural invariants; returns the first violation.
    pub fn check(&self) -> Result<(), String> {
        let n = self.n_switches();
        if self.queues.iter().any(|q| !(0.0..=1.0).contains(q)) {
            return Err("queue outside [0, 1]".into());
        }
        if self.flow_tables.len() != n
            || self.compute.len() != n
            || self.actuation.len() != n
            || self.last_packetins.len() != n
            || self.inbound_jobs.len() != n
        {
            return Err("per-switch vectors disagree on length".into());
        }
        if self.flow_tables.iter().any(|f| !(0.0..=1.0).contains(&f.occupancy)) {
            return Err("flow-table occupancy outside [0, 1]".into());
        }
        for r in &self.controller.pending_rules {
            if r.switch >= n {
                return Err(format!("pending rule for unknown switch {}", r.switch));
            }
            if r.ready_tick < r.submit_tick {
                return Err("pending rule ready before submission".into());
            }
        }
        Ok(())
    }
}
