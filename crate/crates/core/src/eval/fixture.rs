//! The overload-masking scenario: two switches, the controller just above
//! its backlog cap, and a governed constitution that forbids controller-heavy
//! actions there. Switch 0 asks for DROP_FLOW and is projected to RATE_LIMIT.

use super::replay::ScriptedRun;
use crate::campaigns::{CampaignClass, Scenario, BENIGN_HISTOGRAM, K_SOURCES};
use crate::governance::heavy_mask_rules;
use crate::safety::{merge, Action, MaskEdit, PolicyConstitution, PolicyDelta};
use crate::sim::{NetworkState, SimConfig, SwitchTraffic, TrafficLabel, TrafficRegime};

/// Backlog seen when switch 0 decides.
pub const DECISION_BACKLOG: u64 = 41;
pub const DECISION_QUEUE: f64 = 0.57;
pub const DECISION_FLOW_PRESSURE: f64 = 0.66;
/// Queue expected at switch 0 after the tick, and its tolerance.
pub const EXPECTED_QUEUE: f64 = 0.48;
pub const QUEUE_TOLERANCE: f64 = 0.02;
pub const EXPECTED_ARRIVALS: u64 = 5;
pub const EXPECTED_SERVED: u64 = 7;
pub const EXPECTED_NEXT_BACKLOG: u64 = 39;

/// Directory name of the bundled copy under `fixtures/`.
pub const BUNDLE_NAME: &str = "runtime_trace";

fn traffic(benign_load: f64, attack_load: f64, benign_flows: f64, attack_flows: f64, attack: bool) -> SwitchTraffic {
    let histogram = if attack { vec![1.0 / K_SOURCES as f64; K_SOURCES] } else { BENIGN_HISTOGRAM.to_vec() };
    SwitchTraffic {
        benign_load,
        attack_load,
        benign_flows,
        attack_flows,
        histogram,
        port_diversity: if attack { 0.4 } else { 0.1 },
        label: if attack { TrafficLabel::Attack(CampaignClass::HighVolumeBurst) } else { TrafficLabel::Benign },
        sync_flag: false,
        attack_onset: attack.then_some(0),
    }
}

/// Script plus the two-entry policy history (bootstrap, then the governed
/// successor that adds the overload masks).
pub fn runtime_trace() -> (ScriptedRun, Vec<(PolicyConstitution, Option<PolicyDelta>)>) {
    let sim = SimConfig { n_switches: 2, ..SimConfig::default() };
    let regime =
        TrafficRegime { switches: vec![traffic(0.16, 0.15, 1.0, 1.0, true), traffic(0.10, 0.0, 2.5, 0.0, false)] };
    let mut state = NetworkState::new(2, sim.service_rate, sim.flow_timeout_ticks);
    // the first controller step serves 7 of 43 + 5 jobs, leaving 41
    state.controller.backlog = DECISION_BACKLOG + EXPECTED_SERVED - EXPECTED_ARRIVALS;
    state.inbound_jobs = vec![3, 2];
    state.queues = vec![DECISION_QUEUE, 0.2];
    state.flow_tables[0].occupancy = DECISION_FLOW_PRESSURE;
    state.flow_tables[1].occupancy = 0.3;
    state.flow_tables[1].packetin_carry = 0.5;
    let script = ScriptedRun {
        scenario: Scenario::pinned(regime, 2),
        sim,
        initial_state: state,
        env_seed: 41,
        episode: 0,
        actions: vec![vec![Action::DropFlow, Action::Allow], vec![Action::RateLimit, Action::Allow]],
    };

    let genesis = PolicyConstitution::bootstrap();
    let delta = PolicyDelta {
        mask_rule_edits: heavy_mask_rules().into_iter().map(|rule| MaskEdit::Add { rule }).collect(),
        rationale: "forbid controller-heavy actions above the backlog cap".into(),
        ..PolicyDelta::default()
    };
    let governed = merge(&genesis, &delta).expect("overload masks merge into the bootstrap constitution");
    (script, vec![(genesis, None), (governed, Some(delta))])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_tick_reproduces_the_masking_step() {
        let (script, history) = runtime_trace();
        let pi = &history.last().unwrap().0;
        let (trace, steps) = script.execute(pi).unwrap();
        let sw0 = &trace[0];
        assert_eq!(sw0.backlog, DECISION_BACKLOG);
        assert_eq!(sw0.sampled_action, Action::DropFlow);
        assert_eq!(sw0.executed_action, Action::RateLimit);
        assert!((sw0.queue - EXPECTED_QUEUE).abs() <= QUEUE_TOLERANCE, "{}", sw0.queue);
        assert_eq!((steps[1].arrivals, steps[1].served), (EXPECTED_ARRIVALS, EXPECTED_SERVED));
        assert_eq!(trace[2].backlog, EXPECTED_NEXT_BACKLOG);
    }
}
