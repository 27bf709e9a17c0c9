//! The environment: owns the latent state and applies joint actions.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{SimConfig, SimError};
use super::dynamics::{actuation_delay, draw_service, ready_offset, step_controller, step_queues, ControllerStep};
use super::observe::{elastic_factor, observe, rule_context, Telemetry};
use super::state::{ActiveRule, NetworkState, PendingRule, TrafficLabel};
use crate::campaigns::Scenario;
use crate::safety::{Action, RuleContext};
use crate::util::rng_for;

/// Multipliers an installed rule applies to a switch's traffic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MitigationEffect {
    pub attack_load: f64,
    pub benign_load: f64,
    pub attack_flows: f64,
    pub benign_flows: f64,
}

impl MitigationEffect {
    pub fn of(level: Action) -> Self {
        let (attack_load, benign_load, attack_flows, benign_flows) = match level {
            Action::RateLimit => (0.4, 0.95, 0.6, 0.95),
            Action::DropFlow => (0.05, 0.9, 0.1, 0.9),
            Action::Quarantine => (0.0, 0.0, 0.0, 0.0),
            _ => (1.0, 1.0, 1.0, 1.0),
        };
        MitigationEffect { attack_load, benign_load, attack_flows, benign_flows }
    }
}

/// What happened at one switch during one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchOutcome {
    pub queue_before: f64,
    pub queue_after: f64,
    /// Data-plane overflow above a full queue.
    pub overflow: f64,
    pub packetins: u64,
    /// Controller jobs submitted for the executed action.
    pub flowmods_submitted: u64,
    pub rtt_ms: f64,
    pub label: TrafficLabel,
    pub sync_flag: bool,
    pub attack_onset: Option<u64>,
    /// Mitigation installed after the action was applied.
    pub mitigation: Action,
}

pub struct Environment {
    cfg: SimConfig,
    scenario: Scenario,
    seed: u64,
    initial: NetworkState,
    state: NetworkState,
    service_rng: ChaCha8Rng,
    last_step: ControllerStep,
}

impl Environment {
    pub fn new(cfg: SimConfig, scenario: Scenario, seed: u64) -> Result<Self, SimError> {
        let state = NetworkState::new(cfg.n_switches, cfg.service_rate, cfg.flow_timeout_ticks);
        Environment::from_state(cfg, scenario, seed, state)
    }

    /// Starts from an arbitrary well-formed state (used by fixtures).
    pub fn from_state(cfg: SimConfig, scenario: Scenario, seed: u64, state: NetworkState) -> Result<Self, SimError> {
        cfg.validate()?;
        scenario.validate().map_err(|e| SimError::Scenario(e.to_string()))?;
        if scenario.n_switches != cfg.n_switches || state.n_switches() != cfg.n_switches {
            return Err(SimError::Scenario(format!(
                "scenario has {} switches, state {}, config {}",
                scenario.n_switches,
                state.n_switches(),
                cfg.n_switches
            )));
        }
        state.check().map_err(SimError::Scenario)?;
        Ok(Environment {
            service_rng: rng_for(&[seed, 0x5E7]),
            cfg,
            scenario,
            seed,
            initial: state.clone(),
            state,
            last_step: ControllerStep { arrivals: 0, served: 0, dropped: 0, activated: Vec::new() },
        })
    }

    pub fn reset(&mut self) {
        self.state = self.initial.clone();
        self.service_rng = rng_for(&[self.seed, 0x5E7]);
        self.last_step = ControllerStep { arrivals: 0, served: 0, dropped: 0, activated: Vec::new() };
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> &NetworkState {
        &self.state
    }

    pub fn n_switches(&self) -> usize {
        self.cfg.n_switches
    }

    pub fn tick(&self) -> u64 {
        self.state.step_index
    }

    pub fn horizon(&self) -> u64 {
        self.scenario.horizon
    }

    pub fn is_done(&self) -> bool {
        self.state.step_index >= self.scenario.horizon
    }

    pub fn last_controller_step(&self) -> &ControllerStep {
        &self.last_step
    }

    /// Controller step with last tick's jobs, then the regime for this tick.
    pub fn begin_tick(&mut self) -> &ControllerStep {
        let arrivals = std::mem::replace(&mut self.state.inbound_jobs, vec![0; self.cfg.n_switches]);
        let capacity = draw_service(&mut self.state, &self.cfg, &mut self.service_rng);
        self.last_step = step_controller(&mut self.state, &arrivals, capacity, &self.cfg);
        self.state.regime = self.scenario.regime(self.state.step_index);
        &self.last_step
    }

    pub fn observe(&self, switch: usize, hint_trust: f64) -> Result<Telemetry, SimError> {
        observe(&self.state, &self.cfg, switch, self.seed, hint_trust)
    }

    pub fn observe_all(&self, hint_trust: f64) -> Vec<Telemetry> {
        (0..self.cfg.n_switches).map(|i| self.observe(i, hint_trust).expect("switch in range")).collect()
    }

    pub fn rule_context(&self, obs: &Telemetry) -> RuleContext {
        rule_context(&self.state, obs)
    }

    /// Applies the joint executed action atomically and advances the tick.
    pub fn apply(&mut self, executed: &[Action]) -> Result<Vec<SwitchOutcome>, SimError> {
        let n = self.cfg.n_switches;
        if executed.len() != n {
            return Err(SimError::ActionCount { expected: n, got: executed.len() });
        }
        let cfg = &self.cfg;
        let st = &mut self.state;
        let tick = st.step_index;
        let backlog = st.controller.backlog;

        let mut loads = vec![0.0; n];
        let mut service = vec![0.0; n];
        let mut deltas = vec![0.0; n];
        let mut jobs = vec![0u64; n];
        let mut packetins = vec![0u64; n];
        for (i, &a) in executed.iter().enumerate() {
            let level = st.flow_tables[i].mitigation_level();
            match a {
                Action::RateLimit => {
                    if level <= Action::RateLimit {
                        if level < Action::RateLimit {
                            jobs[i] = a.nominal_flowmods() as u64;
                        }
                        st.flow_tables[i].mitigation =
                            Some(ActiveRule { action: a, expires_tick: tick + cfg.rule_lifetime });
                    }
                }
                // Every heavy issue is a FlowMod submission: a refresh
                // re-installs the rule and a repeat while pending duplicates it.
                Action::DropFlow | Action::Quarantine => {
                    if level >= a {
                        st.flow_tables[i].mitigation =
                            Some(ActiveRule { action: level, expires_tick: tick + cfg.rule_lifetime });
                    } else if !st.controller.pending_for(i).any(|r| r.action >= a) {
                        st.controller.pending_rules.push(PendingRule {
                            switch: i,
                            action: a,
                            submit_tick: tick,
                            ready_tick: tick + ready_offset(a, backlog, cfg),
                        });
                    }
                    jobs[i] = a.nominal_flowmods() as u64;
                }
                _ => {}
            }

            let traffic = &st.regime.switches[i];
            let eff = MitigationEffect::of(st.flow_tables[i].mitigation_level());
            let q = st.queues[i];
            loads[i] =
                traffic.benign_load * elastic_factor(q, cfg) * eff.benign_load + traffic.attack_load * eff.attack_load;
            service[i] = cfg.queue_service - if a == Action::Mirror { cfg.mirror_service_penalty } else { 0.0 };
            deltas[i] = cfg.c_delta * actuation_delay(a, backlog, cfg);

            let table = &mut st.flow_tables[i];
            let misses =
                traffic.benign_flows * eff.benign_flows + traffic.attack_flows * eff.attack_flows + table.re_miss;
            // every FlowMod writes a rule entry, so heavy re-issues churn the table
            let writes = jobs[i] as f64;
            let occ =
                table.occupancy + (misses + writes) / cfg.flow_capacity - table.occupancy / table.timeout_ticks as f64;
            let evicted = (occ - 1.0).max(0.0) * cfg.flow_capacity;
            table.occupancy = occ.clamp(0.0, 1.0);
            table.re_miss = evicted * cfg.re_miss_fraction;
            table.eviction_count += evicted.round() as u64;
            table.churn_rate = (misses + writes + evicted) / cfg.flow_capacity;
            table.packetin_carry += misses;
            let k = table.packetin_carry.floor();
            table.packetin_carry -= k;
            packetins[i] = k as u64;

            st.compute[i] = 0.8 * st.compute[i] + if a == Action::Mirror { 0.2 } else { 0.0 };
        }

        let queue_before = st.queues.clone();
        let overflow = step_queues(st, &loads, &service, &deltas);

        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let pending = st.controller.pending_for(i).count() as f64;
            st.actuation[i] = 0.7 * st.actuation[i] + 0.3 * ((jobs[i] as f64 + pending) / 4.0).min(1.0);
            st.inbound_jobs[i] = packetins[i] + jobs[i];
            st.last_packetins[i] = packetins[i];
            let traffic = &st.regime.switches[i];
            out.push(SwitchOutcome {
                queue_before: queue_before[i],
                queue_after: st.queues[i],
                overflow: overflow[i],
                packetins: packetins[i],
                flowmods_submitted: jobs[i],
                rtt_ms: cfg.rtt_base_ms + cfg.rtt_queue_ms * st.queues[i] + cfg.rtt_pending_ms * pending,
                label: traffic.label,
                sync_flag: traffic.sync_flag,
                attack_onset: traffic.attack_onset,
                mitigation: st.flow_tables[i].mitigation_level(),
            });
        }
        st.step_index += 1;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benign_run_is_stable_and_deterministic() {
        let cfg = SimConfig::default();
        let run = || {
            let mut env = Environment::new(cfg.clone(), Scenario::benign(4, 200, 3), 3).unwrap();
            let mut trace = Vec::new();
            while !env.is_done() {
                env.begin_tick();
                let obs = env.observe_all(0.8);
                let out = env.apply(&[Action::Allow; 4]).unwrap();
                env.state().check().unwrap();
                trace.push((obs, out, env.state().controller.backlog));
            }
            trace
        };
        let a = run();
        assert_eq!(a, run());
        let rtts: Vec<f64> = a.iter().flat_map(|(_, o, _)| o.iter().map(|s| s.rtt_ms)).collect();
        let mean = rtts.iter().sum::<f64>() / rtts.len() as f64;
        assert!((76.0..78.5).contains(&mean), "mean rtt {mean}");
        assert!(a.iter().all(|(_, _, d)| *d < 10));
    }

    #[test]
    fn heavy_rule_waits_for_ready_tick() {
        let cfg = SimConfig::default();
        let mut state = NetworkState::new(1, cfg.service_rate, cfg.flow_timeout_ticks);
        state.controller.backlog = 41;
        let cfg1 = SimConfig { n_switches: 1, ..cfg };
        let mut env = Environment::from_state(cfg1, Scenario::benign(1, 50, 0), 0, state).unwrap();
        env.begin_tick();
        let out = env.apply(&[Action::DropFlow]).unwrap();
        assert_eq!(out[0].flowmods_submitted, 3);
        assert_eq!(out[0].mitigation, Action::Allow);
        let ready = env.state().controller.pending_rules[0].ready_tick;
        assert!(ready >= 7, "ready {ready}");
        let mut activated_at = None;
        for _ in 0..20 {
            let step = env.begin_tick().clone();
            if !step.activated.is_empty() {
                activated_at = Some(env.tick());
                break;
            }
            // re-selecting while pending duplicates the submission without
            // queueing a second rule
            assert_eq!(env.apply(&[Action::DropFlow]).unwrap()[0].flowmods_submitted, 3);
            assert_eq!(env.state().controller.pending_rules.len(), 1);
        }
        assert_eq!(activated_at, Some(ready));
    }
}
