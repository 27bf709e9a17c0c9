//! Transition kernels: controller backlog, delayed actuation and queues.

use rand::Rng;
use rand_distr::{Distribution, Geometric};

use super::config::{ServiceModel, SimConfig};
use super::state::{ActiveRule, NetworkState, PendingRule};
use crate::safety::Action;

/// Backlog recursion with a finite buffer: returns `(backlog', dropped)`.
pub fn backlog_update(backlog: u64, arrivals: u64, served: u64, buffer: u64) -> (u64, u64) {
    let next = (backlog + arrivals).saturating_sub(served);
    if next > buffer {
        (buffer, next - buffer)
    } else {
        (next, 0)
    }
}

/// Actuation penalty κ(a)·ln(1 + d).
pub fn actuation_delay(action: Action, backlog: u64, cfg: &SimConfig) -> f64 {
    cfg.kappa(action) * (backlog as f64).ln_1p()
}

/// Ticks until a controller-mediated rule submitted at backlog `d` activates.
pub fn ready_offset(action: Action, backlog: u64, cfg: &SimConfig) -> u64 {
    actuation_delay(action, backlog, cfg).ceil() as u64
}

/// One queue update; returns `(q', overflow)` where overflow is the excess
/// above a full buffer.
pub fn queue_update(q: f64, load: f64, service: f64, delta: f64) -> (f64, f64) {
    let raw = q + load - service + delta;
    (raw.clamp(0.0, 1.0), (raw - 1.0).max(0.0))
}

/// Applies [`queue_update`] to every switch and returns per-switch overflow.
pub fn step_queues(state: &mut NetworkState, loads: &[f64], service: &[f64], deltas: &[f64]) -> Vec<f64> {
    state
        .queues
        .iter_mut()
        .enumerate()
        .map(|(i, q)| {
            let (next, overflow) = queue_update(*q, loads[i], service[i], deltas[i]);
            *q = next;
            overflow
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerStep {
    pub arrivals: u64,
    pub served: u64,
    pub dropped: u64,
    pub activated: Vec<PendingRule>,
}

/// Jobs the service model can process this tick.
pub fn draw_service(state: &mut NetworkState, cfg: &SimConfig, rng: &mut impl Rng) -> u64 {
    let c = &mut state.controller;
    match cfg.service_model {
        ServiceModel::Deterministic => {
            c.service_credit += c.service_rate;
            let s = c.service_credit.floor();
            c.service_credit -= s;
            s as u64
        }
        ServiceModel::Stochastic => {
            let p = 1.0 / (1.0 + c.service_rate);
            Geometric::new(p).expect("valid probability").sample(rng)
        }
    }
}

/// Serves the controller queue, activates due rules and expires old ones.
pub fn step_controller(
    state: &mut NetworkState,
    arrivals: &[u64],
    served_capacity: u64,
    cfg: &SimConfig,
) -> ControllerStep {
    let tick = state.step_index;
    let total: u64 = arrivals.iter().sum();
    let c = &mut state.controller;
    let (backlog, dropped) = backlog_update(c.backlog, total, served_capacity, cfg.buffer);
    let served = (c.backlog + total).min(served_capacity);
    c.backlog = backlog;
    c.packetin_drops += dropped;
    c.utilization = (total as f64 / c.service_rate).min(1.0);

    let (due, waiting): (Vec<_>, Vec<_>) = c.pending_rules.drain(..).partition(|r| r.ready_tick <= tick);
    c.pending_rules = waiting;
    for table in &mut state.flow_tables {
        if table.mitigation.is_some_and(|m| m.expires_tick <= tick) {
            table.mitigation = None;
        }
    }
    for rule in &due {
        let table = &mut state.flow_tables[rule.switch];
        if rule.action >= table.mitigation_level() {
            table.mitigation = Some(ActiveRule { action: rule.action, expires_tick: tick + cfg.rule_lifetime });
        }
    }
    ControllerStep { arrivals: total, served, dropped, activated: due }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backlog_examples() {
        assert_eq!(backlog_update(41, 5, 7, 256), (39, 0));
        assert_eq!(backlog_update(0, 0, 7, 256), (0, 0));
        assert_eq!(backlog_update(3, 10, 7, 256), (6, 0));
        assert_eq!(backlog_update(250, 20, 7, 256), (256, 7));
    }

    #[test]
    fn delay_examples() {
        let cfg = SimConfig::default();
        assert_eq!(actuation_delay(Action::Quarantine, 0, &cfg), 0.0);
        let d = actuation_delay(Action::DropFlow, 41, &cfg);
        assert!((d - 7.475_339_236_566_737).abs() < 1e-9, "{d}");
        assert_eq!(ready_offset(Action::DropFlow, 41, &cfg), 8);
    }

    #[test]
    fn queue_examples() {
        assert_eq!(queue_update(0.0, 0.0, 0.3, 0.0), (0.0, 0.0));
        let (q, _) = queue_update(0.3, 0.2, 0.1, 0.0);
        assert!((q - 0.4).abs() < 1e-12);
        let (q, over) = queue_update(0.9, 0.5, 0.1, 0.0);
        assert_eq!(q, 1.0);
        assert!((over - 0.3).abs() < 1e-12);
    }

    #[test]
    fn deterministic_service_averages_mu() {
        let cfg = SimConfig { service_rate: 2.5, ..SimConfig::default() };
        let mut s = NetworkState::new(1, 2.5, 20);
        let mut rng = crate::util::rng_for(&[1]);
        let total: u64 = (0..100).map(|_| draw_service(&mut s, &cfg, &mut rng)).sum();
        assert_eq!(total, 250);
    }
}
