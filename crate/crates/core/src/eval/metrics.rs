//! Detection, QoS and overload metrics computed from traces.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::safety::{Action, Patches};
use crate::sim::TraceRecord;

/// Backlog level that counts as overload.
pub const CATASTROPHE_BACKLOG: u64 = 60;
/// Consecutive overloaded ticks that make an episode catastrophic.
pub const CATASTROPHE_TICKS: usize = 10;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("predictions and labels differ in length ({0} vs {1})")]
    Length(usize, usize),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_pairs(predictions: &[bool], labels: &[bool]) -> Result<Self, MetricError> {
        if predictions.len() != labels.len() {
            return Err(MetricError::Length(predictions.len(), labels.len()));
        }
        let mut c = Confusion::default();
        for (&p, &l) in predictions.iter().zip(labels) {
            match (p, l) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn from_trace<'a>(records: impl IntoIterator<Item = &'a TraceRecord>) -> Self {
        let mut c = Confusion::default();
        for r in records {
            match (r.executed_action.is_positive(), r.label.is_attack()) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Mean of the attack-class and benign-class F1. A class absent from
    /// the labels scores zero.
    pub fn macro_f1(&self) -> f64 {
        let f1 = |tp: u64, fp: u64, fn_: u64| {
            let d = 2 * tp + fp + fn_;
            if tp + fn_ == 0 || d == 0 {
                0.0
            } else {
                2.0 * tp as f64 / d as f64
            }
        };
        (f1(self.tp, self.fp, self.fn_) + f1(self.tn, self.fn_, self.fp)) / 2.0
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// Macro-F1 over {benign, attack}; `true` means attack / mitigated.
pub fn macro_f1(predictions: &[bool], labels: &[bool]) -> Result<f64, MetricError> {
    if predictions.is_empty() {
        return Err(MetricError::Empty);
    }
    let c = Confusion::from_pairs(predictions, labels)?;
    if c.tp + c.fn_ == 0 || c.tn + c.fp == 0 {
        tracing::warn!("macro_f1: one class is absent from the labels and scores zero");
    }
    Ok(c.macro_f1())
}

/// Linear-interpolation percentile (`p` in [0, 100]) of unsorted data.
pub fn percentile(values: &[f64], p: f64) -> f64 {
    percentiles(values, &[p])[0]
}

pub fn percentiles(values: &[f64], ps: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return vec![0.0; ps.len()];
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    ps.iter()
        .map(|p| {
            let h = (v.len() - 1) as f64 * (p / 100.0).clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        })
        .collect()
}

/// Weighted disruption: benign traffic rate-limited, dropped or quarantined,
/// plus every mirror, each weighted by its action cost.
pub fn disruption_score(trace: &[TraceRecord], patches: &Patches) -> f64 {
    trace
        .iter()
        .map(|r| match r.executed_action {
            Action::Mirror => patches.action_cost(Action::Mirror),
            a if a.is_containment() && !r.label.is_attack() => patches.action_cost(a),
            _ => 0.0,
        })
        .sum()
}

/// Controller backlog per tick, one value per `(episode, tick)` in order.
pub fn backlog_series(trace: &[TraceRecord]) -> BTreeMap<u64, Vec<u64>> {
    let mut out: BTreeMap<u64, BTreeMap<u64, u64>> = BTreeMap::new();
    for r in trace {
        out.entry(r.episode).or_default().insert(r.tick, r.backlog);
    }
    out.into_iter().map(|(e, ticks)| (e, ticks.into_values().collect())).collect()
}

/// True when the backlog stays at or above the overload level for the
/// configured number of consecutive ticks.
pub fn is_catastrophic(backlogs: &[u64]) -> bool {
    let mut run = 0;
    for &d in backlogs {
        run = if d >= CATASTROPHE_BACKLOG { run + 1 } else { 0 };
        if run >= CATASTROPHE_TICKS {
            return true;
        }
    }
    false
}

/// Catastrophic flag per episode in the trace.
pub fn catastrophic_episodes(trace: &[TraceRecord]) -> BTreeMap<u64, bool> {
    backlog_series(trace).into_iter().map(|(e, s)| (e, is_catastrophic(&s))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_arithmetic() {
        let c = Confusion { tp: 8, fp: 1, fn_: 2, tn: 9 };
        let expected = (16.0 / 19.0 + 18.0 / 21.0) / 2.0;
        assert!((c.macro_f1() - expected).abs() < 1e-12);
        assert!((c.macro_f1() - 0.850).abs() < 1e-3);
    }

    #[test]
    fn perfect_and_inverted() {
        let labels = [true, false, true, false];
        assert_eq!(macro_f1(&labels, &labels).unwrap(), 1.0);
        let inv: Vec<bool> = labels.iter().map(|l| !l).collect();
        assert_eq!(macro_f1(&inv, &labels).unwrap(), 0.0);
        assert_eq!(macro_f1(&[], &[]), Err(MetricError::Empty));
    }

    #[test]
    fn percentiles_interpolate() {
        let v: Vec<f64> = (1..=5).map(f64::from).collect();
        assert_eq!(percentiles(&v, &[0.0, 50.0, 100.0, 90.0]), vec![1.0, 3.0, 5.0, 4.6]);
    }

    #[test]
    fn catastrophe_needs_a_sustained_run() {
        let mut s = vec![60; 9];
        s.push(59);
        s.extend([60; 9]);
        assert!(!is_catastrophic(&s));
        s.push(70);
        assert!(is_catastrophic(&s));
    }
}
