//! Deterministic evidence summaries of a trace window.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::eval::metrics::{is_catastrophic, percentiles, Confusion};
use crate::reward::{discounted_return, lower_tail_cvar};
use crate::safety::Action;
use crate::sim::TraceRecord;
use crate::util::digest_of;

/// Discount used for the return-tail statistic.
pub const EVIDENCE_GAMMA: f64 = 0.95;
/// Tail level for the return CVaR: the worst 10% of agent-episodes.
pub const EVIDENCE_CVAR_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceBundle {
    pub window: u64,
    pub empty: bool,
    pub records: u64,
    pub ticks: u64,
    pub episodes: u64,
    pub macro_f1: f64,
    pub worst_agent_f1: f64,
    pub rtt_p50: f64,
    pub rtt_p95: f64,
    pub backlog_mean: f64,
    pub backlog_peak: u64,
    pub packetin_drops: u64,
    pub flowmods: u64,
    pub flowmods_per_tick: f64,
    /// Share of consecutive decisions at a switch whose executed action changed.
    pub churn: f64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// False positives on benign synchronized bursts.
    pub sync_false_positives: u64,
    /// Per sampled action, the share of its samples that the filter replaced.
    pub mask_frequency: BTreeMap<Action, f64>,
    /// Highest backlog at which a controller-heavy action executed.
    pub heavy_backlog_peak: u64,
    pub heavy_actions: u64,
    pub catastrophic_episodes: u64,
    pub catastrophic_flags: Vec<bool>,
    /// Lower-tail CVaR of discounted per-agent episode returns.
    pub return_cvar: f64,
    pub regimes: BTreeSet<String>,
}

impl EvidenceBundle {
    pub fn digest(&self) -> String {
        digest_of(self)
    }

    pub fn empty(window: u64) -> Self {
        EvidenceBundle { window, empty: true, ..EvidenceBundle::default() }
    }
}

/// Summarizes a window of trace records. The result depends only on the
/// records, so identical windows give identical digests.
pub fn summarize_trace(window_id: u64, window: &[TraceRecord]) -> EvidenceBundle {
    if window.is_empty() {
        return EvidenceBundle::empty(window_id);
    }
    let mut b = EvidenceBundle { window: window_id, records: window.len() as u64, ..EvidenceBundle::default() };

    let confusion = Confusion::from_trace(window);
    b.macro_f1 = confusion.macro_f1();
    b.false_positives = confusion.fp;
    b.false_negatives = confusion.fn_;

    let mut per_agent: BTreeMap<usize, Confusion> = BTreeMap::new();
    for r in window {
        per_agent.entry(r.switch).or_default().merge(&Confusion::from_trace([r]));
    }
    b.worst_agent_f1 = per_agent.values().map(|c| c.macro_f1()).fold(f64::INFINITY, f64::min);

    let rtts: Vec<f64> = window.iter().map(|r| r.rtt).collect();
    let p = percentiles(&rtts, &[50.0, 95.0]);
    b.rtt_p50 = p[0];
    b.rtt_p95 = p[1];

    // Controller quantities repeat on every switch record of a tick.
    let mut ticks: BTreeMap<(u64, u64), (u64, u64)> = BTreeMap::new();
    for r in window {
        ticks.insert((r.episode, r.tick), (r.backlog, r.packetin_drops));
    }
    b.ticks = ticks.len() as u64;
    b.backlog_peak = ticks.values().map(|t| t.0).max().unwrap_or(0);
    b.backlog_mean = ticks.values().map(|t| t.0 as f64).sum::<f64>() / ticks.len() as f64;
    b.packetin_drops = ticks.values().map(|t| t.1).sum();

    let mut episodes: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for ((e, _), (d, _)) in &ticks {
        episodes.entry(*e).or_default().push(*d);
    }
    b.episodes = episodes.len() as u64;
    b.catastrophic_flags = episodes.values().map(|s| is_catastrophic(s)).collect();
    b.catastrophic_episodes = b.catastrophic_flags.iter().filter(|f| **f).count() as u64;

    b.flowmods = window.iter().map(|r| r.flowmods_submitted).sum();
    b.flowmods_per_tick = b.flowmods as f64 / b.ticks as f64;

    let mut series: BTreeMap<(u64, usize), Vec<&TraceRecord>> = BTreeMap::new();
    for r in window {
        series.entry((r.episode, r.switch)).or_default().push(r);
    }
    let mut changes = 0u64;
    let mut pairs = 0u64;
    let mut returns = Vec::with_capacity(series.len());
    for s in series.values_mut() {
        s.sort_by_key(|r| r.tick);
        for w in s.windows(2) {
            pairs += 1;
            if w[0].executed_action != w[1].executed_action {
                changes += 1;
            }
        }
        let rewards: Vec<f64> = s.iter().map(|r| r.reward_scalar).collect();
        returns.push(discounted_return(&rewards, EVIDENCE_GAMMA));
    }
    b.churn = if pairs == 0 { 0.0 } else { changes as f64 / pairs as f64 };
    b.return_cvar = lower_tail_cvar(&returns, EVIDENCE_CVAR_ALPHA).unwrap_or(0.0);

    b.sync_false_positives =
        window.iter().filter(|r| r.sync_flag && !r.label.is_attack() && r.executed_action.is_positive()).count() as u64;

    for a in Action::ALL {
        let sampled = window.iter().filter(|r| r.sampled_action == a).count();
        if sampled > 0 {
            let masked = window.iter().filter(|r| r.sampled_action == a && r.masked()).count();
            b.mask_frequency.insert(a, masked as f64 / sampled as f64);
        }
    }
    let heavy: Vec<&TraceRecord> = window.iter().filter(|r| r.executed_action.is_controller_heavy()).collect();
    b.heavy_actions = heavy.len() as u64;
    b.heavy_backlog_peak = heavy.iter().map(|r| r.backlog).max().unwrap_or(0);
    b.regimes = window.iter().map(|r| r.label.as_str().to_string()).collect();
    b
}
