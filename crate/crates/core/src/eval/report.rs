//! Aggregated evaluation report over a set of episodes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::metrics::{disruption_score, is_catastrophic, percentile, percentiles, Confusion};
use crate::safety::Patches;
use crate::sim::TraceRecord;

/// Number of points in each empirical CDF.
pub const CDF_POINTS: usize = 21;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Summary::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Summary {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        }
    }
}

/// Per-episode figures kept for CSV export and paired comparisons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub macro_f1: f64,
    pub worst_agent_f1: f64,
    pub rtt_p95: f64,
    pub backlog_peak: u64,
    pub backlog_mean: f64,
    pub flowmods: u64,
    pub disruption: f64,
    pub catastrophic: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub episodes: usize,
    /// Macro-F1 pooled over every record.
    pub macro_f1: f64,
    pub f1_per_episode: Summary,
    /// Macro-F1 of each switch, pooled over episodes.
    pub f1_per_agent: Vec<f64>,
    pub worst_agent_f1: f64,
    pub rtt_p10: f64,
    pub rtt_p50: f64,
    pub rtt_p90: f64,
    pub rtt_p95: f64,
    /// `p90 − p10` of RTT.
    pub rtt_idr: f64,
    pub disruption_per_episode: Summary,
    pub flowmods_per_episode: Summary,
    pub backlog_mean: f64,
    /// Mean over episodes of the per-episode backlog peak.
    pub backlog_peak_mean: f64,
    pub backlog_peak_max: u64,
    pub catastrophic_fraction: f64,
    /// `(f1, P[episode F1 ≤ f1])` over episodes.
    pub f1_cdf: Vec<(f64, f64)>,
    /// `(rtt, P[RTT ≤ rtt])` over records.
    pub rtt_cdf: Vec<(f64, f64)>,
    pub per_episode: Vec<EpisodeMetrics>,
}

fn cdf(values: &[f64]) -> Vec<(f64, f64)> {
    if values.is_empty() {
        return Vec::new();
    }
    let qs: Vec<f64> = (0..CDF_POINTS).map(|k| 100.0 * k as f64 / (CDF_POINTS - 1) as f64).collect();
    percentiles(values, &qs).into_iter().zip(qs).map(|(v, q)| (v, q / 100.0)).collect()
}

fn episode_metrics(episode: u64, records: &[&TraceRecord], patches: &Patches) -> EpisodeMetrics {
    let mut by_tick = BTreeMap::new();
    let mut per_switch: BTreeMap<usize, Confusion> = BTreeMap::new();
    for r in records {
        by_tick.insert(r.tick, r.backlog);
        per_switch.entry(r.switch).or_default().merge(&Confusion::from_trace([*r]));
    }
    let series: Vec<u64> = by_tick.into_values().collect();
    let rtts: Vec<f64> = records.iter().map(|r| r.rtt).collect();
    let owned: Vec<TraceRecord> = records.iter().map(|r| (*r).clone()).collect();
    EpisodeMetrics {
        episode,
        macro_f1: Confusion::from_trace(records.iter().copied()).macro_f1(),
        worst_agent_f1: per_switch.values().map(Confusion::macro_f1).fold(f64::INFINITY, f64::min),
        rtt_p95: percentile(&rtts, 95.0),
        backlog_peak: series.iter().copied().max().unwrap_or(0),
        backlog_mean: series.iter().sum::<u64>() as f64 / series.len().max(1) as f64,
        flowmods: records.iter().map(|r| r.flowmods_submitted).sum(),
        disruption: disruption_score(&owned, patches),
        catastrophic: is_catastrophic(&series),
    }
}

impl MetricReport {
    /// Builds the report from episode traces; `patches` prices disruption.
    pub fn from_episodes(episodes: &[Vec<TraceRecord>], patches: &Patches) -> Self {
        let mut all = Confusion::default();
        let mut per_agent: BTreeMap<usize, Confusion> = BTreeMap::new();
        let mut rtts = Vec::new();
        let mut per_episode = Vec::new();
        let mut backlog_total = 0.0;
        let mut ticks = 0usize;
        for (k, tr) in episodes.iter().enumerate() {
            for r in tr {
                all.merge(&Confusion::from_trace([r]));
                per_agent.entry(r.switch).or_default().merge(&Confusion::from_trace([r]));
                rtts.push(r.rtt);
            }
            let refs: Vec<&TraceRecord> = tr.iter().collect();
            let em = episode_metrics(tr.first().map_or(k as u64, |r| r.episode), &refs, patches);
            let n_ticks = tr.iter().map(|r| r.tick).collect::<std::collections::BTreeSet<_>>().len();
            backlog_total += em.backlog_mean * n_ticks as f64;
            ticks += n_ticks;
            per_episode.push(em);
        }
        let f1s: Vec<f64> = per_episode.iter().map(|e| e.macro_f1).collect();
        let f1_per_agent: Vec<f64> = per_agent.values().map(Confusion::macro_f1).collect();
        let p = percentiles(&rtts, &[10.0, 50.0, 90.0, 95.0]);
        let n = per_episode.len().max(1) as f64;
        MetricReport {
            episodes: per_episode.len(),
            macro_f1: all.macro_f1(),
            f1_per_episode: Summary::of(&f1s),
            worst_agent_f1: f1_per_agent.iter().copied().fold(f64::INFINITY, f64::min).min(1.0),
            f1_per_agent,
            rtt_p10: p[0],
            rtt_p50: p[1],
            rtt_p90: p[2],
            rtt_p95: p[3],
            rtt_idr: p[2] - p[0],
            disruption_per_episode: Summary::of(&per_episode.iter().map(|e| e.disruption).collect::<Vec<_>>()),
            flowmods_per_episode: Summary::of(&per_episode.iter().map(|e| e.flowmods as f64).collect::<Vec<_>>()),
            backlog_mean: if ticks == 0 { 0.0 } else { backlog_total / ticks as f64 },
            backlog_peak_mean: per_episode.iter().map(|e| e.backlog_peak as f64).sum::<f64>() / n,
            backlog_peak_max: per_episode.iter().map(|e| e.backlog_peak).max().unwrap_or(0),
            catastrophic_fraction: per_episode.iter().filter(|e| e.catastrophic).count() as f64 / n,
            f1_cdf: cdf(&f1s),
            rtt_cdf: cdf(&rtts),
            per_episode,
        }
    }
}
