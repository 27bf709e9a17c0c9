//! Paired policy evaluation and the HardSafety / NonRegression gate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use super::backend::{Backend, Exchange};
use super::roles::{judge, CampaignSet};
use crate::campaigns::Scenario;
use crate::eval::metrics::{is_catastrophic, percentile, Confusion};
use crate::rl::{run_episode, Shield, SwitchPolicy};
use crate::safety::constitution::WEIGHT_DRIFT_LIMIT;
use crate::safety::PolicyConstitution;
use crate::sim::{Environment, SimConfig, TraceRecord};
use crate::util::mix_seed;

/// Slack absorbing float rounding in the inclusive tolerance comparisons.
const TOLERANCE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest admissible macro-F1 drop (absolute).
    pub f1: f64,
    /// Largest admissible RTT p95 increase in ms.
    pub rtt_ms: f64,
    /// Largest admissible backlog-peak increase, relative to the incumbent.
    pub ctrl_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { f1: 0.01, rtt_ms: 1.0, ctrl_rel: 0.05 }
    }
}

/// Metrics of one policy over a campaign set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricVector {
    pub f1: f64,
    pub rtt_p95: f64,
    /// Mean per-episode controller backlog peak.
    pub d_ctrl: f64,
    /// Mean FlowMod submissions per episode.
    pub flowmods: f64,
    /// PacketIn drops over controller arrivals.
    pub drop_rate: f64,
    pub episodes: u64,
    pub catastrophic_episodes: u64,
    /// Digest of the campaigns and seeds the vector was measured on.
    pub pairing: String,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("campaign set is invalid: {0}")]
    Campaigns(String),
    #[error("simulation: {0}")]
    Sim(String),
}

/// Aggregates per-episode traces into a metric vector.
pub fn metric_vector(episodes: &[Vec<TraceRecord>], pairing: String) -> MetricVector {
    let mut conf = Confusion::default();
    let mut rtts = Vec::new();
    let mut peaks = 0.0;
    let mut flowmods = 0.0;
    let mut drops = 0u64;
    let mut arrivals = 0u64;
    let mut catastrophic = 0;
    for tr in episodes {
        conf.merge(&Confusion::from_trace(tr));
        rtts.extend(tr.iter().map(|r| r.rtt));
        let mut per_tick = std::collections::BTreeMap::new();
        for r in tr {
            per_tick.insert(r.tick, (r.backlog, r.packetin_drops));
        }
        let series: Vec<u64> = per_tick.values().map(|v| v.0).collect();
        peaks += series.iter().copied().max().unwrap_or(0) as f64;
        drops += per_tick.values().map(|v| v.1).sum::<u64>();
        arrivals += tr.iter().map(|r| r.packetins + r.flowmods_submitted).sum::<u64>();
        flowmods += tr.iter().map(|r| r.flowmods_submitted).sum::<u64>() as f64;
        if is_catastrophic(&series) {
            catastrophic += 1;
        }
    }
    let n = episodes.len().max(1) as f64;
    MetricVector {
        f1: conf.macro_f1(),
        rtt_p95: percentile(&rtts, 95.0),
        d_ctrl: peaks / n,
        flowmods: flowmods / n,
        drop_rate: if arrivals == 0 { 0.0 } else { drops as f64 / arrivals as f64 },
        episodes: episodes.len() as u64,
        catastrophic_episodes: catastrophic,
        pairing,
    }
}

/// Runs every campaign on every seed with frozen controllers under `pi`.
/// Deterministic in its inputs; campaign errors surface before any run.
pub fn evaluate_policy(
    pi: &PolicyConstitution,
    set: &CampaignSet,
    policy: &dyn SwitchPolicy,
    sim: &SimConfig,
) -> Result<MetricVector, EvalError> {
    set.validate().map_err(EvalError::Campaigns)?;
    let cfg = SimConfig { n_switches: set.n_switches, ..sim.clone() };
    cfg.validate().map_err(|e| EvalError::Sim(e.to_string()))?;
    let jobs: Vec<(usize, u64)> =
        (0..set.campaigns.len()).flat_map(|c| set.seeds.iter().map(move |s| (c, *s))).collect();
    let traces: Result<Vec<Vec<TraceRecord>>, EvalError> = jobs
        .par_iter()
        .map(|&(c, seed)| {
            let scenario = Scenario::with_campaigns(set.n_switches, set.horizon, seed, vec![set.campaigns[c].clone()]);
            let env_seed = mix_seed(&[seed, c as u64, 0x6A7E]);
            let mut env =
                Environment::new(cfg.clone(), scenario, env_seed).map_err(|e| EvalError::Sim(e.to_string()))?;
            run_episode(&mut env, pi, Shield::Filtered, policy, c as u64).map_err(|e| EvalError::Sim(e.to_string()))
        })
        .collect();
    Ok(metric_vector(&traces?, set.digest()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub f1: f64,
    pub rtt_p95: f64,
    pub d_ctrl: f64,
    pub flowmods: f64,
    pub drop_rate: f64,
}

impl MetricDelta {
    pub fn between(base: &MetricVector, cand: &MetricVector) -> Self {
        MetricDelta {
            f1: cand.f1 - base.f1,
            rtt_p95: cand.rtt_p95 - base.rtt_p95,
            d_ctrl: cand.d_ctrl - base.d_ctrl,
            flowmods: cand.flowmods - base.flowmods,
            drop_rate: cand.drop_rate - base.drop_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateReport {
    pub m_k: MetricVector,
    pub m_cand: MetricVector,
    pub delta: MetricDelta,
    pub hard_safety: bool,
    pub non_regression: bool,
    pub judge_decision: bool,
    pub violations: Vec<String>,
    pub rationale: String,
    pub tolerances: Tolerances,
}

impl GateReport {
    /// Accepted exactly when the judge approves, which requires both flags.
    pub fn accepted(&self) -> bool {
        self.judge_decision
    }

    pub fn conjunction_holds(&self) -> bool {
        !self.judge_decision || (self.hard_safety && self.non_regression)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GateError {
    #[error("metric vectors come from different campaigns or seeds")]
    Unpaired,
}

/// Structural and catastrophe checks on the candidate.
pub fn hard_safety(pi_k: &PolicyConstitution, pi_cand: &PolicyConstitution, m_cand: &MetricVector) -> Vec<String> {
    let mut v = pi_cand.structural_violations();
    let drift = pi_k.reward_weights.max_abs_diff(&pi_cand.reward_weights);
    if drift > WEIGHT_DRIFT_LIMIT + TOLERANCE_SLACK {
        v.push(format!("reward weight drift {drift} exceeds {WEIGHT_DRIFT_LIMIT}"));
    }
    if m_cand.catastrophic_episodes > 0 {
        v.push(format!("{} catastrophic-overload episodes under the candidate", m_cand.catastrophic_episodes));
    }
    v
}

/// Inclusive tolerance checks on the metric deltas.
pub fn non_regression(m_k: &MetricVector, m_cand: &MetricVector, tol: &Tolerances) -> Vec<String> {
    let d = MetricDelta::between(m_k, m_cand);
    let mut v = Vec::new();
    if d.f1 < -tol.f1 - TOLERANCE_SLACK {
        v.push(format!("macro-F1 fell by {:.4}", -d.f1));
    }
    if d.rtt_p95 > tol.rtt_ms + TOLERANCE_SLACK {
        v.push(format!("RTT p95 rose by {:.3} ms", d.rtt_p95));
    }
    if d.d_ctrl > tol.ctrl_rel * m_k.d_ctrl + TOLERANCE_SLACK {
        v.push(format!("backlog peak rose by {:.2}", d.d_ctrl));
    }
    v
}

#[allow(clippy::too_many_arguments)]
pub fn gate(
    pi_k: &PolicyConstitution,
    pi_cand: &PolicyConstitution,
    m_k: &MetricVector,
    m_cand: &MetricVector,
    tol: &Tolerances,
    judge_backend: &Backend,
    log: &mut Vec<Exchange>,
    incidents: &mut Vec<String>,
) -> Result<GateReport, GateError> {
    if m_k.pairing != m_cand.pairing || m_k.episodes != m_cand.episodes {
        return Err(GateError::Unpaired);
    }
    let safety = hard_safety(pi_k, pi_cand, m_cand);
    let regress = non_regression(m_k, m_cand, tol);
    let (safe, ok) = (safety.is_empty(), regress.is_empty());
    let delta = MetricDelta::between(m_k, m_cand);
    let verdict =
        judge(safe, ok, &json!({ "delta": delta, "violations": [&safety, &regress] }), judge_backend, log, incidents);
    let report = GateReport {
        m_k: m_k.clone(),
        m_cand: m_cand.clone(),
        delta,
        hard_safety: safe,
        non_regression: ok,
        judge_decision: verdict.approve && safe && ok,
        violations: safety.into_iter().chain(regress).collect(),
        rationale: verdict.rationale,
        tolerances: *tol,
    };
    assert!(report.conjunction_holds());
    Ok(report)
}
