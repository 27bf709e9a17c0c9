//! The reflection round: evidence, critic, compiler, merge, red team, paired
//! evaluation, gate and audit. Every failure returns the incumbent policy.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::backend::{Backends, Exchange};
use super::evidence::{summarize_trace, EvidenceBundle};
use super::gate::{evaluate_policy, gate, GateReport, MetricVector, Tolerances};
use super::roles::{compile, critic, red_team, CampaignSet, Diagnosis, RedTeamScope};
use crate::rl::{ReflectionContext, ReflectionHook, SwitchPolicy};
use crate::safety::{merge, PolicyConstitution, PolicyDelta, PolicyStore};
use crate::sim::{SimConfig, TraceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GovernanceConfig {
    pub tolerances: Tolerances,
    /// Seeds shared by both policies in every gating comparison.
    pub eval_seeds: Vec<u64>,
    pub eval_horizon: u64,
    pub sim: SimConfig,
}

impl Default for GovernanceConfig {
    fn default() -> Self {
        GovernanceConfig {
            tolerances: Tolerances::default(),
            eval_seeds: vec![11, 12, 13, 14, 15],
            eval_horizon: 300,
            sim: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    Rejected,
    /// Nothing to change: empty evidence or an empty delta.
    NoOp,
    /// A stage failed; the incumbent stays.
    Failed,
}

/// One reflection round, as written to the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub round: u64,
    pub decision: Decision,
    pub pi_k: String,
    pub pi_next: String,
    pub evidence_digest: String,
    pub evidence: EvidenceBundle,
    pub diagnosis: Diagnosis,
    pub delta: Option<PolicyDelta>,
    pub pi_cand: Option<String>,
    pub campaigns: Option<CampaignSet>,
    pub m_k: Option<MetricVector>,
    pub m_cand: Option<MetricVector>,
    pub gate: Option<GateReport>,
    pub exchanges: Vec<Exchange>,
    pub incidents: Vec<String>,
}

impl AuditRecord {
    /// Counts as an accepted delta only if it changed the policy.
    pub fn accepted(&self) -> bool {
        self.decision == Decision::Accepted
    }
}

pub struct RoundOutcome {
    pub pi: PolicyConstitution,
    pub record: AuditRecord,
}

/// Runs one round. The store, when given, receives the accepted successor
/// before it is returned; a store failure keeps the incumbent.
#[allow(clippy::too_many_arguments)]
pub fn reflect_and_validate(
    pi_k: &PolicyConstitution,
    round: u64,
    window: &[TraceRecord],
    policy: &dyn SwitchPolicy,
    n_switches: usize,
    backends: &Backends,
    cfg: &GovernanceConfig,
    store: Option<&PolicyStore>,
) -> RoundOutcome {
    let evidence = summarize_trace(round, window);
    let mut rec = AuditRecord {
        round,
        decision: Decision::NoOp,
        pi_k: pi_k.digest(),
        pi_next: pi_k.digest(),
        evidence_digest: evidence.digest(),
        evidence: evidence.clone(),
        diagnosis: Diagnosis::default(),
        delta: None,
        pi_cand: None,
        campaigns: None,
        m_k: None,
        m_cand: None,
        gate: None,
        exchanges: Vec::new(),
        incidents: Vec::new(),
    };
    let keep = |rec: AuditRecord| RoundOutcome { pi: pi_k.clone(), record: rec };
    if evidence.empty {
        return keep(rec);
    }

    rec.diagnosis = critic(pi_k, &evidence, &backends.critic, &mut rec.exchanges, &mut rec.incidents);
    let delta =
        compile(&rec.diagnosis, pi_k, &rec.evidence_digest, &backends.compiler, &mut rec.exchanges, &mut rec.incidents);
    if delta.is_empty() {
        return keep(rec);
    }
    rec.delta = Some(delta.clone());

    let cand = match merge(pi_k, &delta) {
        Ok(c) => c,
        Err(e) => {
            rec.incidents.push(format!("merge: {e}"));
            rec.decision = Decision::Failed;
            return keep(rec);
        }
    };
    rec.pi_cand = Some(cand.digest());

    let scope = RedTeamScope { n_switches, horizon: cfg.eval_horizon, seeds: cfg.eval_seeds.clone() };
    let set = red_team(&rec.diagnosis, &evidence, &scope, &backends.red_team, &mut rec.exchanges, &mut rec.incidents);
    rec.campaigns = Some(set.clone());

    let (m_k, m_cand) =
        match (evaluate_policy(pi_k, &set, policy, &cfg.sim), evaluate_policy(&cand, &set, policy, &cfg.sim)) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(e), _) | (_, Err(e)) => {
                rec.incidents.push(format!("evaluate: {e}"));
                rec.decision = Decision::Failed;
                return keep(rec);
            }
        };
    rec.m_k = Some(m_k.clone());
    rec.m_cand = Some(m_cand.clone());

    let report = match gate(
        pi_k,
        &cand,
        &m_k,
        &m_cand,
        &cfg.tolerances,
        &backends.judge,
        &mut rec.exchanges,
        &mut rec.incidents,
    ) {
        Ok(r) => r,
        Err(e) => {
            rec.incidents.push(format!("gate: {e}"));
            rec.decision = Decision::Failed;
            return keep(rec);
        }
    };
    let accepted = report.accepted();
    rec.gate = Some(report);
    if !accepted {
        rec.decision = Decision::Rejected;
        return keep(rec);
    }
    if let Some(store) = store {
        if let Err(e) = store.append(&cand, &delta) {
            rec.incidents.push(format!("store: {e}"));
            rec.decision = Decision::Failed;
            return keep(rec);
        }
    }
    rec.decision = Decision::Accepted;
    rec.pi_next = cand.digest();
    RoundOutcome { pi: cand, record: rec }
}

pub fn append_audit(path: &Path, rec: &AuditRecord) -> std::io::Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_vec(rec)?;
    line.push(b'\n');
    f.write_all(&line)
}

pub fn read_audit(path: &Path) -> std::io::Result<Vec<AuditRecord>> {
    std::fs::read_to_string(path)?
        .lines()
        .map(|l| serde_json::from_str(l).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
        .collect()
}

/// Reflection hook for the fast loop: one round per checkpoint.
pub struct Governor {
    pub backends: Backends,
    pub config: GovernanceConfig,
    pub n_switches: usize,
    pub store: Option<PolicyStore>,
    pub audit_path: Option<PathBuf>,
    pub rounds: Vec<AuditRecord>,
}

impl Governor {
    pub fn new(backends: Backends, config: GovernanceConfig, n_switches: usize) -> Self {
        Governor { backends, config, n_switches, store: None, audit_path: None, rounds: Vec::new() }
    }

    pub fn with_store(mut self, store: PolicyStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_audit_log(mut self, path: PathBuf) -> Self {
        self.audit_path = Some(path);
        self
    }

    pub fn accepted_per_round(&self) -> Vec<u64> {
        self.rounds.iter().map(|r| u64::from(r.accepted())).collect()
    }
}

impl ReflectionHook for Governor {
    fn reflect(&mut self, ctx: ReflectionContext<'_>) -> Option<PolicyConstitution> {
        let round = self.rounds.len() as u64 + 1;
        let out = reflect_and_validate(
            ctx.pi,
            round,
            ctx.window,
            ctx.policy,
            self.n_switches,
            &self.backends,
            &self.config,
            self.store.as_ref(),
        );
        if let Some(path) = &self.audit_path {
            if let Err(e) = append_audit(path, &out.record) {
                tracing::error!(error = %e, "audit log write failed");
            }
        }
        let accepted = out.record.accepted();
        self.rounds.push(out.record);
        accepted.then_some(out.pi)
    }
}
