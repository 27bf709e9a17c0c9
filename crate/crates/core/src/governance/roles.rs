//! Critic, compiler, red team and judge with deterministic defaults.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::backend::{parse_structured, query, Backend, BackendError, Exchange, Role};
use super::evidence::EvidenceBundle;
use crate::campaigns::{CampaignClass, CampaignSpec, MILD_INTENSITY, SATURATING_INTENSITY};
use crate::safety::constitution::{BACKLOG_CAP, FLOW_PRESSURE_CAP};
use crate::safety::{
    Action, Atom, Comparator, MaskEdit, MaskRule, PolicyConstitution, PolicyDelta, PredicateVar, RuleMode, RuleOrigin,
};
use crate::util::{canonical_json, rng_for};

/// Ceiling the default compiler raises the control-penalty weight to.
pub const CTRL_WEIGHT_CEILING: f64 = 0.7;
pub const CTRL_WEIGHT_STEP: f64 = 0.1;
pub const HINT_TRUST_CEILING: f64 = 0.9;
pub const HINT_TRUST_STEP: f64 = 0.05;
pub const FLOWMOD_THROTTLE_FLOOR: u32 = 4;
pub const HEAVY_CAP_FLOOR: u32 = 1;
/// FlowMods per tick above which the critic reports a churn burst.
pub const CHURN_FLOWMODS_PER_TICK: f64 = 3.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    ControllerSaturation,
    RuleChurnBurst,
    FalseDisruptionOnBenignSync,
    DelayedActuationCascade,
    TailRiskInflation,
}

/// A raw remedy; `kind` is free text until the compiler maps it onto the
/// closed edit vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub kind: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl Proposal {
    pub fn new(kind: &str) -> Self {
        Proposal { kind: kind.to_string(), note: String::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Finding {
    pub failure_mode: FailureMode,
    /// Evidence bundle fields the finding relies on.
    pub evidence: Vec<String>,
    pub proposed_edits: Vec<Proposal>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnosis {
    pub findings: Vec<Finding>,
}

/// Closed proposal vocabulary understood by the default compiler.
pub mod proposals {
    pub const TIGHTEN_HEAVY_MASK: &str = "tighten_heavy_mask";
    pub const RELAX_HEAVY_MASK: &str = "relax_heavy_mask";
    pub const RAISE_CTRL_WEIGHT: &str = "raise_ctrl_weight";
    pub const RAISE_HINT_TRUST: &str = "raise_hint_trust";
    pub const LOWER_FLOWMOD_THROTTLE: &str = "lower_flowmod_throttle";
    pub const LOWER_HEAVY_CAP: &str = "lower_heavy_cap";
}

use proposals::*;

fn finding(mode: FailureMode, evidence: &[&str], edits: &[&str]) -> Finding {
    Finding {
        failure_mode: mode,
        evidence: evidence.iter().map(|s| s.to_string()).collect(),
        proposed_edits: edits.iter().map(|k| Proposal::new(k)).collect(),
    }
}

/// Threshold rules over the evidence bundle.
pub fn deterministic_critic(pi: &PolicyConstitution, e: &EvidenceBundle) -> Diagnosis {
    let mut findings = Vec::new();
    if e.empty {
        return Diagnosis { findings };
    }
    let cap = pi.threshold(BACKLOG_CAP).unwrap_or(40.0);
    if e.backlog_peak as f64 > cap {
        findings.push(finding(
            FailureMode::ControllerSaturation,
            &["backlog_peak"],
            &[TIGHTEN_HEAVY_MASK, RAISE_CTRL_WEIGHT],
        ));
    }
    if e.heavy_actions > 0 && e.heavy_backlog_peak as f64 > cap {
        findings.push(finding(
            FailureMode::DelayedActuationCascade,
            &["heavy_backlog_peak", "heavy_actions"],
            &[TIGHTEN_HEAVY_MASK, LOWER_HEAVY_CAP],
        ));
    }
    if e.flowmods_per_tick > CHURN_FLOWMODS_PER_TICK {
        findings.push(finding(FailureMode::RuleChurnBurst, &["flowmods_per_tick", "churn"], &[LOWER_FLOWMOD_THROTTLE]));
    }
    if e.sync_false_positives > 0 {
        findings.push(finding(
            FailureMode::FalseDisruptionOnBenignSync,
            &["sync_false_positives"],
            &[RAISE_HINT_TRUST],
        ));
    }
    if e.catastrophic_episodes > 0 {
        findings.push(finding(
            FailureMode::TailRiskInflation,
            &["catastrophic_episodes", "return_cvar"],
            &[RAISE_CTRL_WEIGHT],
        ));
    }
    Diagnosis { findings }
}

/// Runs the critic; an external backend that never yields a valid document
/// produces an empty diagnosis.
pub fn critic(
    pi: &PolicyConstitution,
    e: &EvidenceBundle,
    backend: &Backend,
    log: &mut Vec<Exchange>,
    incidents: &mut Vec<String>,
) -> Diagnosis {
    match backend {
        Backend::Deterministic => deterministic_critic(pi, e),
        Backend::External(b) => {
            let doc = canonical_json(&json!({ "policy": pi, "evidence": e }));
            query::<Diagnosis>(b.as_ref(), Role::Critic, &doc, log).unwrap_or_else(|err| {
                incidents.push(format!("critic: {err}"));
                Diagnosis::default()
            })
        }
    }
}

/// Forbid rules that stop controller-heavy actions once the backlog or the
/// flow-table pressure passes its threshold.
pub fn heavy_mask_rules() -> Vec<MaskRule> {
    let mut out = Vec::new();
    for a in [Action::DropFlow, Action::Quarantine] {
        out.push(MaskRule::forbid(
            a,
            vec![Atom::threshold(PredicateVar::Backlog, Comparator::Gt, BACKLOG_CAP)],
            RuleOrigin::Governance,
        ));
        out.push(MaskRule::forbid(
            a,
            vec![Atom::threshold(PredicateVar::FlowPressure, Comparator::Gt, FLOW_PRESSURE_CAP)],
            RuleOrigin::Governance,
        ));
    }
    out
}

/// Maps proposals onto concrete edits, skipping edits `pi` already satisfies,
/// and deduplicates rules by canonical id. Unknown kinds are dropped.
pub fn deterministic_compile(d: &Diagnosis, pi: &PolicyConstitution) -> PolicyDelta {
    let mut delta = PolicyDelta::default();
    let mut seen_rules = BTreeSet::new();
    let mut seen_kinds = BTreeSet::new();
    let mut modes = BTreeSet::new();
    for f in &d.findings {
        for p in &f.proposed_edits {
            if !seen_kinds.insert(p.kind.clone()) {
                continue;
            }
            modes.insert(f.failure_mode);
            match p.kind.as_str() {
                TIGHTEN_HEAVY_MASK => {
                    for rule in heavy_mask_rules() {
                        if !pi.has_rule(&rule.canonical_id) && seen_rules.insert(rule.canonical_id.clone()) {
                            delta.mask_rule_edits.push(MaskEdit::Add { rule });
                        }
                    }
                }
                RELAX_HEAVY_MASK => {
                    for rule in pi.governance_rules() {
                        if rule.mode == RuleMode::Forbid && rule.target.is_controller_heavy() {
                            delta.mask_rule_edits.push(MaskEdit::Remove { canonical_id: rule.canonical_id.clone() });
                        }
                    }
                }
                RAISE_CTRL_WEIGHT => {
                    let step = CTRL_WEIGHT_STEP.min(CTRL_WEIGHT_CEILING - pi.reward_weights.ctrl);
                    if step > 1e-12 {
                        delta.reward_patch.weight_deltas.ctrl = step;
                    }
                }
                RAISE_HINT_TRUST => {
                    let next = (pi.patches.hint_trust + HINT_TRUST_STEP).min(HINT_TRUST_CEILING);
                    if next > pi.patches.hint_trust + 1e-12 {
                        delta.reward_patch.patch_edits.hint_trust = Some(next);
                    }
                }
                LOWER_FLOWMOD_THROTTLE => {
                    let t = pi.patches.flowmod_throttle;
                    if t > FLOWMOD_THROTTLE_FLOOR {
                        delta.reward_patch.patch_edits.flowmod_throttle = Some(t - 1);
                    }
                }
                LOWER_HEAVY_CAP => {
                    let c = pi.patches.heavy_action_cap;
                    if c > HEAVY_CAP_FLOOR {
                        delta.reward_patch.patch_edits.heavy_action_cap = Some(c - 1);
                    }
                }
                other => tracing::warn!(kind = other, "dropping unknown proposal kind"),
            }
        }
    }
    if !delta.is_empty() {
        let names: Vec<String> = modes.iter().map(|m| canonical_json(m).trim_matches('"').to_string()).collect();
        delta.rationale = format!("remedies for {}", names.join(", "));
    }
    delta
}

/// Normalizes rules, drops duplicate and already-present additions, and
/// checks the result against the delta schema.
pub fn normalize_delta(mut delta: PolicyDelta, pi: &PolicyConstitution) -> Result<PolicyDelta, BackendError> {
    let mut seen = BTreeSet::new();
    delta.mask_rule_edits.retain_mut(|e| match e {
        MaskEdit::Add { rule } => {
            rule.origin = RuleOrigin::Governance;
            rule.normalize();
            !pi.has_rule(&rule.canonical_id) && seen.insert(rule.canonical_id.clone())
        }
        MaskEdit::Remove { canonical_id } => seen.insert(format!("-{canonical_id}")),
    });
    let text = serde_json::to_string(&delta).map_err(|e| BackendError::Malformed(e.to_string()))?;
    parse_structured::<PolicyDelta>(Role::Compiler, &text)
}

/// Compiles a diagnosis into a schema-valid delta; never fails, returning an
/// empty delta when nothing valid can be produced.
pub fn compile(
    d: &Diagnosis,
    pi: &PolicyConstitution,
    evidence_digest: &str,
    backend: &Backend,
    log: &mut Vec<Exchange>,
    incidents: &mut Vec<String>,
) -> PolicyDelta {
    let raw = match backend {
        Backend::Deterministic => deterministic_compile(d, pi),
        Backend::External(b) => {
            let doc = canonical_json(&json!({ "policy": pi, "diagnosis": d }));
            match query::<PolicyDelta>(b.as_ref(), Role::Compiler, &doc, log) {
                Ok(delta) => delta,
                Err(err) => {
                    incidents.push(format!("compiler: {err}"));
                    return PolicyDelta::default();
                }
            }
        }
    };
    match normalize_delta(raw, pi) {
        Ok(mut delta) => {
            if !delta.is_empty() {
                delta.provenance.roles = vec!["critic".into(), "compiler".into()];
                delta.provenance.evidence_digest = evidence_digest.to_string();
            }
            delta
        }
        Err(err) => {
            incidents.push(format!("compiler: {err}"));
            PolicyDelta::default()
        }
    }
}

/// Paired stress campaigns: both policies run every campaign on every seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignSet {
    pub campaigns: Vec<CampaignSpec>,
    pub seeds: Vec<u64>,
    pub paired: bool,
    pub n_switches: usize,
    pub horizon: u64,
}

impl CampaignSet {
    pub fn validate(&self) -> Result<(), String> {
        if !self.paired {
            return Err("campaign set must be paired".into());
        }
        if self.campaigns.is_empty() || self.seeds.is_empty() {
            return Err("campaign set needs campaigns and seeds".into());
        }
        for c in &self.campaigns {
            c.validate(self.n_switches).map_err(|e| e.to_string())?;
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        crate::util::digest_of(self)
    }
}

/// Where red-team campaigns run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RedTeamScope {
    pub n_switches: usize,
    pub horizon: u64,
    pub seeds: Vec<u64>,
}

/// Campaign classes that stress each failure mode.
pub fn classes_for(mode: FailureMode) -> &'static [(CampaignClass, f64)] {
    match mode {
        FailureMode::ControllerSaturation | FailureMode::DelayedActuationCascade => {
            &[(CampaignClass::HighVolumeBurst, SATURATING_INTENSITY)]
        }
        FailureMode::RuleChurnBurst => &[(CampaignClass::DistributedLowRateScan, 0.8)],
        FailureMode::FalseDisruptionOnBenignSync => &[(CampaignClass::SynchronizedMimicry, 0.8)],
        FailureMode::TailRiskInflation => &[(CampaignClass::MultiSwitchCorrelated, SATURATING_INTENSITY)],
    }
}

pub fn deterministic_red_team(d: &Diagnosis, e: &EvidenceBundle, scope: &RedTeamScope) -> CampaignSet {
    let mut rng = rng_for(&[crate::util::mix_seed(&[e.window]), e.records, 0x4ED]);
    let mut wanted: Vec<(CampaignClass, f64)> = Vec::new();
    for f in &d.findings {
        for &(c, i) in classes_for(f.failure_mode) {
            if !wanted.iter().any(|w| w.0 == c) {
                wanted.push((c, i));
            }
        }
    }
    if wanted.is_empty() {
        wanted = vec![(CampaignClass::HighVolumeBurst, 0.6), (CampaignClass::DistributedLowRateScan, 0.5)];
    } else {
        let rest: Vec<CampaignClass> =
            CampaignClass::ATTACKS.into_iter().filter(|c| !wanted.iter().any(|w| w.0 == *c)).collect();
        if let Some(c) = rest.choose(&mut rng) {
            wanted.push((*c, rng.gen_range(MILD_INTENSITY..=SATURATING_INTENSITY)));
        }
    }
    wanted.push((CampaignClass::BenignSyncBurst, 0.8));
    let campaigns = wanted
        .iter()
        .enumerate()
        .map(|(k, &(c, i))| {
            CampaignSpec::randomized(
                c,
                i,
                scope.horizon,
                scope.n_switches,
                crate::util::mix_seed(&[e.window, k as u64]),
            )
        })
        .collect();
    CampaignSet {
        campaigns,
        seeds: scope.seeds.clone(),
        paired: true,
        n_switches: scope.n_switches,
        horizon: scope.horizon,
    }
}

/// Red team with deterministic fallback: an external set that fails to
/// parse or validate is replaced by the default one.
pub fn red_team(
    d: &Diagnosis,
    e: &EvidenceBundle,
    scope: &RedTeamScope,
    backend: &Backend,
    log: &mut Vec<Exchange>,
    incidents: &mut Vec<String>,
) -> CampaignSet {
    if let Backend::External(b) = backend {
        let doc = canonical_json(&json!({ "diagnosis": d, "evidence": e, "scope": scope }));
        match query::<CampaignSet>(b.as_ref(), Role::RedTeam, &doc, log) {
            Ok(mut set) => {
                set.seeds = scope.seeds.clone();
                set.n_switches = scope.n_switches;
                set.horizon = scope.horizon;
                if !set.campaigns.iter().any(|c| c.class == CampaignClass::BenignSyncBurst) {
                    set.campaigns.push(CampaignSpec::randomized(
                        CampaignClass::BenignSyncBurst,
                        0.8,
                        scope.horizon,
                        scope.n_switches,
                        e.window,
                    ));
                }
                match set.validate() {
                    Ok(()) => return set,
                    Err(err) => incidents.push(format!("red_team: {err}")),
                }
            }
            Err(err) => incidents.push(format!("red_team: {err}")),
        }
    }
    deterministic_red_team(d, e, scope)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeVerdict {
    pub approve: bool,
    pub rationale: String,
}

/// The judge can only confirm a candidate whose flags both hold; any
/// backend failure is a rejection.
pub fn judge(
    safe: bool,
    ok: bool,
    summary: &serde_json::Value,
    backend: &Backend,
    log: &mut Vec<Exchange>,
    incidents: &mut Vec<String>,
) -> JudgeVerdict {
    let default = JudgeVerdict {
        approve: safe && ok,
        rationale: match (safe, ok) {
            (true, true) => "hard safety and non-regression both hold".to_string(),
            (false, true) => "hard safety failed".to_string(),
            (true, false) => "non-regression failed".to_string(),
            (false, false) => "hard safety and non-regression both failed".to_string(),
        },
    };
    match backend {
        Backend::Deterministic => default,
        Backend::External(b) => {
            let doc = canonical_json(&json!({ "hard_safety": safe, "non_regression": ok, "summary": summary }));
            match query::<JudgeVerdict>(b.as_ref(), Role::Judge, &doc, log) {
                Ok(v) => JudgeVerdict { approve: v.approve && safe && ok, rationale: v.rationale },
                Err(err) => {
                    incidents.push(format!("judge: {err}"));
                    JudgeVerdict { approve: false, rationale: format!("judge unavailable: {err}") }
                }
            }
        }
    }
}
