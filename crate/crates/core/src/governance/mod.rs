//! Slow-timescale governance: evidence, role backends, delta compilation,
//! red-team campaigns, paired gating and the audit trail.

mod backend;
mod evidence;
mod gate;
mod reflect;
mod roles;

pub use backend::{
    parse_structured, query, Backend, BackendError, Backends, Exchange, HttpBackend, Role, TextBackend, API_KEY_ENV,
    RETRIES,
};
pub use evidence::{summarize_trace, EvidenceBundle, EVIDENCE_CVAR_ALPHA, EVIDENCE_GAMMA};
pub use gate::{
    evaluate_policy, gate, hard_safety, metric_vector, non_regression, EvalError, GateError, GateReport, MetricDelta,
    MetricVector, Tolerances,
};
pub use reflect::{
    append_audit, read_audit, reflect_and_validate, AuditRecord, Decision, GovernanceConfig, Governor, RoundOutcome,
};
pub use roles::{
    classes_for, compile, critic, deterministic_compile, deterministic_critic, deterministic_red_team,
    heavy_mask_rules, judge, normalize_delta, proposals, red_team, CampaignSet, Diagnosis, FailureMode, Finding,
    JudgeVerdict, Proposal, RedTeamScope, CHURN_FLOWMODS_PER_TICK, CTRL_WEIGHT_CEILING, HINT_TRUST_CEILING,
};
