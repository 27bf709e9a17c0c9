//! Role backends: the deterministic defaults and an external text-model
//! endpoint whose replies must parse against a versioned schema.

use std::sync::{Arc, OnceLock};
use std::time::Duration;

use jsonschema::JSONSchema;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::util::sha256_hex;

/// Extra attempts after the first for an external backend.
pub const RETRIES: usize = 2;
/// Environment variable holding the external endpoint's API key.
pub const API_KEY_ENV: &str = "REFLEXNET_LLM_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Critic,
    Compiler,
    RedTeam,
    Judge,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Critic => "critic",
            Role::Compiler => "compiler",
            Role::RedTeam => "red_team",
            Role::Judge => "judge",
        }
    }

    pub fn system_prompt(self) -> &'static str {
        match self {
            Role::Critic => {
                "You review SDN-IoT defense telemetry. Reply with one JSON document matching the diagnosis \
                 schema: a list of findings, each naming a failure mode from the closed set, the evidence \
                 fields it relies on and proposed edits."
            }
            Role::Compiler => {
                "You translate a diagnosis into one JSON policy delta matching the delta schema. Use only mask \
                 rule edits, threshold updates, reward weight deltas and patch edits. Never mention model weights."
            }
            Role::RedTeam => {
                "You design stress campaigns for an SDN-IoT controller. Reply with one JSON campaign set matching \
                 the schema; the set is paired and must include a benign synchronized burst."
            }
            Role::Judge => {
                "You receive gate flags and metric deltas for a candidate policy. Reply with one JSON verdict \
                 {approve, rationale}. You may only confirm a candidate whose flags both hold."
            }
        }
    }

    pub fn schema(self) -> &'static JSONSchema {
        static SCHEMAS: OnceLock<[JSONSchema; 4]> = OnceLock::new();
        let all = SCHEMAS.get_or_init(|| {
            let compile = |src: &str| {
                let v: Value = serde_json::from_str(src).expect("bundled schema is JSON");
                JSONSchema::compile(&v).expect("bundled schema compiles")
            };
            [
                compile(include_str!("../../schemas/diagnosis.schema.json")),
                compile(include_str!("../../schemas/policy_delta.schema.json")),
                compile(include_str!("../../schemas/campaign_set.schema.json")),
                compile(include_str!("../../schemas/judge.schema.json")),
            ]
        });
        &all[self as usize]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("missing credentials in ${0}")]
    Credentials(String),
    #[error("malformed reply: {0}")]
    Malformed(String),
    #[error("schema violation: {0}")]
    Schema(String),
}

/// A text endpoint: one system prompt and one document in, one document out.
pub trait TextBackend: Send + Sync {
    fn complete(&self, role: Role, system: &str, document: &str) -> Result<String, BackendError>;
}

/// Chat-completion endpoint over HTTP with fixed decoding parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpBackend {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    API_KEY_ENV.to_string()
}

fn default_timeout() -> u64 {
    60
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>) -> Self {
        HttpBackend {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key_env: default_key_env(),
            timeout_secs: default_timeout(),
        }
    }

    pub fn request_body(&self, system: &str, document: &str) -> Value {
        json!({
            "model": self.model,
            "temperature": 0,
            "top_p": 1,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": document},
            ],
            "response_format": {"type": "json_object"},
        })
    }
}

impl TextBackend for HttpBackend {
    fn complete(&self, _role: Role, system: &str, document: &str) -> Result<String, BackendError> {
        let key = std::env::var(&self.api_key_env).map_err(|_| BackendError::Credentials(self.api_key_env.clone()))?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_secs(self.timeout_secs)).build();
        let resp = agent
            .post(&self.endpoint)
            .set("Authorization", &format!("Bearer {key}"))
            .send_json(self.request_body(system, document))
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let body: Value = resp.into_json().map_err(|e| BackendError::Malformed(e.to_string()))?;
        body.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| BackendError::Malformed("no choices[0].message.content".to_string()))
    }
}

/// Which implementation serves a role.
#[derive(Clone, Default)]
pub enum Backend {
    #[default]
    Deterministic,
    External(Arc<dyn TextBackend>),
}

impl std::fmt::Debug for Backend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Backend::Deterministic => f.write_str("Deterministic"),
            Backend::External(_) => f.write_str("External"),
        }
    }
}

/// Backend per role.
#[derive(Debug, Clone, Default)]
pub struct Backends {
    pub critic: Backend,
    pub compiler: Backend,
    pub red_team: Backend,
    pub judge: Backend,
}

impl Backends {
    pub fn deterministic() -> Self {
        Backends::default()
    }

    /// Every role served by the same external endpoint.
    pub fn external(backend: Arc<dyn TextBackend>) -> Self {
        let b = Backend::External(backend);
        Backends { critic: b.clone(), compiler: b.clone(), red_team: b.clone(), judge: b }
    }
}

/// One request/response pair, kept as digests for the audit log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub role: Role,
    pub attempt: usize,
    pub request_digest: String,
    pub response_digest: Option<String>,
    pub error: Option<String>,
}

/// Parses `text` as JSON, validates it against the role schema and decodes it.
pub fn parse_structured<T: DeserializeOwned>(role: Role, text: &str) -> Result<T, BackendError> {
    let v: Value = serde_json::from_str(text.trim()).map_err(|e| BackendError::Malformed(e.to_string()))?;
    if let Err(errors) = role.schema().validate(&v) {
        let msg: Vec<String> = errors.map(|e| e.to_string()).collect();
        return Err(BackendError::Schema(msg.join("; ")));
    }
    serde_json::from_value(v).map_err(|e| BackendError::Schema(e.to_string()))
}

/// Queries an external backend up to `1 + RETRIES` times and returns the
/// first reply that parses, together with the exchange log.
pub fn query<T: DeserializeOwned>(
    backend: &dyn TextBackend,
    role: Role,
    document: &str,
    log: &mut Vec<Exchange>,
) -> Result<T, BackendError> {
    let system = role.system_prompt();
    let request_digest = sha256_hex(format!("{system}\n{document}").as_bytes());
    let mut last = BackendError::Malformed("no attempt made".to_string());
    for attempt in 0..=RETRIES {
        let reply = backend.complete(role, system, document);
        let parsed = reply.as_ref().map_err(Clone::clone).and_then(|t| parse_structured::<T>(role, t));
        log.push(Exchange {
            role,
            attempt,
            request_digest: request_digest.clone(),
            response_digest: reply.as_ref().ok().map(|t| sha256_hex(t.as_bytes())),
            error: parsed.as_ref().err().map(|e| e.to_string()),
        });
        match parsed {
            Ok(v) => return Ok(v),
            Err(e) => {
                tracing::warn!(role = role.as_str(), attempt, error = %e, "backend reply rejected");
                last = e;
            }
        }
    }
    Err(last)
}
