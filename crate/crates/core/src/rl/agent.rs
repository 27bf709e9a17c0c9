//! Per-switch agent parameters, PPO hyperparameters and transitions.

use rand::distributions::{Distribution, WeightedIndex};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::nn::{log_softmax, softmax, Adam, Mlp, RunningNorm};
use crate::safety::Action;
use crate::sim::Telemetry;
use crate::util::{digest_of, rng_for};

/// Which action's log-probability the policy gradient is taken on.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainOn {
    /// The action the policy sampled, with the reward of the filtered action.
    #[default]
    Sampled,
    /// The action that actually ran after the safety filter.
    Executed,
}

/// Sampling versus arg-max action selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    #[default]
    Sample,
    Greedy,
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("invalid PPO config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    /// Transitions (summed over all switches) that trigger an update event.
    pub rollout_size: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub train_on: TrainOn,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            gamma: 0.95,
            gae_lambda: 0.95,
            clip_eps: 0.2,
            rollout_size: 256,
            epochs: 4,
            minibatch_size: 32,
            learning_rate: 3e-4,
            entropy_coef: 0.01,
            value_coef: 0.5,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            train_on: TrainOn::Sampled,
        }
    }
}

impl PpoConfig {
    pub fn fast() -> Self {
        PpoConfig { clip_eps: 0.3, ..Self::default() }
    }

    pub fn best() -> Self {
        Self::default()
    }

    pub fn stable() -> Self {
        PpoConfig { clip_eps: 0.1, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return bad("clip_eps must lie in (0, 1)");
        }
        if self.rollout_size == 0 || self.epochs == 0 || self.minibatch_size == 0 {
            return bad("rollout_size, epochs and minibatch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.entropy_coef >= 0.0 && self.value_coef >= 0.0 && self.max_grad_norm > 0.0) {
            return bad("coefficients must be non-negative and max_grad_norm positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden widths must be non-empty and positive");
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }
}

/// One closed step of experience for a single switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub switch: usize,
    pub obs: Telemetry,
    pub sampled_action: Action,
    pub executed_action: Action,
    /// Log-probability of the sampled action under the acting policy.
    pub log_prob: f64,
    /// Log-probability of the executed action under the acting policy.
    pub executed_log_prob: f64,
    pub reward: f64,
    pub next_obs: Telemetry,
    pub done: bool,
    pub value: f64,
    /// Critic estimate at `next_obs` when it was observed (0 when done).
    pub next_value: f64,
}

impl Transition {
    pub fn trained_action(&self, on: TrainOn) -> (Action, f64) {
        match on {
            TrainOn::Sampled => (self.sampled_action, self.log_prob),
            TrainOn::Executed => (self.executed_action, self.executed_log_prob),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActOutput {
    pub action: Action,
    pub log_prob: f64,
    pub value: f64,
    pub probs: [f64; Action::COUNT],
}

impl ActOutput {
    pub fn log_prob_of(&self, a: Action) -> f64 {
        self.probs[a.index()].ln()
    }
}

/// Policy and critic weights, optimizer moments and the observation
/// normalizer of one switch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentParams {
    pub policy: Mlp,
    pub value: Mlp,
    pub policy_opt: Adam,
    pub value_opt: Adam,
    pub norm: RunningNorm,
    pub update_count: u64,
    pub seed: u64,
}

impl AgentParams {
    pub fn new(cfg: &PpoConfig, seed: u64) -> Self {
        let mut rng = rng_for(&[seed, 0xA6E7]);
        let mut sizes = vec![Telemetry::DIM];
        sizes.extend(&cfg.hidden);
        let mut psizes = sizes.clone();
        psizes.push(Action::COUNT);
        let mut vsizes = sizes;
        vsizes.push(1);
        let policy = Mlp::new(&psizes, 0.01, &mut rng);
        let value = Mlp::new(&vsizes, 1.0, &mut rng);
        AgentParams {
            policy_opt: Adam::new(policy.n_params(), cfg.learning_rate),
            value_opt: Adam::new(value.n_params(), cfg.learning_rate),
            policy,
            value,
            norm: RunningNorm::new(Telemetry::DIM),
            update_count: 0,
            seed,
        }
    }

    pub fn normalized(&self, obs: &Telemetry) -> Vec<f64> {
        self.norm.apply(&obs.as_array())
    }

    pub fn logits(&self, obs: &Telemetry) -> Vec<f64> {
        self.policy.forward(&self.normalized(obs))
    }

    pub fn probs(&self, obs: &Telemetry) -> [f64; Action::COUNT] {
        let p = softmax(&self.logits(obs));
        std::array::from_fn(|i| p[i])
    }

    pub fn log_prob(&self, obs: &Telemetry, a: Action) -> f64 {
        log_softmax(&self.logits(obs))[a.index()]
    }

    pub fn value_of(&self, obs: &Telemetry) -> f64 {
        self.value.forward(&self.normalized(obs))[0]
    }

    /// Deterministic in `(self, obs, seed)`.
    pub fn act(&self, obs: &Telemetry, seed: u64, mode: ActMode) -> ActOutput {
        let x = self.normalized(obs);
        let logits = self.policy.forward(&x);
        let logp = log_softmax(&logits);
        let probs: [f64; Action::COUNT] = std::array::from_fn(|i| logp[i].exp());
        let idx = match mode {
            ActMode::Sample => {
                let dist = WeightedIndex::new(probs).expect("finite probabilities");
                dist.sample(&mut rng_for(&[seed, 0xAC7]))
            }
            ActMode::Greedy => {
                (0..Action::COUNT).max_by(|&a, &b| logits[a].total_cmp(&logits[b]).then(b.cmp(&a))).expect("non-empty")
            }
        };
        ActOutput {
            action: Action::from_index(idx).expect("index in range"),
            log_prob: logp[idx],
            value: self.value.forward(&x)[0],
            probs,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.policy.params().iter().chain(self.value.params()).all(|x| x.is_finite())
    }

    pub fn digest(&self) -> String {
        digest_of(self)
    }
}
