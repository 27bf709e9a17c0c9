//! The fast control loop: per-tick decisions, buffering, PPO update events and
//! the reflection checkpoint.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::agent::{ActMode, ActOutput, AgentParams, PpoConfig, Transition};
use super::ppo::{ppo_update, UpdateStats};
use super::rollout::{decision_seed, run_tick, FrozenAgents, Shield, SwitchPolicy};
use crate::safety::PolicyConstitution;
use crate::sim::{Environment, SimError, Telemetry, TraceRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub ppo: PpoConfig,
    /// Ticks between reflection checkpoints; 0 disables reflection.
    pub k_reflect: u64,
    pub shield: Shield,
    pub learn: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { ppo: PpoConfig::default(), k_reflect: 0, shield: Shield::Filtered, learn: true }
    }
}

/// What the reflection hook sees at a checkpoint.
pub struct ReflectionContext<'a> {
    pub clock: u64,
    pub pi: &'a PolicyConstitution,
    /// Trace since the previous checkpoint.
    pub window: &'a [TraceRecord],
    /// Frozen act-only view of the current agents.
    pub policy: &'a dyn SwitchPolicy,
}

pub trait ReflectionHook {
    /// Returns a replacement constitution, or `None` to keep the current one.
    fn reflect(&mut self, ctx: ReflectionContext<'_>) -> Option<PolicyConstitution>;
}

pub struct NoReflection;

impl ReflectionHook for NoReflection {
    fn reflect(&mut self, _: ReflectionContext<'_>) -> Option<PolicyConstitution> {
        None
    }
}

impl<F> ReflectionHook for F
where
    F: FnMut(ReflectionContext<'_>) -> Option<PolicyConstitution>,
{
    fn reflect(&mut self, ctx: ReflectionContext<'_>) -> Option<PolicyConstitution> {
        self(ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub clock: u64,
    /// Per-agent stats; `None` for agents with no transitions in the batch.
    pub agents: Vec<Option<UpdateStats>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReflectionEvent {
    pub clock: u64,
    pub replaced: bool,
    pub version: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode: u64,
    pub records: Vec<TraceRecord>,
    pub updates: Vec<UpdateEvent>,
    pub reflections: Vec<ReflectionEvent>,
    pub transitions: usize,
}

struct Pending {
    obs: Telemetry,
    out: ActOutput,
    executed: crate::safety::Action,
    reward: f64,
}

/// Learning state that persists across episodes: agents, the published
/// constitution, the global clock, the rollout buffer and the reflection
/// window.
pub struct FastLoop {
    pub config: LoopConfig,
    pub agents: Vec<AgentParams>,
    pub pi: PolicyConstitution,
    clock: u64,
    buffer: Vec<Transition>,
    window: Vec<TraceRecord>,
}

impl FastLoop {
    pub fn new(config: LoopConfig, agents: Vec<AgentParams>, pi: PolicyConstitution) -> Self {
        FastLoop { config, agents, pi, clock: 0, buffer: Vec::new(), window: Vec::new() }
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    /// Resets `env` and runs one episode.
    pub fn run_episode(
        &mut self,
        env: &mut Environment,
        episode: u64,
        hook: &mut dyn ReflectionHook,
    ) -> Result<EpisodeTrace, SimError> {
        let n = env.n_switches();
        if n != self.agents.len() {
            return Err(SimError::ActionCount { expected: n, got: self.agents.len() });
        }
        env.reset();
        let seed = env.seed();
        let mut trace =
            EpisodeTrace { episode, records: Vec::new(), updates: Vec::new(), reflections: Vec::new(), transitions: 0 };
        let mut pending: Vec<Option<Pending>> = (0..n).map(|_| None).collect();

        while !env.is_done() {
            let tick = env.tick();
            let mut outs: Vec<Option<ActOutput>> = vec![None; n];
            let agents = &self.agents;
            let result = run_tick(env, &self.pi, self.config.shield, episode, |i, o| {
                let out = agents[i].act(o, decision_seed(seed, episode, tick, i), ActMode::Sample);
                outs[i] = Some(out);
                out.action
            })?;
            for i in 0..n {
                let out = outs[i].expect("every switch decided");
                assert_eq!(out.action, result.sampled[i], "stored action is the sampled one");
                assert!((out.log_prob - out.log_prob_of(result.sampled[i])).abs() < 1e-9, "log_prob of sampled action");
                if let Some(p) = pending[i].take() {
                    self.close(i, p, result.obs[i], out.value, false);
                    trace.transitions += 1;
                }
                pending[i] = Some(Pending {
                    obs: result.obs[i],
                    out,
                    executed: result.executed[i],
                    reward: result.rewards[i].1,
                });
            }
            self.window.extend(result.records.iter().cloned());
            trace.records.extend(result.records);
            self.clock += 1;
            self.drain_updates(&mut trace);
            if self.config.k_reflect > 0 && self.clock.is_multiple_of(self.config.k_reflect) {
                self.checkpoint(hook, &mut trace);
            }
        }
        for (i, p) in pending.into_iter().enumerate() {
            if let Some(p) = p {
                let obs = p.obs;
                self.close(i, p, obs, 0.0, true);
                trace.transitions += 1;
            }
        }
        self.drain_updates(&mut trace);
        Ok(trace)
    }

    fn close(&mut self, switch: usize, p: Pending, next_obs: Telemetry, next_value: f64, done: bool) {
        if !self.config.learn {
            return;
        }
        self.buffer.push(Transition {
            switch,
            obs: p.obs,
            sampled_action: p.out.action,
            executed_action: p.executed,
            log_prob: p.out.log_prob,
            executed_log_prob: p.out.log_prob_of(p.executed),
            reward: p.reward,
            next_obs,
            done,
            value: p.out.value,
            next_value,
        });
    }

    fn drain_updates(&mut self, trace: &mut EpisodeTrace) {
        let m = self.config.ppo.rollout_size;
        while self.config.learn && self.buffer.len() >= m {
            let batch: Vec<Transition> = self.buffer.drain(..m).collect();
            let cfg = &self.config.ppo;
            let agents = self
                .agents
                .par_iter_mut()
                .enumerate()
                .map(|(i, agent)| {
                    let mine: Vec<Transition> = batch.iter().filter(|t| t.switch == i).cloned().collect();
                    (!mine.is_empty()).then(|| ppo_update(agent, &mine, cfg))
                })
                .collect();
            trace.updates.push(UpdateEvent { clock: self.clock, agents });
        }
    }

    fn checkpoint(&mut self, hook: &mut dyn ReflectionHook, trace: &mut EpisodeTrace) {
        let frozen = FrozenAgents { agents: &self.agents, mode: ActMode::Greedy };
        let next =
            hook.reflect(ReflectionContext { clock: self.clock, pi: &self.pi, window: &self.window, policy: &frozen });
        let replaced = next.is_some();
        if let Some(pi) = next {
            self.pi = pi;
        }
        self.window.clear();
        trace.reflections.push(ReflectionEvent { clock: self.clock, replaced, version: self.pi.version });
    }
}

/// Runs a single episode from fresh loop state.
pub fn fast_loop(
    env: &mut Environment,
    agents: Vec<AgentParams>,
    pi: PolicyConstitution,
    config: LoopConfig,
    hook: &mut dyn ReflectionHook,
) -> Result<(EpisodeTrace, Vec<AgentParams>, PolicyConstitution), SimError> {
    let mut fl = FastLoop::new(config, agents, pi);
    let trace = fl.run_episode(env, 0, hook)?;
    Ok((trace, fl.agents, fl.pi))
}
