//! One closed-loop tick shared by training and evaluation:
//! controller step, observe, decide, filter, execute, reward.

use serde::{Deserialize, Serialize};

use super::agent::{ActMode, AgentParams};
use crate::reward::{compute_reward, RewardInputs, RewardVector};
use crate::safety::{feasible_set_with_budget, safety_filter, Action, ActuationBudget, PolicyConstitution};
use crate::sim::{Environment, SimError, SwitchOutcome, Telemetry, TraceRecord};
use crate::util::mix_seed;

/// Whether decisions pass through the constitution's mask and budget.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shield {
    #[default]
    Filtered,
    /// No mask, no hard floor and no actuation budget.
    Bypass,
}

/// Act-only view of a set of per-switch controllers.
pub trait SwitchPolicy: Sync {
    fn decide(&self, switch: usize, obs: &Telemetry, seed: u64) -> Action;
}

/// Frozen agents, one per switch.
pub struct FrozenAgents<'a> {
    pub agents: &'a [AgentParams],
    pub mode: ActMode,
}

impl SwitchPolicy for FrozenAgents<'_> {
    fn decide(&self, switch: usize, obs: &Telemetry, seed: u64) -> Action {
        self.agents[switch].act(obs, seed, self.mode).action
    }
}

/// The same action on every switch.
pub struct ConstantPolicy(pub Action);

impl SwitchPolicy for ConstantPolicy {
    fn decide(&self, _: usize, _: &Telemetry, _: u64) -> Action {
        self.0
    }
}

impl<F> SwitchPolicy for F
where
    F: Fn(usize, &Telemetry, u64) -> Action + Sync,
{
    fn decide(&self, switch: usize, obs: &Telemetry, seed: u64) -> Action {
        self(switch, obs, seed)
    }
}

/// Seed for the decision of `switch` at `tick` of `episode`.
pub fn decision_seed(env_seed: u64, episode: u64, tick: u64, switch: usize) -> u64 {
    mix_seed(&[env_seed, episode, tick, switch as u64, 0xDEC1])
}

#[derive(Debug, Clone)]
pub struct TickResult {
    pub obs: Vec<Telemetry>,
    pub sampled: Vec<Action>,
    pub executed: Vec<Action>,
    pub outcomes: Vec<SwitchOutcome>,
    pub rewards: Vec<(RewardVector, f64)>,
    pub records: Vec<TraceRecord>,
}

/// Runs one tick. `decide(i, obs)` returns the sampled action of switch `i`;
/// switches are visited in index order so budget reservation is deterministic.
pub fn run_tick(
    env: &mut Environment,
    pi: &PolicyConstitution,
    shield: Shield,
    episode: u64,
    mut decide: impl FnMut(usize, &Telemetry) -> Action,
) -> Result<TickResult, SimError> {
    let step = env.begin_tick().clone();
    let tick = env.tick();
    let backlog = env.state().controller.backlog;
    let n = env.n_switches();
    let mut budget = ActuationBudget::default();
    let mut obs = Vec::with_capacity(n);
    let mut sampled = Vec::with_capacity(n);
    let mut executed = Vec::with_capacity(n);
    for i in 0..n {
        let o = env.observe(i, pi.patches.hint_trust)?;
        let a = decide(i, &o);
        let x = match shield {
            Shield::Filtered => {
                let feasible = feasible_set_with_budget(pi, &env.rule_context(&o), &budget);
                safety_filter(a, feasible)
            }
            Shield::Bypass => a,
        };
        budget.reserve(x);
        obs.push(o);
        sampled.push(a);
        executed.push(x);
    }
    let outcomes = env.apply(&executed)?;
    let mut rewards = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let out = &outcomes[i];
        let inputs = RewardInputs {
            executed: executed[i],
            label: out.label,
            ticks_since_onset: out.attack_onset.map(|s| tick.saturating_sub(s)),
            queue_next: out.queue_after,
            backlog,
            packetin_drops: step.dropped,
            flowmods: out.flowmods_submitted,
        };
        let (g, r) = compute_reward(&inputs, pi);
        rewards.push((g, r));
        records.push(TraceRecord {
            episode,
            tick,
            switch: i,
            telemetry: obs[i],
            sampled_action: sampled[i],
            executed_action: executed[i],
            reward: g,
            reward_scalar: r,
            backlog,
            rtt: out.rtt_ms,
            flowmods_submitted: out.flowmods_submitted,
            label: out.label,
            queue: out.queue_after,
            packetins: out.packetins,
            packetin_drops: step.dropped,
            sync_flag: out.sync_flag,
        });
    }
    Ok(TickResult { obs, sampled, executed, outcomes, rewards, records })
}

/// Runs a full episode under a fixed controller with no learning.
pub fn run_episode(
    env: &mut Environment,
    pi: &PolicyConstitution,
    shield: Shield,
    policy: &dyn SwitchPolicy,
    episode: u64,
) -> Result<Vec<TraceRecord>, SimError> {
    env.reset();
    let seed = env.seed();
    let mut trace = Vec::new();
    while !env.is_done() {
        let tick = env.tick();
        let r = run_tick(env, pi, shield, episode, |i, o| policy.decide(i, o, decision_seed(seed, episode, tick, i)))?;
        trace.extend(r.records);
    }
    Ok(trace)
}
