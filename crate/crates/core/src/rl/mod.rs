//! Independent per-switch PPO agents and the fast control loop.

mod agent;
mod checkpoint;
mod fast_loop;
mod gae;
mod nn;
mod ppo;
mod rollout;

pub use agent::{ActMode, ActOutput, AgentParams, ConfigError, PpoConfig, TrainOn, Transition};
pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_FORMAT};
pub use fast_loop::{
    fast_loop, EpisodeTrace, FastLoop, LoopConfig, NoReflection, ReflectionContext, ReflectionEvent, ReflectionHook,
    UpdateEvent,
};
pub use gae::{gae, gae_with_next, GaeError};
pub use nn::{log_softmax, softmax, Adam, Cache, Mlp, RunningNorm};
pub use ppo::{clipped_objective, ppo_update, surrogate_and_grad, UpdateStats};
pub use rollout::{
    decision_seed, run_episode, run_tick, ConstantPolicy, FrozenAgents, Shield, SwitchPolicy, TickResult,
};
