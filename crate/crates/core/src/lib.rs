//! Closed-loop SDN-IoT defense: a seedable discrete-time network simulator,
//! per-switch PPO mitigation agents, a runtime safety filter driven by an
//! explicit policy constitution, and a slow-timescale governance pipeline
//! that edits that constitution through validated, fail-closed deltas.
//!
//! Module map:
//!
//! - [`sim`]: switch queues, flow tables, the shared controller and the
//!   observation kernel.
//! - [`safety`]: the action vocabulary, the policy constitution, the
//!   feasibility mask, the safety filter and the delta merge operator.
//! - [`rl`]: dense policy/value networks, GAE, the clipped PPO update and
//!   the fast control loop.
//! - [`reward`]: the reward vector, scalarization and CVaR estimators.
//! - [`campaigns`]: seeded benign and adversarial traffic generators.
//! - [`governance`]: evidence summaries, role backends, gating and audit.
//! - [`eval`]: metrics, baselines, experiments, paired statistics, replay.

pub mod campaigns;
pub mod eval;
pub mod governance;
pub mod reward;
pub mod rl;
pub mod safety;
pub mod sim;
pub mod util;

pub use safety::{Action, PolicyConstitution, PolicyDelta};
pub use sim::{Environment, NetworkState, SimConfig, Telemetry};
