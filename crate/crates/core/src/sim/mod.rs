//! Discrete-time SDN-IoT environment: switch queues, flow tables, the shared
//! controller with delayed rule activation, and the observation kernel.

mod config;
mod dynamics;
mod env;
mod observe;
mod state;
mod trace;

pub use config::{default_kappa, ServiceModel, SimConfig, SimError};
pub use dynamics::{
    actuation_delay, backlog_update, draw_service, queue_update, ready_offset, step_controller, step_queues,
    ControllerStep,
};
pub use env::{Environment, MitigationEffect, SwitchOutcome};
pub use observe::{elastic_factor, observe, offered_load, rule_context, source_entropy, EntropyError, Telemetry};
pub use state::{
    ActiveRule, ControllerState, FlowTableState, NetworkState, PendingRule, SwitchTraffic, TrafficLabel, TrafficRegime,
};
pub use trace::{read_trace, write_trace, TraceRecord};
