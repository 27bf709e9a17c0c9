//! Metrics, baselines, experiments, paired statistics and replay.

pub mod baselines;
pub mod csv;
pub mod experiment;
pub mod fixture;
pub mod metrics;
pub mod replay;
pub mod report;
pub mod stats;

pub use baselines::{Baseline, StaticThreshold};
pub use experiment::*;
pub use metrics::*;
pub use replay::{replay_bundle, Divergence, ReplayError, ReplayReport, ScriptedRun};
pub use report::{EpisodeMetrics, MetricReport, Summary};
pub use stats::{paired_compare, PairError, PairedStats};
