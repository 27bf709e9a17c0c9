//! Seeded generators for benign IoT traffic and scripted adversarial
//! campaigns.

mod generate;
mod scenario;
mod spec;

pub use generate::{
    generate, BenignProfile, Contribution, BENIGN_HISTOGRAM, BURST_IDLE_ON, BURST_IDLE_PERIOD, K_SOURCES,
};
pub use scenario::Scenario;
pub use spec::{
    intensity_ladder, CampaignClass, CampaignSpec, SpecError, UnknownClass, MILD_INTENSITY, SATURATING_INTENSITY,
};
