//! Detection, metrics and labeling of actor behavior in MOBA match telemetry.

pub mod cohort;
pub mod detect;
pub mod events;
pub mod metrics;
pub mod model;
pub mod projection;
pub mod replay;
pub mod store;
pub mod synth;
pub mod telemetry;
