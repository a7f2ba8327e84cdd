//! Per-channel behavioral anomaly agent.

pub mod detect;
pub mod features;
pub mod model;

pub use detect::{calibrate_tau, monitor, nearest_rank, AgentConfig, Monitor, MonitorError};
pub use features::{
    build_windows, encode_event, EventVector, EventWindow, FeatureTracker, Label, RawEvent,
    RawFeatures, Standardizer, FEATURE_DIM,
};
pub use model::{
    gradient, loss, mean_loss, predict, score, train_local, ModelDims, ModelParams, TrainConfig,
    TrainOutcome,
};
