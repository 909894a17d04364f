//! Contact detection from proximity and IMU readings on a knife handle.
//!
//! The pipeline is ingest, per-replicate standardization with outlier
//! removal, optional relabelling for the approaching-contact task, a
//! train/test split under one of three protocols, and a random forest.

pub mod data;
pub mod eval;
pub mod forest;
pub mod label;
pub mod preprocess;
pub mod protocol;
pub mod split;
pub mod synth;

pub use data::{ContactError, CutType, Replicate, SensorSample, FEATURE_NAMES, N_FEATURES};
pub use eval::{evaluate, ConfusionStats};
pub use forest::{train_forest, tune_mtry, ForestModel, ForestParams};
