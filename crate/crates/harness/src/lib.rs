//! Synthetic cutting cell around the core library: scene generation, the
//! slice/trim/cube pipeline with product metrics, a run store, the HTTP
//! session service and the `carvebot` command line.

pub mod cli;
pub mod config;
pub mod metrics;
pub mod pipeline;
pub mod runlog;
pub mod scene;
pub mod service;
