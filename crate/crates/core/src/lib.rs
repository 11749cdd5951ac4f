//! Multi-object tracking built on frame-wise motion fields and frame-wise
//! appearance features: dense bi-directional box-displacement fields drive
//! a three-step association, with appearance descriptors resolving the
//! cases the fields cannot.
//!
//! The crate ships the association engine plus everything needed to
//! exercise it end to end without a trained network: a synthetic scenario
//! oracle, MOTChallenge-format I/O, CLEAR-MOT evaluation, overlay
//! rendering and a throughput benchmark (see the `fmftrack` binary).

pub mod cli;
pub mod faf;
pub mod fmf;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod render;
pub mod simulator;
pub mod tracker;
