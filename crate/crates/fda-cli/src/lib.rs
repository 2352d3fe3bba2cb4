//! File formats, dataset loading and generation, checkpointing, and the
//! command implementations behind the `fda` binary.

pub mod checkpoint;
pub mod cifar;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod dataset;
pub mod idx;
pub mod synth;
pub mod workers;
