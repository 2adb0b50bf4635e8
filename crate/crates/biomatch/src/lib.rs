//! Sensor and verification-service programs for the biomatch protocol, their
//! file formats, and the accuracy/timing experiment harness.

use std::io;

pub mod config;
pub mod evaluation;
pub mod features;
pub mod keyfile;
pub mod sensor;
pub mod service;
pub mod store;
pub mod wire;

pub use biomatch_core as core_lib;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] biomatch_core::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("config: {0}")]
    Config(String),
    #[error("format: {0}")]
    Format(String),
    #[error("protocol: {0}")]
    Protocol(String),
}
