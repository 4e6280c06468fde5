//! Directional speech enhancement for two-microphone arrays.
//!
//! The crate covers the whole pipeline: simulated reverberant scenes
//! ([`room`]), STFT analysis ([`signal`]), beam steering at a target angle and
//! its two edge angles ([`beamform`], [`features`]), a small tensor engine
//! with reverse-mode differentiation ([`autodiff`]), the causal U-Net mask
//! estimator ([`model`]), its training objective ([`loss`]) and the training
//! and evaluation loops ([`train`]).

pub mod audit;
pub mod autodiff;
pub mod beamform;
pub mod cli;
pub mod error;
pub mod features;
pub mod loss;
pub mod model;
pub mod room;
pub mod signal;
pub mod train;

pub use error::{Error, Result};

/// Speed of sound in m/s, shared by the room simulator and the beamformers.
pub const SPEED_OF_SOUND: f64 = 343.0;

/// Default sample rate in Hz.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
