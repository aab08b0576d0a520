//! Ensemble Kalman filtering of chaotic systems under fixed, randomly
//! switched and bandit-sized partial observations.
//!
//! The crate covers the Lorenz-63/96 models, a localized deterministic
//! ensemble Kalman–Bucy filter, an LETKF analysis with Gaspari–Cohn
//! R-localization, uniform and Poisson-clocked observation switching, and a
//! UCB1 bandit that learns how many components need to be observed.

pub mod bandit;
pub mod config;
pub mod dynamics;
pub mod enkbf;
pub mod error;
pub mod harness;
pub mod letkf;
pub mod localization;
pub mod observation;
pub mod record;
pub mod rng;

pub use error::{Error, Result};
