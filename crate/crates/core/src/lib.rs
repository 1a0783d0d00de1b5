//! GNSS jamming synthesis, dual-domain spectral features and a
//! physics-guided mixture-of-experts classifier.

pub mod error;
pub mod jamgen;
pub mod metrics;
pub mod moe;
pub mod nn;
pub mod rng;
pub mod specfeat;

pub use error::{Error, Result};
