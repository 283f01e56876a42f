//! Physics-enhanced residual learning for car-following trajectory prediction.

pub mod calibrate;
pub mod domain;
pub mod error;
pub mod eval;
pub mod ingest;
pub mod neuralnet;
pub mod physics;
pub mod predictors;
pub mod synth;

pub use error::{Error, Result};
