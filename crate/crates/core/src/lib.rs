pub mod calibration_store;
pub mod chart;
pub mod cli;
pub mod contamination;
pub mod error;
pub mod estimators;
pub mod par;
pub mod rng;
pub mod simulation;
pub mod summary;
pub mod special;

pub use error::{Error, Result};
