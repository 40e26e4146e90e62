pub mod datasets;
pub mod diffusion;
pub mod error;
pub mod metrics;
mod persist;
pub mod pruning;
pub mod rng;
pub mod runner;

pub use error::{Error, Result};
