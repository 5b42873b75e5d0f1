//! Overlap-density toolkit for weak-to-strong generalization on Gaussian
//! mixtures.

pub mod bandit;
pub mod changepoint;
pub mod concentration;
pub mod detection;
pub mod error;
pub mod expansion;
pub mod experiments;
pub mod linear;
pub mod mixture;
pub mod rng;
pub mod smooth;
pub mod stats;

pub use error::{Error, Result};
