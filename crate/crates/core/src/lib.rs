//! Generalized exponential random graph models with real-valued edge weights.

pub mod base_measure;
pub mod cut;
pub mod error;
pub mod estimation;
pub mod gaussian_exact;
pub mod graph;
pub mod homomorphism;
pub mod model;
pub mod numeric;
pub mod rate;
pub mod sampler;
pub mod variational;

pub use error::{Error, Result};
pub mod validation;
