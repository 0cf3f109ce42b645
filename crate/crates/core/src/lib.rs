//! Stress tests for attribution-map evaluation metrics on MNIST-scale
//! models: pointing game, pixel flipping and their failure modes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod cli;
pub mod counterexamples;
pub mod dataio;
pub mod error;
pub mod metrics;
pub mod models;
pub mod numeric;
pub mod pgd;
pub mod proposition;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
