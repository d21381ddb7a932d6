//! Information-gain valuation of data under Bayesian linear regression and
//! incentive-compatible mechanisms for selling it.
//!
//! All values and prices are in nats.

pub mod bayes;
mod error;
pub mod linalg;
pub mod mechanisms;
pub mod valuation;
pub mod verification;

pub use error::{Error, Result};
