//! Instrumental valuation of data: the closed-form information gain, the
//! value of customized records, exact Data Shapley for comparison, and a
//! Monte-Carlo cross-check of the closed form.

mod canonical;
mod coupling;
mod shapley;

pub use canonical::{
    canonical_value, canonical_value_observations, log_variance_ratio, marginal_value,
    perfect_customization_covariance, perfect_customization_value, ShapleyAllocation,
    ValuationQuery,
};
pub use coupling::{coupling_check, scalar_gaussian_kl, CouplingReport, MIN_COUPLING_SAMPLES};
pub use shapley::{data_shapley, MAX_SHAPLEY_RECORDS};
