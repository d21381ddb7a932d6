//! Gaussian Bayesian linear regression: beliefs, datasets, linear
//! statistics of datasets and conjugate posterior updates.

mod belief;
mod dataset;
mod noise;
mod statistic;
mod update;

pub use belief::{BeliefFile, GaussianBelief};
pub use dataset::Dataset;
pub use noise::{great_circle, tangent_basis, NoiseModel};
pub use statistic::{LinearObservations, LinearStatisticDpp};
pub use update::{
    gaussian_entropy, normalize_prior, posterior_covariance, posterior_covariance_for,
    posterior_update, posterior_update_observations, predictive_variance, prediction_entropy,
    StandardizedProblem,
};
