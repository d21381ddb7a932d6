use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::{Dataset, GaussianBelief, LinearObservations};
use crate::error::{Error, Result};
use crate::linalg::{self, quad_form};

fn check_dim(belief: &GaussianBelief, d: usize, context: &'static str) -> Result<()> {
    if belief.dim() != d {
        return Err(Error::DimensionMismatch {
            context,
            expected: belief.dim(),
            found: d,
        });
    }
    Ok(())
}

/// `(Σ_q⁻¹ + Aᵀ N⁻¹ A)⁻¹`. Needs no responses.
pub fn posterior_covariance(prior: &GaussianBelief, obs: &LinearObservations) -> Result<DMatrix<f64>> {
    check_dim(prior, obs.dim(), "observation features")?;
    if obs.is_empty() {
        return Ok(prior.covariance().clone());
    }
    let precision = prior.precision()? + obs.information()?;
    linalg::sym_inverse(&precision, "posterior precision")
}

/// Conjugate update of a Gaussian belief with linear observations under a
/// full noise covariance.
pub fn posterior_update_observations(
    prior: &GaussianBelief,
    obs: &LinearObservations,
) -> Result<GaussianBelief> {
    check_dim(prior, obs.dim(), "observation features")?;
    if obs.is_empty() {
        return Ok(prior.clone());
    }
    let prior_precision = prior.precision()?;
    let weighted = obs
        .weighted_responses()?
        .ok_or(Error::MissingResponses("the posterior mean"))?;
    let precision = &prior_precision + obs.information()?;
    let cov = linalg::sym_inverse(&precision, "posterior precision")?;
    let mean = &cov * (prior_precision * prior.mean() + weighted);
    Ok(GaussianBelief::from_parts_unchecked(mean, cov))
}

/// Posterior after observing a dataset with independent per-record noise.
pub fn posterior_update(prior: &GaussianBelief, data: &Dataset) -> Result<GaussianBelief> {
    check_dim(prior, data.dim(), "dataset features")?;
    if data.is_empty() {
        return Ok(prior.clone());
    }
    let y = data
        .normalized_responses()
        .ok_or(Error::MissingResponses("the posterior mean"))?;
    let prior_precision = prior.precision()?;
    let z = data.normalized_features();
    let precision = &prior_precision + z.transpose() * &z;
    let cov = linalg::sym_inverse(&precision, "posterior precision")?;
    let mean = &cov * (prior_precision * prior.mean() + z.transpose() * y);
    Ok(GaussianBelief::from_parts_unchecked(mean, cov))
}

/// Posterior covariance for a dataset; responses are not consulted.
pub fn posterior_covariance_for(prior: &GaussianBelief, data: &Dataset) -> Result<DMatrix<f64>> {
    check_dim(prior, data.dim(), "dataset features")?;
    if data.is_empty() {
        return Ok(prior.covariance().clone());
    }
    let precision = prior.precision()? + data.information();
    linalg::sym_inverse(&precision, "posterior precision")
}

/// Variance of `⟨x, β⟩` under the belief, `xᵀ Σ x`.
pub fn predictive_variance(belief: &GaussianBelief, x: &DVector<f64>) -> Result<f64> {
    check_dim(belief, x.len(), "query vector")?;
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateDirection("query vector is zero".into()));
    }
    Ok(quad_form(belief.covariance(), x).max(0.0))
}

/// Differential entropy (nats) of a scalar Gaussian with the given variance.
pub fn gaussian_entropy(variance: f64) -> Result<f64> {
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(Error::DegenerateDirection(format!(
            "predictive variance {variance} is not positive"
        )));
    }
    Ok(0.5 * variance.ln() + 0.5 * (1.0 + (2.0 * PI).ln()))
}

/// Entropy of the predictive distribution of `⟨x, β⟩`.
pub fn prediction_entropy(belief: &GaussianBelief, x: &DVector<f64>) -> Result<f64> {
    gaussian_entropy(predictive_variance(belief, x)?)
}

/// A problem re-expressed under the standard prior `N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedProblem {
    pub dataset: Dataset,
    pub query: DVector<f64>,
    /// Symmetric square root of the original prior covariance.
    pub sqrt_covariance: DMatrix<f64>,
}

/// Rewrites `(x, β)` as `(√Σ₀·x, √Σ₀⁻¹·(β − μ))` so the prior becomes
/// `N(0, I)`. Responses are shifted by `xᵀμ`; noise is untouched, so every
/// valuation is preserved.
pub fn normalize_prior(
    prior: &GaussianBelief,
    dataset: &Dataset,
    query: &DVector<f64>,
) -> Result<StandardizedProblem> {
    check_dim(prior, dataset.dim(), "dataset features")?;
    check_dim(prior, query.len(), "query vector")?;
    let ratio = linalg::eigen_ratio(prior.covariance());
    if !(ratio > linalg::SINGULAR_RTOL) {
        return Err(Error::Singular {
            what: "prior covariance",
            ratio,
        });
    }
    let root = linalg::sym_sqrt(prior.covariance(), "prior covariance")?;
    let features = dataset.features() * &root;
    let responses = dataset
        .responses()
        .map(|y| y - dataset.features() * prior.mean());
    Ok(StandardizedProblem {
        dataset: Dataset::new(features, responses, dataset.noise_stddev().clone())?,
        query: &root * query,
        sqrt_covariance: root,
    })
}
