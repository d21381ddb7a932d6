use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bayes::{
    posterior_covariance, posterior_covariance_for, Dataset, GaussianBelief, LinearObservations,
    NoiseModel,
};
use crate::error::{Error, Result};
use crate::linalg::{self, quad_form};

/// A buyer's prior together with the decision context `x` whose outcome
/// `⟨x, β⟩` the buyer wants to predict.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationQuery {
    prior: GaussianBelief,
    context: DVector<f64>,
}

impl ValuationQuery {
    pub fn new(prior: GaussianBelief, context: DVector<f64>) -> Result<Self> {
        if context.len() != prior.dim() {
            return Err(Error::DimensionMismatch {
                context: "query context",
                expected: prior.dim(),
                found: context.len(),
            });
        }
        if context.iter().all(|&v| v == 0.0) || context.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateDirection("query context must be finite and nonzero".into()));
        }
        Ok(Self { prior, context })
    }

    /// Query under the standard prior `N(0, I_d)`.
    pub fn standard(context: DVector<f64>) -> Result<Self> {
        let d = context.len();
        if d == 0 {
            return Err(Error::invalid("query context must have at least one coordinate"));
        }
        Self::new(GaussianBelief::standard(d), context)
    }

    pub fn prior(&self) -> &GaussianBelief {
        &self.prior
    }

    pub fn context(&self) -> &DVector<f64> {
        &self.context
    }

    pub fn dim(&self) -> usize {
        self.context.len()
    }

    pub fn with_prior(&self, prior: GaussianBelief) -> Result<Self> {
        Self::new(prior, self.context.clone())
    }

    pub fn prior_variance(&self) -> Result<f64> {
        let v = quad_form(self.prior.covariance(), &self.context);
        if !(v > 0.0) {
            return Err(Error::DegenerateDirection(format!(
                "prior predictive variance along the context is {v}"
            )));
        }
        Ok(v)
    }
}

/// Information gain `½ ln(prior variance / posterior variance)` in nats.
pub fn log_variance_ratio(prior_variance: f64, posterior_variance: f64) -> Result<f64> {
    if !(posterior_variance > 0.0) {
        return Err(Error::DegenerateDirection(format!(
            "posterior predictive variance {posterior_variance} is not positive"
        )));
    }
    Ok((0.5 * (prior_variance / posterior_variance).ln()).max(0.0))
}

/// Closed-form instrumental value of a dataset: the reduction in entropy of
/// the prediction `⟨x, β⟩`. Responses are never consulted.
pub fn canonical_value(query: &ValuationQuery, data: &Dataset) -> Result<f64> {
    if data.dim() != query.dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset features",
            expected: query.dim(),
            found: data.dim(),
        });
    }
    let vq = query.prior_variance()?;
    if data.is_empty() {
        return Ok(0.0);
    }
    let cov = posterior_covariance_for(query.prior(), data)?;
    log_variance_ratio(vq, quad_form(&cov, query.context()))
}

/// Canonical value of linear observations with a full noise covariance.
pub fn canonical_value_observations(query: &ValuationQuery, obs: &LinearObservations) -> Result<f64> {
    let vq = query.prior_variance()?;
    if obs.is_empty() {
        if obs.dim() != query.dim() {
            return Err(Error::DimensionMismatch {
                context: "observation features",
                expected: query.dim(),
                found: obs.dim(),
            });
        }
        return Ok(0.0);
    }
    let cov = posterior_covariance(query.prior(), obs)?;
    log_variance_ratio(vq, quad_form(&cov, query.context()))
}

/// Value of `addition` to a buyer who already holds `base`.
pub fn marginal_value(query: &ValuationQuery, base: &Dataset, addition: &Dataset) -> Result<f64> {
    if base.dim() != query.dim() || addition.dim() != query.dim() {
        return Err(Error::DimensionMismatch {
            context: "marginal value datasets",
            expected: query.dim(),
            found: if base.dim() != query.dim() { base.dim() } else { addition.dim() },
        });
    }
    let cov = posterior_covariance_for(query.prior(), base)?;
    let updated = GaussianBelief::new(query.prior().mean().clone(), cov)?;
    canonical_value(&query.with_prior(updated)?, addition)
}

/// Value to type `x` of `n` fresh records along `x̂` under the standard
/// prior, with intrinsic noise `σ(x̂)` and artificial noise `δ(x̂)`.
///
/// Both directions are renormalized, so by Sherman–Morrison the value is
/// `−½ ln(1 − ⟨x, x̂⟩² · n / (σ² + δ² + n))`.
pub fn perfect_customization_value(
    x: &DVector<f64>,
    x_hat: &DVector<f64>,
    n: usize,
    sigma: &NoiseModel,
    delta: &NoiseModel,
) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("number of records must be positive"));
    }
    if x.len() != x_hat.len() {
        return Err(Error::DimensionMismatch {
            context: "type and report",
            expected: x.len(),
            found: x_hat.len(),
        });
    }
    let u = linalg::unit(x, "buyer type")?;
    let u_hat = linalg::unit(x_hat, "reported type")?;
    let s = sigma.on_sphere(&u_hat);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::NonPositiveNoise { index: 0, value: s });
    }
    let dl = delta.on_sphere(&u_hat);
    if !(dl >= 0.0) {
        return Err(Error::invalid(format!("artificial noise must be nonnegative, got {dl}")));
    }
    let noise_var = s * s + dl * dl;
    if noise_var.is_infinite() {
        return Ok(0.0);
    }
    let c = u.dot(&u_hat);
    let n = n as f64;
    let shrink = (c * c) * n / (noise_var + n);
    Ok((-0.5 * (-shrink).ln_1p()).max(0.0))
}

/// Posterior covariance `(I + n·x̂x̂ᵀ/(σ²+δ²))⁻¹` under the standard prior,
/// by dense inversion. Kept separate from the closed form for cross-checks.
pub fn perfect_customization_covariance(x_hat_unit: &DVector<f64>, n: usize, noise_var: f64) -> Result<DMatrix<f64>> {
    let d = x_hat_unit.len();
    let precision = DMatrix::identity(d, d) + (n as f64 / noise_var) * x_hat_unit * x_hat_unit.transpose();
    linalg::sym_inverse(&precision, "posterior precision")
}

/// Per-datum values of a dataset together with the coalition count used.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapleyAllocation {
    pub per_datum_value: Vec<f64>,
    pub coalition_value_fn_evals: usize,
}

impl ShapleyAllocation {
    pub fn total(&self) -> f64 {
        self.per_datum_value.iter().sum()
    }
}
