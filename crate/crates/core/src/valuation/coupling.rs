use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use super::canonical::ValuationQuery;
use crate::bayes::{posterior_covariance_for, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{self, quad_form};

pub const MIN_COUPLING_SAMPLES: usize = 10_000;

/// Outcome of the Monte-Carlo check that the expected KL divergence from
/// prior to posterior predictive equals the closed-form entropy reduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub empirical_mean: f64,
    pub stderr: f64,
    pub deterministic_value: f64,
    pub samples: usize,
    pub seed: u64,
    pub pass: bool,
}

/// `KL(N(m₁, v₁) ‖ N(m₀, v₀))` for scalar Gaussians.
pub fn scalar_gaussian_kl(m1: f64, v1: f64, m0: f64, v0: f64) -> f64 {
    0.5 * ((v0 / v1).ln() + (v1 + (m1 - m0).powi(2)) / v0 - 1.0)
}

/// Draws `β` from the prior and `Y` from the model, then averages
/// `KL(posterior predictive ‖ prior predictive)` along the query context.
///
/// Passes when the sample mean is within four standard errors of the
/// deterministic value. Randomness is a `ChaCha20Rng` seeded with
/// `seed_from_u64(seed)` feeding `StandardNormal`.
pub fn coupling_check(
    query: &ValuationQuery,
    data: &Dataset,
    samples: usize,
    seed: u64,
) -> Result<CouplingReport> {
    if samples < MIN_COUPLING_SAMPLES {
        return Err(Error::invalid(format!(
            "coupling check needs at least {MIN_COUPLING_SAMPLES} samples, got {samples}"
        )));
    }
    if data.dim() != query.dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset features",
            expected: query.dim(),
            found: data.dim(),
        });
    }
    let x = query.context();
    let prior = query.prior();
    let vq = query.prior_variance()?;
    let mq = x.dot(prior.mean());
    let post_cov = posterior_covariance_for(prior, data)?;
    let vp = quad_form(&post_cov, x);
    let deterministic = super::log_variance_ratio(vq, vp)?;

    if data.is_empty() {
        return Ok(CouplingReport {
            empirical_mean: 0.0,
            stderr: 0.0,
            deterministic_value: deterministic,
            samples,
            seed,
            pass: deterministic.abs() <= 1e-10,
        });
    }

    // Posterior predictive mean is affine in Y: m_p = offset + gainᵀ Y.
    let precision = prior.precision()?;
    let s_x = &post_cov * x;
    let offset = s_x.dot(&(&precision * prior.mean()));
    let inv_var = data.noise_stddev().map(|s| 1.0 / (s * s));
    let gain = (data.features() * &s_x).component_mul(&inv_var);

    let root = linalg::sym_sqrt(prior.covariance(), "prior covariance")?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = data.dim();
    let n = data.len();
    let mut z = DVector::zeros(d);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let beta = prior.mean() + &root * &z;
        let mut mp = offset;
        for i in 0..n {
            let eps: f64 = StandardNormal.sample(&mut rng);
            let y = data.features().row(i).transpose().dot(&beta) + data.noise_stddev()[i] * eps;
            mp += gain[i] * y;
        }
        let kl = scalar_gaussian_kl(mp, vp, mq, vq);
        sum += kl;
        sum_sq += kl * kl;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    let stderr = (var / m).sqrt();
    Ok(CouplingReport {
        empirical_mean: mean,
        stderr,
        deterministic_value: deterministic,
        samples,
        seed,
        pass: (mean - deterministic).abs() <= 4.0 * stderr,
    })
}
