use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use super::quote::{information_gain_curve, Mechanism, MechanismQuote, PriceCurve};
use crate::bayes::{LinearObservations, NoiseModel};
use crate::error::{Error, Result};
use crate::linalg;

/// Fresh-data mechanism for a seller who can generate `n` new records along
/// any reported direction.
///
/// The buyer reports `x̂`, receives `n` noisy responses at `x̂/‖x̂‖` and pays
/// `½ ln((σ² + δ² + n)/(σ² + δ²))`, his full value for those records.
/// Artificial noise `δ` defaults to zero, which maximizes revenue.
#[derive(Debug, Clone)]
pub struct PerfectMechanism {
    dim: usize,
    n: usize,
    sigma: NoiseModel,
    delta: NoiseModel,
    curve: PriceCurve,
    truth: Option<(DVector<f64>, u64)>,
}

impl PerfectMechanism {
    pub fn new(dim: usize, n: usize, sigma: NoiseModel) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        Ok(Self {
            dim,
            n,
            sigma,
            delta: NoiseModel::zero(),
            curve: information_gain_curve,
            truth: None,
        })
    }

    pub fn with_artificial_noise(mut self, delta: NoiseModel) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_curve(mut self, curve: PriceCurve) -> Self {
        self.curve = curve;
        self
    }

    /// Responses are generated from `beta` with a stream seeded by `seed`.
    pub fn with_ground_truth(mut self, beta: DVector<f64>, seed: u64) -> Result<Self> {
        if beta.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "ground-truth parameter",
                expected: self.dim,
                found: beta.len(),
            });
        }
        self.truth = Some((beta, seed));
        Ok(self)
    }

    pub fn records(&self) -> usize {
        self.n
    }

    pub fn sigma(&self) -> &NoiseModel {
        &self.sigma
    }

    pub fn delta(&self) -> &NoiseModel {
        &self.delta
    }

    fn noise_variance(&self, u: &DVector<f64>) -> Result<f64> {
        let s = self.sigma.on_sphere(u);
        if !(s > 0.0) || s.is_nan() {
            return Err(Error::NonPositiveNoise { index: 0, value: s });
        }
        let dl = self.delta.on_sphere(u);
        if !(dl >= 0.0) {
            return Err(Error::invalid(format!("artificial noise must be nonnegative, got {dl}")));
        }
        Ok(s * s + dl * dl)
    }

    /// Closed-form price for a report.
    pub fn payment(&self, report: &DVector<f64>) -> Result<f64> {
        let u = linalg::unit(report, "reported type")?;
        self.payment_at_unit(&u)
    }

    fn payment_at_unit(&self, u: &DVector<f64>) -> Result<f64> {
        if self.n == 0 {
            return Ok(0.0);
        }
        let v = self.noise_variance(u)?;
        if v.is_infinite() {
            return Ok(0.0);
        }
        Ok((self.curve)((v + self.n as f64) / v))
    }
}

impl Mechanism for PerfectMechanism {
    fn name(&self) -> &str {
        "perfect"
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn quote(&self, report: &DVector<f64>) -> Result<MechanismQuote> {
        if report.len() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "reported type",
                expected: self.dim,
                found: report.len(),
            });
        }
        let u = linalg::unit(report, "reported type")?;
        let payment = self.payment_at_unit(&u)?;
        let n = self.n;
        let var = if n == 0 { 1.0 } else { self.noise_variance(&u)? };
        let mut features = DMatrix::zeros(n, self.dim);
        for mut row in features.row_iter_mut() {
            row.copy_from(&u.transpose());
        }
        let responses = self.truth.as_ref().map(|(beta, seed)| {
            let mut rng = ChaCha20Rng::seed_from_u64(*seed);
            let mean = u.dot(beta);
            let sd = var.sqrt();
            DVector::from_fn(n, |_, _| {
                let e: f64 = StandardNormal.sample(&mut rng);
                mean + sd * e
            })
        });
        let allocation =
            LinearObservations::new(features, responses, DMatrix::from_diagonal_element(n, n, var))?;
        Ok(MechanismQuote {
            allocation,
            payment_nats: payment,
            reported_type: u,
            raw_report: report.clone(),
        })
    }
}
