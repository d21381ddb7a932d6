use nalgebra::{DMatrix, DVector};

use super::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{self, max_abs};

/// Linear observations `z = Aβ + e` with `e ~ N(0, N)` for a full noise
/// covariance `N`. Correlated linear statistics of a dataset land here.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObservations {
    features: DMatrix<f64>,
    responses: Option<DVector<f64>>,
    noise_covariance: DMatrix<f64>,
}

impl LinearObservations {
    pub fn new(
        features: DMatrix<f64>,
        responses: Option<DVector<f64>>,
        noise_covariance: DMatrix<f64>,
    ) -> Result<Self> {
        let m = features.nrows();
        if noise_covariance.nrows() != m || noise_covariance.ncols() != m {
            return Err(Error::DimensionMismatch {
                context: "observation noise covariance",
                expected: m,
                found: noise_covariance.nrows(),
            });
        }
        if let Some(y) = &responses {
            if y.len() != m {
                return Err(Error::DimensionMismatch {
                    context: "observation responses",
                    expected: m,
                    found: y.len(),
                });
            }
        }
        Ok(Self {
            features,
            responses,
            noise_covariance,
        })
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn responses(&self) -> Option<&DVector<f64>> {
        self.responses.as_ref()
    }

    pub fn noise_covariance(&self) -> &DMatrix<f64> {
        &self.noise_covariance
    }

    /// True when the noise covariance has off-diagonal mass.
    pub fn is_correlated(&self) -> bool {
        let scale = max_abs(&self.noise_covariance);
        let m = self.len();
        (0..m).any(|i| (0..m).any(|j| i != j && self.noise_covariance[(i, j)].abs() > 1e-15 * scale))
    }

    /// `Aᵀ N⁻¹ A`; fails when `N` is singular.
    pub fn information(&self) -> Result<DMatrix<f64>> {
        if self.is_empty() {
            return Ok(DMatrix::zeros(self.dim(), self.dim()));
        }
        let n_inv = linalg::sym_inverse(&self.noise_covariance, "derived noise covariance")?;
        let mut info = self.features.transpose() * n_inv * &self.features;
        linalg::symmetrize(&mut info);
        Ok(info)
    }

    /// `Aᵀ N⁻¹ z`.
    pub(crate) fn weighted_responses(&self) -> Result<Option<DVector<f64>>> {
        let Some(y) = &self.responses else {
            return Ok(None);
        };
        if self.is_empty() {
            return Ok(Some(DVector::zeros(self.dim())));
        }
        let n_inv = linalg::sym_inverse(&self.noise_covariance, "derived noise covariance")?;
        Ok(Some(self.features.transpose() * (n_inv * y)))
    }

    /// Back to an independent-noise [`Dataset`] when the covariance is diagonal.
    pub fn to_dataset(&self) -> Option<Dataset> {
        if self.is_correlated() {
            return None;
        }
        let sd = self.noise_covariance.diagonal().map(f64::sqrt);
        Dataset::new(self.features.clone(), self.responses.clone(), sd).ok()
    }
}

impl From<&Dataset> for LinearObservations {
    fn from(ds: &Dataset) -> Self {
        Self {
            features: ds.features().clone(),
            responses: ds.responses().cloned(),
            noise_covariance: ds.noise_covariance(),
        }
    }
}

/// A data production process that releases linear statistics `W·Y` of a
/// base dataset instead of the raw records.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearStatisticDpp {
    base: Dataset,
    weights: DMatrix<f64>,
}

impl LinearStatisticDpp {
    pub fn new(base: Dataset, weights: DMatrix<f64>) -> Result<Self> {
        if weights.ncols() != base.len() {
            return Err(Error::DimensionMismatch {
                context: "statistic weights",
                expected: base.len(),
                found: weights.ncols(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::invalid("statistic weights must be finite"));
        }
        Ok(Self { base, weights })
    }

    pub fn identity(base: Dataset) -> Self {
        let n = base.len();
        Self {
            base,
            weights: DMatrix::identity(n, n),
        }
    }

    pub fn base(&self) -> &Dataset {
        &self.base
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// `W Σ Wᵀ`.
    pub fn derived_noise_covariance(&self) -> DMatrix<f64> {
        let mut c = &self.weights * self.base.noise_covariance() * self.weights.transpose();
        linalg::symmetrize(&mut c);
        c
    }

    pub fn is_correlated(&self) -> bool {
        let c = self.derived_noise_covariance();
        let scale = max_abs(&c);
        let m = c.nrows();
        (0..m).any(|i| (0..m).any(|j| i != j && c[(i, j)].abs() > 1e-15 * scale))
    }

    /// Derived observations `(W·X, W·Y, W·Σ·Wᵀ)`.
    pub fn transform(&self) -> Result<LinearObservations> {
        let cov = self.derived_noise_covariance();
        if cov.nrows() > 0 {
            let ratio = linalg::eigen_ratio(&cov);
            if !(ratio > linalg::SINGULAR_RTOL) {
                return Err(Error::Singular {
                    what: "derived noise covariance",
                    ratio,
                });
            }
        }
        LinearObservations::new(
            &self.weights * self.base.features(),
            self.base.responses().map(|y| &self.weights * y),
            cov,
        )
    }
}
