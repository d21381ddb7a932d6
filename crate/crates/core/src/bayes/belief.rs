use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, max_abs};

/// Gaussian belief `N(mean, covariance)` over the regression parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::invalid("belief dimension must be at least 1"));
        }
        if covariance.nrows() != d || covariance.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "belief covariance",
                expected: d,
                found: if covariance.nrows() != d {
                    covariance.nrows()
                } else {
                    covariance.ncols()
                },
            });
        }
        if mean.iter().chain(covariance.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariance("non-finite entry".into()));
        }
        let scale = max_abs(&covariance);
        let asym = max_abs(&(&covariance - covariance.transpose()));
        if asym > 1e-12 * scale {
            return Err(Error::InvalidCovariance(format!(
                "not symmetric (max asymmetry {asym:.3e})"
            )));
        }
        let eig = nalgebra::SymmetricEigen::new(covariance.clone());
        let lmax = eig.eigenvalues.max();
        if eig.eigenvalues.iter().any(|&l| l < -1e-10 * lmax.abs()) {
            return Err(Error::InvalidCovariance("not positive semidefinite".into()));
        }
        Ok(Self { mean, covariance })
    }

    /// The standard normal prior `N(0, I_d)`.
    pub fn standard(d: usize) -> Self {
        assert!(d >= 1, "belief dimension must be at least 1");
        Self {
            mean: DVector::zeros(d),
            covariance: DMatrix::identity(d, d),
        }
    }

    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d) * variance)
    }

    pub(crate) fn from_parts_unchecked(mean: DVector<f64>, covariance: DMatrix<f64>) -> Self {
        Self { mean, covariance }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn is_standard(&self) -> bool {
        self.mean.iter().all(|&m| m == 0.0) && self.covariance == DMatrix::identity(self.dim(), self.dim())
    }

    /// Inverse covariance; fails when the covariance is singular.
    pub fn precision(&self) -> Result<DMatrix<f64>> {
        linalg::sym_inverse(&self.covariance, "prior covariance")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BeliefFile::from(self)).expect("belief serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: BeliefFile = serde_json::from_str(text).map_err(|e| Error::Parse {
            what: "belief JSON",
            message: e.to_string(),
        })?;
        file.try_into()
    }
}

/// On-disk form: `{ "mean": [...], "covariance": [[...], ...] }`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BeliefFile {
    pub mean: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

impl From<&GaussianBelief> for BeliefFile {
    fn from(b: &GaussianBelief) -> Self {
        Self {
            mean: b.mean.iter().copied().collect(),
            covariance: b
                .covariance
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
        }
    }
}

impl TryFrom<BeliefFile> for GaussianBelief {
    type Error = Error;

    fn try_from(file: BeliefFile) -> Result<Self> {
        let d = file.mean.len();
        if file.covariance.len() != d {
            return Err(Error::DimensionMismatch {
                context: "belief covariance rows",
                expected: d,
                found: file.covariance.len(),
            });
        }
        let mut flat = Vec::with_capacity(d * d);
        for row in &file.covariance {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "belief covariance columns",
                    expected: d,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        GaussianBelief::new(
            DVector::from_vec(file.mean),
            DMatrix::from_row_slice(d, d, &flat),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_asymmetric_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]);
        assert!(matches!(
            GaussianBelief::new(DVector::zeros(2), cov),
            Err(Error::InvalidCovariance(_))
        ));
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(GaussianBelief::new(DVector::zeros(2), cov).is_err());
    }

    #[test]
    fn accepts_singular_psd_covariance() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = GaussianBelief::new(DVector::zeros(2), cov).unwrap();
        assert!(matches!(b.precision(), Err(Error::Singular { .. })));
    }

    #[test]
    fn zero_dimension_rejected() {
        assert!(GaussianBelief::new(DVector::zeros(0), DMatrix::zeros(0, 0)).is_err());
    }

    #[test]
    fn json_round_trip() {
        let b = GaussianBelief::new(
            DVector::from_vec(vec![0.25, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let back = GaussianBelief::from_json(&b.to_json()).unwrap();
        assert_eq!(b, back);
    }
}
