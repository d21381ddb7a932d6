use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::quote::{Mechanism, MechanismQuote};
use crate::bayes::{Dataset, LinearObservations};
use crate::error::{Error, Result};
use crate::linalg::{self, SINGULAR_RTOL};
use crate::valuation::{canonical_value, ValuationQuery};

/// Full value of the whole dataset to type `x` under `N(0, I)`: the most
/// any individually rational mechanism can charge that type.
pub fn first_best(x: &DVector<f64>, data: &Dataset) -> Result<f64> {
    canonical_value(&ValuationQuery::standard(x.clone())?, data)
}

/// Condition number of the noise-normalized design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionNumber {
    /// `λ_max / λ_min`, or `+∞` when rank deficient.
    pub kappa: f64,
    pub rank_deficient: bool,
    pub singular_values: Vec<f64>,
}

impl ConditionNumber {
    /// `ln κ`, the regret bound of the SVD mechanism.
    pub fn ln_kappa(&self) -> f64 {
        self.kappa.ln()
    }
}

pub fn condition_number(data: &Dataset) -> ConditionNumber {
    let z = data.normalized_features();
    let d = data.dim();
    let mut sv: Vec<f64> = if data.is_empty() || d == 0 {
        vec![0.0; d]
    } else {
        z.singular_values().iter().copied().collect()
    };
    sv.resize(d, 0.0);
    sv.sort_by(|a, b| b.total_cmp(a));
    let max = sv.first().copied().unwrap_or(0.0);
    let min = sv.last().copied().unwrap_or(0.0);
    let deficient = data.len() < d || !(max > 0.0) || min <= SINGULAR_RTOL * max;
    ConditionNumber {
        kappa: if deficient { f64::INFINITY } else { max / min },
        rank_deficient: deficient,
        singular_values: sv,
    }
}

/// `√(λ_max/λ_min)` of the Gram matrix `XᵀΣ⁻¹X`; cross-check for
/// [`condition_number`].
pub fn gram_condition_number(data: &Dataset) -> f64 {
    let ratio = linalg::eigen_ratio(&data.information());
    if ratio > 0.0 {
        (1.0 / ratio).sqrt()
    } else {
        f64::INFINITY
    }
}

/// The candidate first-best mechanism under limited customization: hand
/// over the entire dataset and charge the reported type's full value. It is
/// not incentive compatible unless the design is isotropic.
#[derive(Debug, Clone)]
pub struct FullRevealMechanism {
    data: Dataset,
}

impl FullRevealMechanism {
    pub fn new(data: &Dataset) -> Self {
        Self { data: data.clone() }
    }
}

impl Mechanism for FullRevealMechanism {
    fn name(&self) -> &str {
        "full-reveal"
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn quote(&self, report: &DVector<f64>) -> Result<MechanismQuote> {
        if report.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "reported type",
                expected: self.dim(),
                found: report.len(),
            });
        }
        let u = linalg::unit(report, "reported type")?;
        Ok(MechanismQuote {
            allocation: LinearObservations::from(&self.data),
            payment_nats: first_best(&u, &self.data)?,
            reported_type: u,
            raw_report: report.clone(),
        })
    }
}

/// Normalized Gram matrix scaled to unit trace per dimension, minus `I`;
/// its largest entry measures departure from isotropy.
pub fn anisotropy(data: &Dataset) -> f64 {
    let g = data.information();
    let d = g.nrows();
    if d == 0 {
        return 0.0;
    }
    let c = g.trace() / d as f64;
    if !(c > 0.0) {
        return f64::INFINITY;
    }
    linalg::max_abs(&(g / c - DMatrix::identity(d, d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden() -> Dataset {
        Dataset::from_rows(
            &[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            None,
            vec![1.0; 4],
        )
        .unwrap()
    }

    #[test]
    fn golden_first_best_on_diagonal() {
        // (I + XᵀX)⁻¹ = diag(1/4, 1/2), so xᵀ(·)x = 3/8.
        let x = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        assert!((first_best(&x, &golden()).unwrap() - 0.5 * (8.0f64 / 3.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn empty_dataset_first_best_is_zero() {
        assert_eq!(first_best(&DVector::from_vec(vec![1.0, 0.0]), &Dataset::empty(2)).unwrap(), 0.0);
    }

    #[test]
    fn golden_kappa() {
        let k = condition_number(&golden());
        assert!(!k.rank_deficient);
        assert!((k.kappa - 3f64.sqrt()).abs() < 1e-12);
        assert!((gram_condition_number(&golden()) - k.kappa).abs() < 1e-9 * k.kappa);
    }

    #[test]
    fn isotropic_kappa_is_one() {
        let ds = Dataset::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]], None, vec![1.0, 1.0]).unwrap();
        assert!((condition_number(&ds).kappa - 1.0).abs() < 1e-12);
        assert!(anisotropy(&ds) < 1e-15);
    }

    #[test]
    fn common_noise_scale_leaves_kappa_unchanged() {
        let ds = Dataset::from_rows(&[vec![1.0, 0.2], vec![0.3, -1.0], vec![2.0, 1.0]], None, vec![0.5, 1.0, 2.0]).unwrap();
        let a = condition_number(&ds).kappa;
        let b = condition_number(&ds.with_noise_scaled(13.0).unwrap()).kappa;
        assert!((a - b).abs() < 1e-12 * a);
    }

    #[test]
    fn rank_deficient_design_flagged() {
        let ds = Dataset::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]], None, vec![1.0, 1.0]).unwrap();
        let k = condition_number(&ds);
        assert!(k.rank_deficient);
        assert!(k.kappa.is_infinite());
        assert!(condition_number(&Dataset::empty(2)).rank_deficient);
    }

    #[test]
    fn full_reveal_charges_reported_value() {
        let m = FullRevealMechanism::new(&golden());
        let q = m.quote(&DVector::from_vec(vec![0.0, 3.0])).unwrap();
        assert!((q.payment_nats - 0.5 * 2f64.ln()).abs() < 1e-15);
        let v = q.value_to(&DVector::from_vec(vec![1.0, 0.0])).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-14);
    }
}
