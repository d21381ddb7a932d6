use nalgebra::{DMatrix, DVector};

use super::quote::{information_gain_curve, Mechanism, MechanismQuote, PriceCurve};
use crate::bayes::{Dataset, LinearObservations};
use crate::error::{Error, Result};

/// The SVD mechanism specialised to multi-armed-bandit designs, where every
/// record and every buyer type is a standard basis vector.
///
/// A report `e_j` receives the precision-weighted sum of the arm-`j`
/// records, feature `√P_j · e_j` with `P_j = Σ 1/σ_i²` over arm `j`, at
/// price `½ ln(1 + P_j)`.
#[derive(Debug, Clone)]
pub struct MabMechanism {
    data: Dataset,
    arms: Vec<Vec<usize>>,
    curve: PriceCurve,
}

impl MabMechanism {
    pub fn new(data: &Dataset) -> Result<Self> {
        let d = data.dim();
        let mut arms = vec![Vec::new(); d];
        for (i, row) in data.features().row_iter().enumerate() {
            let arm = basis_index(&row.transpose()).ok_or_else(|| {
                Error::invalid(format!("record {i} is not a standard basis vector"))
            })?;
            arms[arm].push(i);
        }
        Ok(Self {
            data: data.clone(),
            arms,
            curve: information_gain_curve,
        })
    }

    pub fn arm_counts(&self) -> Vec<usize> {
        self.arms.iter().map(Vec::len).collect()
    }

    /// `P_j = Σ_{i on arm j} 1/σ_i²`.
    pub fn arm_precision(&self, arm: usize) -> f64 {
        self.arms[arm]
            .iter()
            .map(|&i| self.data.noise_stddev()[i].powi(-2))
            .sum()
    }
}

/// Index `j` if `v` is exactly `e_j`.
fn basis_index(v: &DVector<f64>) -> Option<usize> {
    let mut hit = None;
    for (j, &e) in v.iter().enumerate() {
        if e == 1.0 && hit.is_none() {
            hit = Some(j);
        } else if e != 0.0 {
            return None;
        }
    }
    hit
}

impl Mechanism for MabMechanism {
    fn name(&self) -> &str {
        "mab"
    }

    fn dim(&self) -> usize {
        self.data.dim()
    }

    fn quote(&self, report: &DVector<f64>) -> Result<MechanismQuote> {
        let d = self.dim();
        if report.len() != d {
            return Err(Error::DimensionMismatch {
                context: "reported type",
                expected: d,
                found: report.len(),
            });
        }
        let norm = report.norm();
        let arm = if norm > 0.0 { basis_index(&(report / norm)) } else { None };
        let arm = arm.ok_or_else(|| Error::invalid("MAB reports must be standard basis vectors"))?;
        if self.arms[arm].is_empty() {
            return Err(Error::invalid(format!("arm {arm} has no observations")));
        }
        let precision = self.arm_precision(arm);
        let root = precision.sqrt();
        let sigma = self.data.noise_stddev();
        let response = self.data.responses().map(|y| {
            let combined: f64 = self.arms[arm]
                .iter()
                .map(|&i| (y[i] / sigma[i]) * (1.0 / sigma[i]) / root)
                .sum();
            DVector::from_element(1, combined)
        });
        let mut feature = DMatrix::zeros(1, d);
        feature[(0, arm)] = root;
        let mut unit = DVector::zeros(d);
        unit[arm] = 1.0;
        Ok(MechanismQuote {
            allocation: LinearObservations::new(feature, response, DMatrix::from_element(1, 1, 1.0))?,
            payment_nats: (self.curve)(1.0 + precision),
            reported_type: unit,
            raw_report: report.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{first_best, SvdMechanism};

    fn e(d: usize, j: usize) -> DVector<f64> {
        let mut v = DVector::zeros(d);
        v[j] = 1.0;
        v
    }

    fn design(counts: &[usize]) -> Dataset {
        let d = counts.len();
        let rows: Vec<Vec<f64>> = counts
            .iter()
            .enumerate()
            .flat_map(|(j, &c)| std::iter::repeat_n(e(d, j).iter().copied().collect(), c))
            .collect();
        let n = rows.len();
        Dataset::from_rows_with_dim(d, &rows, None, vec![1.0; n]).unwrap()
    }

    #[test]
    fn three_observations_on_an_arm() {
        let m = MabMechanism::new(&design(&[3, 1])).unwrap();
        let q = m.quote(&e(2, 0)).unwrap();
        assert!((q.payment_nats - 0.5 * 4f64.ln()).abs() < 1e-15);
        assert!((q.allocation.features()[(0, 0)] - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn arms_priced_by_their_own_counts() {
        let m = MabMechanism::new(&design(&[3, 1])).unwrap();
        let p1 = m.quote(&e(2, 0)).unwrap().payment_nats;
        let p2 = m.quote(&e(2, 1)).unwrap().payment_nats;
        assert!((p2 - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!(p2 < p1);
    }

    #[test]
    fn empty_arm_rejected() {
        let ds = design(&[3, 0, 2]);
        let m = MabMechanism::new(&ds).unwrap();
        assert!(m.quote(&e(3, 1)).is_err());
    }

    #[test]
    fn non_basis_inputs_rejected() {
        let m = MabMechanism::new(&design(&[1, 1])).unwrap();
        assert!(m.quote(&DVector::from_vec(vec![1.0, 1.0])).is_err());
        let bad = Dataset::from_rows(&[vec![1.0, 0.5]], None, vec![1.0]).unwrap();
        assert!(MabMechanism::new(&bad).is_err());
    }

    #[test]
    fn agrees_with_svd_and_first_best_under_heteroskedastic_noise() {
        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0]];
        let ds = Dataset::from_rows(&rows, Some(vec![0.5, 1.0, -0.2, 3.0]), vec![0.5, 2.0, 1.5, 0.7]).unwrap();
        let mab = MabMechanism::new(&ds).unwrap();
        let svd = SvdMechanism::new(&ds).unwrap();
        for j in 0..3 {
            let a = mab.quote(&e(3, j)).unwrap();
            let b = svd.quote(&e(3, j)).unwrap();
            assert!((a.payment_nats - b.payment_nats).abs() < 1e-10);
            assert!((a.payment_nats - first_best(&e(3, j), &ds).unwrap()).abs() < 1e-12);
            let ya = a.allocation.responses().unwrap()[0];
            let yb = b.allocation.responses().unwrap()[0];
            assert!((ya - yb).abs() < 1e-10);
        }
    }
}
