use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::grid::TypeGrid;
use super::report::{VerificationReport, Witness};
use crate::error::{Error, Result};
use crate::linalg::quad_form;
use crate::mechanisms::{Mechanism, MechanismQuote};

/// Default tolerance for exact mechanisms.
pub const IC_TOLERANCE: f64 = 1e-9;

/// Quote data needed to value a report's allocation for any true type.
pub(crate) struct PricedReport {
    pub payment: f64,
    pub posterior: DMatrix<f64>,
}

impl PricedReport {
    /// Value of this allocation to the unit type `x` under `N(0, I)`.
    pub fn value_to(&self, x: &DVector<f64>) -> f64 {
        (-0.5 * quad_form(&self.posterior, x).ln()).max(0.0)
    }
}

pub(crate) fn price_grid<M: Mechanism + ?Sized>(mechanism: &M, grid: &TypeGrid) -> Result<Vec<PricedReport>> {
    if grid.is_empty() {
        return Err(Error::invalid("type grid is empty"));
    }
    if grid.dim() != mechanism.dim() {
        return Err(Error::DimensionMismatch {
            context: "type grid",
            expected: mechanism.dim(),
            found: grid.dim(),
        });
    }
    let results: Vec<Result<PricedReport>> = grid
        .points()
        .par_iter()
        .enumerate()
        .map(|(index, x)| {
            let attach = |e: Error| Error::Mechanism {
                index,
                report: x.iter().copied().collect(),
                source: Box::new(e),
            };
            let q = mechanism.quote(x).map_err(attach)?;
            let posterior = q.posterior_covariance().map_err(attach)?;
            Ok(PricedReport {
                payment: q.payment_nats,
                posterior,
            })
        })
        .collect();
    // Serial pass so the reported failure is always the first grid index.
    results.into_iter().collect()
}

/// Largest gain from misreporting over all ordered pairs of grid types:
/// `V(x, g[x̂]) − t(x̂) − [V(x, g[x]) − t(x)]`.
///
/// Ties go to the lexicographically smallest `(true, report)` index pair,
/// so the witness does not depend on the thread count.
pub fn check_ic<M: Mechanism + ?Sized>(mechanism: &M, grid: &TypeGrid, tol: f64) -> Result<VerificationReport> {
    let priced = price_grid(mechanism, grid)?;
    let pts = grid.points();
    let d = grid.dim();
    let width = d * (d + 1) / 2;
    // Upper triangles of the posteriors, off-diagonals doubled, so that
    // xᵀPx is a dot product with the monomials x_a x_b (a ≤ b).
    let mut packed = Vec::with_capacity(priced.len() * width);
    for p in &priced {
        for a in 0..d {
            packed.push(p.posterior[(a, a)]);
            for b in a + 1..d {
                packed.push(p.posterior[(a, b)] + p.posterior[(b, a)]);
            }
        }
    }
    let weights: Vec<f64> = priced.iter().map(|p| (2.0 * p.payment).exp()).collect();
    let rows: Vec<(f64, usize)> = pts
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut mono = Vec::with_capacity(width);
            for a in 0..d {
                for b in a..d {
                    mono.push(x[a] * x[b]);
                }
            }
            // max_j −½ln(min(q_ij, 1)) − t_j = −½ln(min_j min(q_ij, 1)·e^{2t_j}),
            // so the search needs no logarithms; the winner is re-valued exactly.
            let mut best = (f64::INFINITY, 0);
            for (j, (row, w)) in packed.chunks_exact(width).zip(&weights).enumerate() {
                let q: f64 = row.iter().zip(&mono).map(|(p, m)| p * m).sum();
                let r = q.min(1.0) * w;
                if r < best.0 {
                    best = (r, j);
                }
            }
            let truthful = priced[i].value_to(x) - priced[i].payment;
            let j = best.1;
            (priced[j].value_to(x) - priced[j].payment - truthful, j)
        })
        .collect();
    let (mut worst, mut wi, mut wj) = (f64::NEG_INFINITY, 0, 0);
    for (i, &(gain, j)) in rows.iter().enumerate() {
        if gain > worst {
            (worst, wi, wj) = (gain, i, j);
        }
    }
    Ok(VerificationReport::new(
        format!("ic[{}]", mechanism.name()),
        worst,
        Witness::Pair {
            true_index: wi,
            report_index: wj,
            x: pts[wi].iter().copied().collect(),
            x_hat: pts[wj].iter().copied().collect(),
        },
        grid.len(),
        tol,
    ))
}

/// Largest excess of payment over truthful value, `t(x) − V(x, g[x])`.
pub fn check_ir<M: Mechanism + ?Sized>(mechanism: &M, grid: &TypeGrid, tol: f64) -> Result<VerificationReport> {
    let priced = price_grid(mechanism, grid)?;
    let (mut worst, mut wi) = (f64::NEG_INFINITY, 0);
    for (i, (x, p)) in grid.points().iter().zip(&priced).enumerate() {
        let excess = p.payment - p.value_to(x);
        if excess > worst {
            (worst, wi) = (excess, i);
        }
    }
    Ok(VerificationReport::new(
        format!("ir[{}]", mechanism.name()),
        worst,
        Witness::Point {
            index: wi,
            x: grid.points()[wi].iter().copied().collect(),
        },
        grid.len(),
        tol,
    ))
}

/// Buyer surplus `V(x, g[x]) − t(x)` at every grid type.
pub fn buyer_surplus<M: Mechanism + ?Sized>(mechanism: &M, grid: &TypeGrid) -> Result<Vec<f64>> {
    let priced = price_grid(mechanism, grid)?;
    Ok(grid
        .points()
        .iter()
        .zip(&priced)
        .map(|(x, p)| p.value_to(x) - p.payment)
        .collect())
}

/// Wraps a mechanism and shifts its price, either everywhere or only for
/// reports along one direction. Used to confirm the checks catch faults.
pub struct PaymentShift<M> {
    inner: M,
    shift: f64,
    target: Option<DVector<f64>>,
}

impl<M: Mechanism> PaymentShift<M> {
    pub fn everywhere(inner: M, shift: f64) -> Self {
        Self {
            inner,
            shift,
            target: None,
        }
    }

    pub fn at(inner: M, target: &DVector<f64>, shift: f64) -> Self {
        Self {
            inner,
            shift,
            target: Some(target.normalize()),
        }
    }
}

impl<M: Mechanism> Mechanism for PaymentShift<M> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn quote(&self, report: &DVector<f64>) -> Result<MechanismQuote> {
        let mut q = self.inner.quote(report)?;
        let hit = self
            .target
            .as_ref()
            .is_none_or(|t| (t - &q.reported_type).amax() <= 1e-12);
        if hit {
            q.payment_nats += self.shift;
        }
        Ok(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::{Dataset, NoiseModel};
    use crate::mechanisms::{FullRevealMechanism, PerfectMechanism, SvdMechanism};

    fn golden() -> Dataset {
        Dataset::from_rows(
            &[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            None,
            vec![1.0; 4],
        )
        .unwrap()
    }

    #[test]
    fn perfect_mechanism_passes() {
        let m = PerfectMechanism::new(2, 5, NoiseModel::constant(1.0)).unwrap();
        let g = TypeGrid::angular_mesh(72).unwrap();
        assert!(check_ic(&m, &g, IC_TOLERANCE).unwrap().passed);
        let ir = check_ir(&m, &g, 1e-10).unwrap();
        assert!(ir.passed && ir.worst_violation.abs() < 1e-10);
    }

    #[test]
    fn svd_mechanism_passes() {
        let m = SvdMechanism::new(&golden()).unwrap();
        let g = TypeGrid::angular_mesh(72).unwrap();
        assert!(check_ic(&m, &g, IC_TOLERANCE).unwrap().passed);
        assert!(check_ir(&m, &g, 1e-10).unwrap().passed);
    }

    #[test]
    fn full_reveal_fails_with_axis_witness() {
        let m = FullRevealMechanism::new(&golden());
        let g = TypeGrid::angular_mesh(720).unwrap();
        let r = check_ic(&m, &g, IC_TOLERANCE).unwrap();
        assert!(!r.passed);
        assert!((r.worst_violation - 0.5 * 2f64.ln()).abs() < 1e-12);
        match r.witness {
            Witness::Pair { true_index, report_index, .. } => {
                assert_eq!((true_index, report_index), (0, 180));
            }
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn inflated_price_breaks_ir() {
        let m = PaymentShift::everywhere(PerfectMechanism::new(2, 5, NoiseModel::constant(1.0)).unwrap(), 0.1);
        let r = check_ir(&m, &TypeGrid::angular_mesh(36).unwrap(), 1e-10).unwrap();
        assert!(!r.passed);
        assert!((r.worst_violation - 0.1).abs() < 1e-12);
    }

    #[test]
    fn single_point_discount_is_caught_with_its_witness() {
        let g = TypeGrid::angular_mesh(36).unwrap();
        let target = g.points()[7].clone();
        let m = PaymentShift::at(SvdMechanism::new(&golden()).unwrap(), &target, -0.05);
        let r = check_ic(&m, &g, IC_TOLERANCE).unwrap();
        assert!(!r.passed);
        match r.witness {
            Witness::Pair { report_index, .. } => assert_eq!(report_index, 7),
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn dimension_mismatch_and_empty_grid() {
        let m = PerfectMechanism::new(3, 5, NoiseModel::constant(1.0)).unwrap();
        assert!(check_ic(&m, &TypeGrid::angular_mesh(4).unwrap(), 1e-9).is_err());
    }

    #[test]
    fn mechanism_errors_carry_the_grid_point() {
        let m = crate::mechanisms::MabMechanism::new(&golden()).unwrap();
        let err = check_ic(&m, &TypeGrid::angular_mesh(8).unwrap(), 1e-9).unwrap_err();
        assert!(matches!(err, Error::Mechanism { index: 1, .. }));
    }
}
