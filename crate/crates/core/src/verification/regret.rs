use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use super::grid::TypeGrid;
use crate::bayes::Dataset;
use crate::error::{Error, Result};
use crate::mechanisms::{first_best, Mechanism, SvdDecomposition, SvdMechanism};

pub const REGRET_TOLERANCE: f64 = 1e-9;

/// Per-type regret of the SVD mechanism against the first-best benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegretAudit {
    pub per_point_regret: Vec<f64>,
    pub first_best: Vec<f64>,
    pub payments: Vec<f64>,
    /// `½ ln` of the regret ratio written in the singular basis of the design;
    /// algebraically equal to the regret, so it bounds it up to rounding.
    pub sharp_bound: Vec<f64>,
    pub max_regret: f64,
    pub argmax_regret: usize,
    pub min_regret: f64,
    pub kappa: f64,
    pub bound_ln_kappa: f64,
    /// Largest per-point sharp bound over the grid.
    pub instance_sharp_bound: f64,
    pub tolerance: f64,
    pub within_ln_kappa: bool,
    pub within_sharp_bound: bool,
    pub nonnegative: bool,
    pub passed: bool,
}

/// `f(λ, y) = Σ y²/λ² / [(Σ (1+λ²)/λ² · y²)(Σ y²/(1+λ²))]` for `y = V x`.
pub fn sharp_ratio(prep: &SvdDecomposition, x: &DVector<f64>) -> f64 {
    let y = &prep.v * x;
    let (mut num, mut a, mut c) = (0.0, 0.0, 0.0);
    for (yi, l) in y.iter().zip(prep.singular_values.iter()) {
        let y2 = yi * yi;
        let l2 = l * l;
        num += y2 / l2;
        a += (1.0 + l2) / l2 * y2;
        c += y2 / (1.0 + l2);
    }
    num / (a * c)
}

pub fn regret_audit(data: &Dataset, grid: &TypeGrid) -> Result<RegretAudit> {
    regret_audit_with_tolerance(data, grid, REGRET_TOLERANCE)
}

pub fn regret_audit_with_tolerance(data: &Dataset, grid: &TypeGrid, tol: f64) -> Result<RegretAudit> {
    if grid.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "type grid",
            expected: data.dim(),
            found: grid.dim(),
        });
    }
    if grid.is_empty() {
        return Err(Error::invalid("type grid is empty"));
    }
    let mech = SvdMechanism::new(data)?;
    let prep = mech.decomposition();
    let kappa = prep.condition_number();
    let rows: Vec<Result<(f64, f64, f64)>> = grid
        .points()
        .par_iter()
        .map(|x| {
            let fb = first_best(x, data)?;
            let pay = mech.quote(x)?.payment_nats;
            Ok((fb, pay, 0.5 * sharp_ratio(prep, x).ln()))
        })
        .collect();
    let rows: Vec<(f64, f64, f64)> = rows.into_iter().collect::<Result<_>>()?;

    let first_best: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let payments: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let sharp_bound: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let regret: Vec<f64> = rows.iter().map(|r| r.0 - r.1).collect();

    let (mut max_regret, mut argmax) = (f64::NEG_INFINITY, 0);
    for (i, &r) in regret.iter().enumerate() {
        if r > max_regret {
            (max_regret, argmax) = (r, i);
        }
    }
    let min_regret = regret.iter().copied().fold(f64::INFINITY, f64::min);
    let instance_sharp_bound = sharp_bound.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let bound_ln_kappa = kappa.ln();
    let within_ln_kappa = max_regret <= bound_ln_kappa + tol;
    let within_sharp_bound = regret.iter().zip(&sharp_bound).all(|(r, s)| *r <= s + tol);
    let nonnegative = min_regret >= -1e-10;
    Ok(RegretAudit {
        per_point_regret: regret,
        first_best,
        payments,
        sharp_bound,
        max_regret,
        argmax_regret: argmax,
        min_regret,
        kappa,
        bound_ln_kappa,
        instance_sharp_bound,
        tolerance: tol,
        within_ln_kappa,
        within_sharp_bound,
        nonnegative,
        passed: within_ln_kappa && within_sharp_bound && nonnegative,
    })
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
    fn golden_regret_on_the_diagonal() {
        let a = regret_audit(&golden(), &TypeGrid::angular_mesh(720).unwrap()).unwrap();
        assert!(a.passed);
        // first best ½ ln(8/3) minus payment ½ ln(5/2)
        assert!((a.per_point_regret[90] - 0.5 * (16.0f64 / 15.0).ln()).abs() < 1e-12);
        assert!(a.per_point_regret[0].abs() < 1e-12);
        assert!((a.bound_ln_kappa - 3f64.sqrt().ln()).abs() < 1e-12);
        assert!(a.max_regret <= a.bound_ln_kappa);
    }

    #[test]
    fn sharp_ratio_matches_the_diagonal_by_hand() {
        let p = crate::mechanisms::svd_mechanism_prepare(&golden()).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]) / 2f64.sqrt();
        assert!((sharp_ratio(&p, &x) - 16.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn isotropic_design_has_no_regret() {
        let ds = Dataset::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0], vec![3.0, 3.0], vec![3.0, -3.0]], None, vec![1.0; 4]).unwrap();
        let a = regret_audit(&ds, &TypeGrid::angular_mesh(360).unwrap()).unwrap();
        assert!(a.max_regret <= 1e-9);
        assert!(a.bound_ln_kappa.abs() < 1e-12);
        assert!(a.passed);
    }

    #[test]
    fn rank_deficient_design_is_an_error() {
        let ds = Dataset::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0]], None, vec![1.0; 2]).unwrap();
        assert!(matches!(
            regret_audit(&ds, &TypeGrid::angular_mesh(8).unwrap()),
            Err(Error::RankDeficient { .. })
        ));
    }
}
