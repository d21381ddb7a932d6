use serde::Serialize;

use super::grid::TypeGrid;
use super::report::Witness;
use crate::bayes::Dataset;
use crate::error::{Error, Result};
use crate::mechanisms::{anisotropy, condition_number, first_best};

/// Relative departure of the normalized Gram matrix from `c·I` below which
/// the design is treated as isotropic.
pub const ISOTROPY_TOLERANCE: f64 = 1e-13;

/// Smallest deviation gain accepted as a witness.
pub const MIN_WITNESS_GAIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpossibilityOutcome {
    /// Every direction is equally informative; first-best revenue is attainable.
    Isotropic,
    /// A profitable misreport against the full-surplus mechanism was found.
    Witness,
    /// The design is anisotropic but no grid pair beats [`MIN_WITNESS_GAIN`].
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpossibilityReport {
    pub is_isotropic: bool,
    pub outcome: ImpossibilityOutcome,
    pub anisotropy: f64,
    pub deviation_gain: f64,
    pub deviation_witness: Witness,
    pub grid_size: usize,
    pub note: String,
}

/// Looks for a profitable misreport against the candidate first-best
/// mechanism (hand over everything, charge the reported type's full value).
///
/// Under that mechanism a type `x` reporting `x̂` gains
/// `V_full(x) − V_full(x̂)`, so the best pair is the grid's most and least
/// valuable types. The witness is one mechanism on one grid; it shows where
/// first-best pricing breaks, not that every mechanism fails.
pub fn impossibility_demo(data: &Dataset, grid: &TypeGrid) -> Result<ImpossibilityReport> {
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
    let k = condition_number(data);
    if k.rank_deficient {
        return Err(Error::RankDeficient {
            ratio: k.singular_values.last().copied().unwrap_or(0.0)
                / k.singular_values.first().copied().unwrap_or(1.0),
        });
    }
    let aniso = anisotropy(data);
    let scope = "witness is for the full-surplus candidate on this grid only";
    if aniso <= ISOTROPY_TOLERANCE {
        return Ok(ImpossibilityReport {
            is_isotropic: true,
            outcome: ImpossibilityOutcome::Isotropic,
            anisotropy: aniso,
            deviation_gain: 0.0,
            deviation_witness: Witness::None,
            grid_size: grid.len(),
            note: "normalized Gram matrix is a multiple of the identity; first-best revenue is attainable".into(),
        });
    }
    let values: Vec<f64> = grid
        .points()
        .iter()
        .map(|x| first_best(x, data))
        .collect::<Result<_>>()?;
    let (mut hi, mut lo) = (0, 0);
    for (i, &v) in values.iter().enumerate() {
        if v > values[hi] {
            hi = i;
        }
        if v < values[lo] {
            lo = i;
        }
    }
    let gain = values[hi] - values[lo];
    let witness = Witness::Pair {
        true_index: hi,
        report_index: lo,
        x: grid.points()[hi].iter().copied().collect(),
        x_hat: grid.points()[lo].iter().copied().collect(),
    };
    let (outcome, note) = if gain > MIN_WITNESS_GAIN {
        (ImpossibilityOutcome::Witness, scope.to_string())
    } else {
        (
            ImpossibilityOutcome::Inconclusive,
            format!("anisotropy {aniso:.3e} too small for this grid to exhibit a gain above {MIN_WITNESS_GAIN:e}"),
        )
    };
    Ok(ImpossibilityReport {
        is_isotropic: false,
        outcome,
        anisotropy: aniso,
        deviation_gain: gain,
        deviation_witness: witness,
        grid_size: grid.len(),
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::FullRevealMechanism;
    use crate::verification::{check_ic, IC_TOLERANCE};

    fn golden() -> Dataset {
        Dataset::from_rows(
            &[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            None,
            vec![1.0; 4],
        )
        .unwrap()
    }

    #[test]
    fn golden_witness() {
        let r = impossibility_demo(&golden(), &TypeGrid::angular_mesh(720).unwrap()).unwrap();
        assert_eq!(r.outcome, ImpossibilityOutcome::Witness);
        assert!((r.deviation_gain - 0.5 * 2f64.ln()).abs() < 1e-12);
        match &r.deviation_witness {
            Witness::Pair { x, x_hat, .. } => {
                assert_eq!(x.as_slice(), &[1.0, 0.0]);
                assert_eq!(x_hat.as_slice(), &[-0.0, 1.0]);
            }
            other => panic!("unexpected witness {other:?}"),
        }
    }

    #[test]
    fn witness_agrees_with_the_ic_grid_check() {
        let g = TypeGrid::angular_mesh(360).unwrap();
        let r = impossibility_demo(&golden(), &g).unwrap();
        let ic = check_ic(&FullRevealMechanism::new(&golden()), &g, IC_TOLERANCE).unwrap();
        assert!((ic.worst_violation - r.deviation_gain).abs() < 1e-12);
        assert_eq!(ic.witness, r.deviation_witness);
    }

    #[test]
    fn isotropic_design() {
        let ds = Dataset::from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0]], None, vec![1.0, 1.0]).unwrap();
        let r = impossibility_demo(&ds, &TypeGrid::angular_mesh(720).unwrap()).unwrap();
        assert!(r.is_isotropic);
        assert_eq!(r.deviation_witness, Witness::None);
    }

    #[test]
    fn tiny_anisotropy_is_inconclusive() {
        let eps = 1e-12;
        let ds = Dataset::from_rows(&[vec![(1.0f64 + eps).sqrt(), 0.0], vec![0.0, 1.0]], None, vec![1.0, 1.0]).unwrap();
        let r = impossibility_demo(&ds, &TypeGrid::angular_mesh(720).unwrap()).unwrap();
        assert!(!r.is_isotropic);
        assert_eq!(r.outcome, ImpossibilityOutcome::Inconclusive);
        assert!(r.anisotropy > 0.0);
    }
}
