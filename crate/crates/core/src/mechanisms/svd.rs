use nalgebra::{DMatrix, DVector};

use super::quote::{information_gain_curve, Mechanism, MechanismQuote, PriceCurve};
use crate::bayes::{Dataset, LinearObservations};
use crate::error::{Error, Result};
use crate::linalg::{self, SINGULAR_RTOL};

/// Singular value decomposition of a noise-normalized design `Z = Σ^{-1/2}X`,
/// written `Z = U·S·V` with `S = diag(λ₁ ≥ … ≥ λ_d)`, plus its left inverse
/// `L = U·S⁻¹·V` (so `LᵀZ = I`).
///
/// `U` is the thin `n × d` factor; the `n − d` trailing columns of a full
/// orthogonal `U` never enter `L` or the allocation. Rows of `V` are the
/// right singular vectors, each signed so its first nonzero entry is
/// positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdDecomposition {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
    pub left_inverse: DMatrix<f64>,
    pub normalized_design: DMatrix<f64>,
    pub normalized_responses: Option<DVector<f64>>,
}

impl SvdDecomposition {
    pub fn dim(&self) -> usize {
        self.singular_values.len()
    }

    pub fn records(&self) -> usize {
        self.normalized_design.nrows()
    }

    pub fn condition_number(&self) -> f64 {
        self.singular_values[0] / self.singular_values[self.dim() - 1]
    }

    /// `U·S·V`; equals the normalized design up to rounding.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.u * DMatrix::from_diagonal(&self.singular_values) * &self.v
    }

    /// Unit projection `b(x̂) = L x̂ / ‖L x̂‖`.
    pub fn projection(&self, report: &DVector<f64>) -> Result<DVector<f64>> {
        let lx = &self.left_inverse * report;
        let norm = lx.norm();
        // Cannot vanish for a full-rank decomposition and nonzero report.
        assert!(norm > 0.0, "left-inverse projection vanished for a nonzero report");
        Ok(lx / norm)
    }
}

/// Normalizes the design and computes its SVD and left inverse.
pub fn svd_mechanism_prepare(data: &Dataset) -> Result<SvdDecomposition> {
    let (n, d) = (data.len(), data.dim());
    if d == 0 {
        return Err(Error::invalid("design has no feature columns"));
    }
    if n < d {
        return Err(Error::RankDeficient { ratio: 0.0 });
    }
    let z = data.normalized_features();
    let svd = z.clone().svd(true, true);
    let u_raw = svd.u.expect("requested U");
    let vt_raw = svd.v_t.expect("requested Vᵀ");
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let lmax = svd.singular_values[order[0]];
    let lmin = svd.singular_values[order[d - 1]];
    if !(lmax > 0.0) || lmin <= SINGULAR_RTOL * lmax {
        return Err(Error::RankDeficient {
            ratio: if lmax > 0.0 { lmin / lmax } else { 0.0 },
        });
    }

    let mut u = DMatrix::zeros(n, d);
    let mut v = DMatrix::zeros(d, d);
    let mut s = DVector::zeros(d);
    for (k, &src) in order.iter().enumerate() {
        let row = vt_raw.row(src);
        let pivot = row.iter().copied().find(|e| e.abs() > 1e-12).unwrap_or(1.0);
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        v.row_mut(k).copy_from(&(row * sign));
        u.column_mut(k).copy_from(&(u_raw.column(src) * sign));
        s[k] = svd.singular_values[src];
    }
    let left_inverse = &u * DMatrix::from_diagonal(&s.map(|l| 1.0 / l)) * &v;
    Ok(SvdDecomposition {
        u,
        singular_values: s,
        v,
        left_inverse,
        normalized_design: z,
        normalized_responses: data.normalized_responses(),
    })
}

/// Limited-customization mechanism: the seller can only sell a linear
/// combination of her existing records.
///
/// A report `x̂` is answered with the single combined record
/// `(b(x̂)ᵀZ, b(x̂)ᵀY)` where `b(x̂) ∝ L x̂`, priced at the reporter's value
/// for it. The left inverse equalizes information across directions, which
/// makes truthful reporting optimal.
#[derive(Debug, Clone)]
pub struct SvdMechanism {
    prep: SvdDecomposition,
    curve: PriceCurve,
}

impl SvdMechanism {
    pub fn new(data: &Dataset) -> Result<Self> {
        Ok(Self::from_decomposition(svd_mechanism_prepare(data)?))
    }

    pub fn from_decomposition(prep: SvdDecomposition) -> Self {
        Self {
            prep,
            curve: information_gain_curve,
        }
    }

    pub fn decomposition(&self) -> &SvdDecomposition {
        &self.prep
    }

    /// Allocated feature `Zᵀ b(x̂)` for a unit report.
    fn allocated_feature(&self, b: &DVector<f64>) -> DVector<f64> {
        self.prep.normalized_design.transpose() * b
    }

    pub fn payment(&self, report: &DVector<f64>) -> Result<f64> {
        Ok(self.quote(report)?.payment_nats)
    }
}

/// Price of a single unit-noise record with feature `z` to the unit
/// reporter `u`: `curve(1 / uᵀ(I + zzᵀ)⁻¹u)`.
pub(crate) fn rank_one_price(curve: PriceCurve, u: &DVector<f64>, z: &DVector<f64>) -> f64 {
    let c = u.dot(z);
    let posterior_var = 1.0 - c * c / (1.0 + z.dot(z));
    curve(1.0 / posterior_var)
}

impl Mechanism for SvdMechanism {
    fn name(&self) -> &str {
        "svd"
    }

    fn dim(&self) -> usize {
        self.prep.dim()
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
        let b = self.prep.projection(&u)?;
        let z = self.allocated_feature(&b);
        let payment = rank_one_price(self.curve, &u, &z).max(0.0);
        let response = self
            .prep
            .normalized_responses
            .as_ref()
            .map(|y| DVector::from_element(1, b.dot(y)));
        let allocation = LinearObservations::new(
            DMatrix::from_row_slice(1, z.len(), z.as_slice()),
            response,
            DMatrix::from_element(1, 1, b.dot(&b)),
        )?;
        Ok(MechanismQuote {
            allocation,
            payment_nats: payment,
            reported_type: u,
            raw_report: report.clone(),
        })
    }
}
