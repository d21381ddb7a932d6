use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bayes::{posterior_covariance, GaussianBelief, LinearObservations};
use crate::error::Result;
use crate::valuation::{canonical_value_observations, ValuationQuery};

/// Maps the variance ratio `prior / posterior` along a direction to a price
/// in nats. Information gain, `½ ln(ratio)`, is the only shipped curve.
pub type PriceCurve = fn(f64) -> f64;

pub fn information_gain_curve(variance_ratio: f64) -> f64 {
    0.5 * variance_ratio.ln()
}

/// What the seller hands over for a report, and what it costs.
#[derive(Debug, Clone, PartialEq)]
pub struct MechanismQuote {
    pub allocation: LinearObservations,
    pub payment_nats: f64,
    /// Report renormalized to the unit sphere.
    pub reported_type: DVector<f64>,
    pub raw_report: DVector<f64>,
}

impl MechanismQuote {
    /// Value of the allocation to a buyer of type `x` under the standard prior.
    pub fn value_to(&self, x: &DVector<f64>) -> Result<f64> {
        canonical_value_observations(&ValuationQuery::standard(x.clone())?, &self.allocation)
    }

    /// Posterior covariance of `β` after the allocation, from `N(0, I)`.
    pub fn posterior_covariance(&self) -> Result<DMatrix<f64>> {
        posterior_covariance(&GaussianBelief::standard(self.allocation.dim()), &self.allocation)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(QuoteJson::from(self)).expect("quote serializes")
    }
}

/// Serialized quote: `{ "payment_nats", "allocation": { "features", "responses", "noise" }, ... }`.
/// `noise` lists per-record noise standard deviations.
#[derive(Debug, Clone, Serialize)]
pub struct QuoteJson {
    pub payment_nats: f64,
    pub allocation: AllocationJson,
    pub reported_type: Vec<f64>,
    pub raw_report: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationJson {
    pub features: Vec<Vec<f64>>,
    pub responses: Option<Vec<f64>>,
    pub noise: Vec<f64>,
    pub correlated: bool,
}

impl From<&MechanismQuote> for QuoteJson {
    fn from(q: &MechanismQuote) -> Self {
        let a = &q.allocation;
        Self {
            payment_nats: q.payment_nats,
            allocation: AllocationJson {
                features: a
                    .features()
                    .row_iter()
                    .map(|r| r.iter().copied().collect())
                    .collect(),
                responses: a.responses().map(|y| y.iter().copied().collect()),
                noise: a.noise_covariance().diagonal().iter().map(|v| v.sqrt()).collect(),
                correlated: a.is_correlated(),
            },
            reported_type: q.reported_type.iter().copied().collect(),
            raw_report: q.raw_report.iter().copied().collect(),
        }
    }
}

/// A direct-revelation pricing mechanism: report in, quote out.
pub trait Mechanism: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn quote(&self, report: &DVector<f64>) -> Result<MechanismQuote>;
}

impl<M: Mechanism + ?Sized> Mechanism for &M {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn quote(&self, report: &DVector<f64>) -> Result<MechanismQuote> {
        (**self).quote(report)
    }
}

impl<M: Mechanism + ?Sized> Mechanism for Box<M> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn quote(&self, report: &DVector<f64>) -> Result<MechanismQuote> {
        (**self).quote(report)
    }
}
