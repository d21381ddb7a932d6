//! Pricing mechanisms for data.
//!
//! [`PerfectMechanism`] extracts the buyer's full surplus when the seller can
//! produce fresh records along any direction. [`SvdMechanism`] prices a fixed
//! dataset by selling one linear combination of its records; its regret
//! against [`first_best`] is at most `ln κ` of the normalized design.
//! [`MabMechanism`] is its closed form on bandit designs.

mod benchmark;
mod mab;
mod perfect;
mod quote;
mod svd;

pub use benchmark::{
    anisotropy, condition_number, first_best, gram_condition_number, ConditionNumber,
    FullRevealMechanism,
};
pub use mab::MabMechanism;
pub use perfect::PerfectMechanism;
pub use quote::{
    information_gain_curve, AllocationJson, Mechanism, MechanismQuote, PriceCurve, QuoteJson,
};
pub use svd::{svd_mechanism_prepare, SvdDecomposition, SvdMechanism};
