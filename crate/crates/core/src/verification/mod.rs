//! Numeric certification of the mechanisms on finite grids of buyer types:
//! incentive compatibility, individual rationality, regret against the
//! first-best benchmark, the failure of first-best pricing on anisotropic
//! data, and the envelope form of the full-surplus price.

mod envelope;
mod grid;
mod ic;
mod impossibility;
mod regret;
mod report;

pub use envelope::{
    envelope_gradient_check, envelope_payment, envelope_payment_gradient, EnvelopeOptions,
    EnvelopeReport,
};
pub use grid::{GridGenerator, TypeGrid, DUPLICATE_ANGLE};
pub use ic::{buyer_surplus, check_ic, check_ir, PaymentShift, IC_TOLERANCE};
pub use impossibility::{
    impossibility_demo, ImpossibilityOutcome, ImpossibilityReport, ISOTROPY_TOLERANCE,
    MIN_WITNESS_GAIN,
};
pub use regret::{
    regret_audit, regret_audit_with_tolerance, sharp_ratio, RegretAudit, REGRET_TOLERANCE,
};
pub use report::{VerificationReport, Witness};
