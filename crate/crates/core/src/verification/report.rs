use serde::Serialize;

/// The grid input that produced a check's worst value.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    None,
    Point {
        index: usize,
        x: Vec<f64>,
    },
    Pair {
        true_index: usize,
        report_index: usize,
        x: Vec<f64>,
        x_hat: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub check_name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub witness: Witness,
    pub grid_size: usize,
    pub tolerance: f64,
}

impl VerificationReport {
    pub fn new(
        check_name: impl Into<String>,
        worst_violation: f64,
        witness: Witness,
        grid_size: usize,
        tolerance: f64,
    ) -> Self {
        Self {
            check_name: check_name.into(),
            passed: worst_violation <= tolerance,
            worst_violation,
            witness,
            grid_size,
            tolerance,
        }
    }
}
