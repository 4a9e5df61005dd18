use thiserror::Error;

use crate::scenario::{TaxSchedule, ValidationReport};

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum CoreError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(ValidationReport),

    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("{what} index {index} out of range (len {len})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("tax rate tau[{sector}][{market}] = {value} is outside [0, 1]")]
    InvalidTax {
        sector: usize,
        market: usize,
        value: f64,
    },

    #[error("open-access system is singular (|det(I - B)| = {determinant:e})")]
    SingularSystem { determinant: f64 },

    #[error("no valid open-access equilibrium: {detail}")]
    NoValidEquilibrium { detail: String },

    #[error("survival probability {survival} outside [0, 1] at the solution")]
    PhysicallyInvalid { survival: f64 },

    #[error("active set changes inside the difference stencil: {detail}")]
    ActiveSetChange { detail: String },

    #[error("equilibrium debris does not decrease with abatement (dD/dQ = {slope})")]
    NonDecreasingDebris { slope: f64 },

    #[error("tax optimization failed: {detail}")]
    SolverFailure { detail: String },

    #[error("best-response iteration did not converge after {iterations} iterations (last update {update_norm:e})")]
    NoConvergence {
        iterations: usize,
        update_norm: f64,
        last: Box<TaxSchedule>,
    },

    #[error("fixed-point iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    IterationDiverged {
        iterations: usize,
        last_change: f64,
        trace: Vec<f64>,
    },

    #[error("grid of {points} points exceeds the evaluation budget")]
    BudgetExceeded { points: u128 },

    #[error("argument out of domain: {0}")]
    Domain(String),
}

impl CoreError {
    /// Stable machine-readable tag.
    pub fn kind(&self) -> &'static str {
        match self {
            CoreError::InvalidScenario(_) => "invalid_scenario",
            CoreError::DimensionMismatch { .. } => "dimension_mismatch",
            CoreError::IndexOutOfRange { .. } => "index_out_of_range",
            CoreError::InvalidTax { .. } => "invalid_tax",
            CoreError::SingularSystem { .. } => "singular_system",
            CoreError::NoValidEquilibrium { .. } => "no_valid_equilibrium",
            CoreError::PhysicallyInvalid { .. } => "physically_invalid",
            CoreError::ActiveSetChange { .. } => "active_set_change",
            CoreError::NonDecreasingDebris { .. } => "non_decreasing_debris",
            CoreError::SolverFailure { .. } => "solver_failure",
            CoreError::NoConvergence { .. } => "no_convergence",
            CoreError::IterationDiverged { .. } => "iteration_diverged",
            CoreError::BudgetExceeded { .. } => "budget_exceeded",
            CoreError::Domain(_) => "domain",
        }
    }
}
