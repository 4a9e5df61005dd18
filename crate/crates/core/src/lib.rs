//! Equilibrium solvers for an orbit-use game: open-access satellite fleets,
//! national tax competition and debris-abatement treaties, together with the
//! brute-force verifiers that audit them.

pub mod error;
pub mod open_access;
pub mod oracle;
pub mod regulation;
pub mod sampling;
pub mod scenario;
pub mod treaty;
pub mod verification;

pub use error::{CoreError, Result};
pub use open_access::{
    assemble_system, check_assumptions, decompose, reduce_two_player, required_abatement,
    sensitivities, solve_equilibrium, AbatementMode, LinearSystem, OpenAccessEquilibrium,
    SensitivityMethod, SensitivityReport,
};
pub use scenario::{
    debris_stock, effective_prices, sector_profit, survival_probability, validate_scenario,
    AbatementProfile, DebrisState, Scenario, TaxSchedule, ValidationReport,
};
