//! Independent numerical checks of the equilibrium claims.

mod analytic;
mod best_response;
mod funded;
mod report;
mod timing;

pub use analytic::{low_unfunded_profile, verify_bstar, verify_indifference, verify_low_monotonicity, GridSpec};
pub use best_response::{best_response_check, DeviationGrid, MAX_AGENTS, MAX_DEADLINE};
pub use funded::verify_funded_at_equilibrium;
pub use report::{Counterexample, OracleReport, Status};
pub use timing::{verify_timing, MIN_MC_RUNS};
