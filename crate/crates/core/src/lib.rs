//! Provision-point crowdfunding with refund bonuses and belief-based rewards:
//! payoff model, belief dynamics, reward computation, equilibrium strategies,
//! a deterministic simulator and numerical verification of the equilibrium
//! claims.

pub mod bbr;
pub mod belief;
pub mod engine;
pub mod equilibrium;
pub mod error;
pub mod model;
pub mod money;
pub mod oracle;
pub mod rng;
pub mod scenario;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Agent, BeliefClass, LowCapVariant, ProjectConfig};
pub use scenario::{Policy, Scenario};
