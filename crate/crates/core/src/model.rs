//! Domain types and the payoff algebra of the two-phase refund-bonus mechanism.
//!
//! Agents are split by their reported belief into a high-belief class (paid the
//! belief-based reward when the project is funded) and a low-belief class
//! (paid it when the project fails). Contributors to a failed project get their
//! money back plus a pro-rata share of the contribution-phase refund budget.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::money::DEFAULT_DECIMALS;

/// Which closed form to use for the low-belief contribution cap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LowCapVariant {
    /// `(H0·b·θ + H0·m·(1−b)) / (B_C·(1−b) + H0·b)`, as published.
    #[default]
    PaperVerbatim,
    /// `(H0·b·θ − H0·m·(1−b)) / (B_C·(1−b) + H0·b)`, floored at zero. Solves
    /// the funded/unfunded indifference condition exactly.
    Rederived,
}

impl LowCapVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            LowCapVariant::PaperVerbatim => "paper_verbatim",
            LowCapVariant::Rederived => "rederived",
        }
    }
}

fn default_decimals() -> u32 {
    DEFAULT_DECIMALS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    /// Provision point `H0`.
    pub provision_point: f64,
    /// Refund-bonus budget `B_C` of the contribution phase.
    pub contribution_budget: f64,
    /// Belief-based-reward budget `B_B` of the belief phase.
    pub belief_budget: f64,
    /// Number of belief-phase epochs `T_B`.
    pub belief_deadline: u32,
    /// Number of contribution-phase epochs `T_C`.
    pub contribution_deadline: u32,
    #[serde(default)]
    pub low_cap_variant: LowCapVariant,
    /// Decimal places kept when amounts enter the ledger.
    #[serde(default = "default_decimals")]
    pub money_decimals: u32,
}

impl ProjectConfig {
    pub fn new(provision_point: f64, contribution_budget: f64, belief_budget: f64) -> Self {
        ProjectConfig {
            provision_point,
            contribution_budget,
            belief_budget,
            belief_deadline: 1,
            contribution_deadline: 1,
            low_cap_variant: LowCapVariant::default(),
            money_decimals: DEFAULT_DECIMALS,
        }
    }

    pub fn with_deadlines(mut self, belief: u32, contribution: u32) -> Self {
        self.belief_deadline = belief;
        self.contribution_deadline = contribution;
        self
    }

    pub fn with_variant(mut self, variant: LowCapVariant) -> Self {
        self.low_cap_variant = variant;
        self
    }

    pub fn horizon(&self) -> u32 {
        self.belief_deadline + self.contribution_deadline
    }

    /// `B_C / H0`.
    pub fn budget_ratio(&self) -> f64 {
        self.contribution_budget / self.provision_point
    }

    pub fn validate(&self) -> Result<()> {
        positive("project.provision_point", self.provision_point)?;
        positive("project.contribution_budget", self.contribution_budget)?;
        positive("project.belief_budget", self.belief_budget)?;
        if self.belief_deadline < 1 {
            return Err(Error::validation("project.belief_deadline", "must be at least 1"));
        }
        if self.contribution_deadline < 1 {
            return Err(Error::validation(
                "project.contribution_deadline",
                "must be at least 1",
            ));
        }
        if self.money_decimals > 12 {
            return Err(Error::validation("project.money_decimals", "must be at most 12"));
        }
        Ok(())
    }
}

fn positive(field: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be a finite number > 0, got {value}")))
    }
}

/// An interested agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Agent {
    pub id: u32,
    /// Valuation `θ` of the public project.
    pub valuation: f64,
    /// Prior belief `b_{i,0}` that the project gets funded.
    pub prior_belief: f64,
    /// Arrival epoch in the belief phase, `1..=T_B`.
    pub arrival_belief: u32,
    /// Arrival epoch in the contribution phase, `1..=T_C`.
    pub arrival_contribution: u32,
}

impl Agent {
    pub fn validate(&self, cfg: &ProjectConfig, path: &str) -> Result<()> {
        if !(self.valuation.is_finite() && self.valuation >= 0.0) {
            return Err(Error::validation(
                format!("{path}.valuation"),
                format!("must be finite and >= 0, got {}", self.valuation),
            ));
        }
        check_probability(&format!("{path}.prior_belief"), self.prior_belief)?;
        if self.arrival_belief < 1 || self.arrival_belief > cfg.belief_deadline {
            return Err(Error::validation(
                format!("{path}.arrival_belief"),
                format!("must lie in 1..={}, got {}", cfg.belief_deadline, self.arrival_belief),
            ));
        }
        if self.arrival_contribution < 1 || self.arrival_contribution > cfg.contribution_deadline {
            return Err(Error::validation(
                format!("{path}.arrival_contribution"),
                format!(
                    "must lie in 1..={}, got {}",
                    cfg.contribution_deadline, self.arrival_contribution
                ),
            ));
        }
        Ok(())
    }
}

pub fn check_probability(field: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must lie in [0, 1], got {value}")))
    }
}

/// Total valuation `ϑ` must exceed the provision point.
pub fn check_sufficient_interest(agents: &[Agent], cfg: &ProjectConfig) -> Result<()> {
    let total: f64 = agents.iter().map(|a| a.valuation).sum();
    if total > cfg.provision_point {
        Ok(())
    } else {
        Err(Error::InsufficientInterest {
            total_valuation: total,
            provision_point: cfg.provision_point,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeliefClass {
    High,
    Low,
}

impl fmt::Display for BeliefClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BeliefClass::High => "high",
            BeliefClass::Low => "low",
        })
    }
}

/// High iff the reported belief is at least one half.
pub fn classify_agent(reported_belief: f64) -> Result<BeliefClass> {
    check_probability("reported_belief", reported_belief)?;
    Ok(if reported_belief >= 0.5 {
        BeliefClass::High
    } else {
        BeliefClass::Low
    })
}

/// Realized payoff of one agent once the outcome is known.
///
/// `reward` is the belief-based reward `m` the agent was announced; pass 0 for
/// agents that did not report in the belief phase. `total` is the final total
/// contribution `C0`, and `funded` must agree with `total >= H0`.
pub fn realized_payoff(
    class: BeliefClass,
    valuation: f64,
    contribution: f64,
    reward: f64,
    total: f64,
    funded: bool,
    cfg: &ProjectConfig,
) -> Result<f64> {
    if contribution < 0.0 {
        return Err(Error::validation("contribution", "must be >= 0"));
    }
    if funded != (total >= cfg.provision_point) {
        return Err(Error::ContractViolation(format!(
            "funded={funded} but C0={total} and H0={}",
            cfg.provision_point
        )));
    }
    if funded {
        return Ok(match class {
            BeliefClass::High => valuation - contribution + reward,
            BeliefClass::Low => valuation - contribution,
        });
    }
    let bonus = refund_bonus(contribution, total, cfg.contribution_budget)?;
    Ok(match class {
        BeliefClass::High => bonus,
        BeliefClass::Low => bonus + reward,
    })
}

/// Pro-rata refund bonus `(x / C0) · B_C`; zero for a zero contribution.
pub fn refund_bonus(contribution: f64, total: f64, budget: f64) -> Result<f64> {
    if contribution == 0.0 {
        return Ok(0.0);
    }
    if total <= 0.0 {
        return Err(Error::Arithmetic(format!(
            "refund share of x={contribution} against a total of {total}"
        )));
    }
    if total < contribution {
        return Err(Error::ContractViolation(format!(
            "contribution {contribution} exceeds total {total}"
        )));
    }
    Ok(contribution / total * budget)
}

/// Belief-weighted funded payoff `E[π^F]`.
pub fn expected_funded_payoff(
    class: BeliefClass,
    belief: f64,
    valuation: f64,
    contribution: f64,
    reward: f64,
) -> Result<f64> {
    check_probability("belief", belief)?;
    Ok(match class {
        BeliefClass::High => belief * (valuation - contribution + reward),
        BeliefClass::Low => belief * (valuation - contribution),
    })
}

/// Belief-weighted unfunded payoff `E[π^UF]` against a total of `total`.
pub fn expected_unfunded_payoff(
    class: BeliefClass,
    belief: f64,
    contribution: f64,
    total: f64,
    reward: f64,
    cfg: &ProjectConfig,
) -> Result<f64> {
    check_probability("belief", belief)?;
    if contribution > 0.0 && total <= 0.0 {
        return Err(Error::Arithmetic(format!(
            "refund share of x={contribution} against a total of {total}"
        )));
    }
    let share = if contribution == 0.0 {
        0.0
    } else {
        contribution / total * cfg.contribution_budget
    };
    Ok(match class {
        BeliefClass::High => (1.0 - belief) * share,
        BeliefClass::Low => (1.0 - belief) * (share + reward),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(h0: f64, bc: f64) -> ProjectConfig {
        ProjectConfig::new(h0, bc, 10.0)
    }

    #[test]
    fn classify_boundaries() {
        assert_eq!(classify_agent(0.5).unwrap(), BeliefClass::High);
        assert_eq!(classify_agent(0.0).unwrap(), BeliefClass::Low);
        assert_eq!(classify_agent(0.49999).unwrap(), BeliefClass::Low);
        assert_eq!(classify_agent(1.0).unwrap(), BeliefClass::High);
        assert!(matches!(classify_agent(1.01), Err(Error::Validation { .. })));
        assert!(classify_agent(-0.1).is_err());
        assert!(classify_agent(f64::NAN).is_err());
    }

    #[test]
    fn realized_payoff_examples() {
        let c = cfg(100.0, 100.0);
        let funded = realized_payoff(BeliefClass::High, 10.0, 6.0, 2.0, 100.0, true, &c).unwrap();
        assert_eq!(funded, 6.0);
        let high = realized_payoff(BeliefClass::High, 10.0, 5.0, 2.0, 50.0, false, &c).unwrap();
        assert_eq!(high, 10.0);
        let low = realized_payoff(BeliefClass::Low, 10.0, 5.0, 2.0, 50.0, false, &c).unwrap();
        assert_eq!(low, 12.0);
        let low_funded = realized_payoff(BeliefClass::Low, 10.0, 5.0, 2.0, 100.0, true, &c).unwrap();
        assert_eq!(low_funded, 5.0);
    }

    #[test]
    fn realized_payoff_rejects_inconsistent_flag() {
        let c = cfg(100.0, 100.0);
        let err = realized_payoff(BeliefClass::High, 10.0, 5.0, 2.0, 50.0, true, &c).unwrap_err();
        assert!(matches!(err, Error::ContractViolation(_)));
        let err = realized_payoff(BeliefClass::High, 10.0, 5.0, 2.0, 120.0, false, &c).unwrap_err();
        assert!(matches!(err, Error::ContractViolation(_)));
    }

    #[test]
    fn zero_total_with_positive_contribution_is_arithmetic_error() {
        let c = cfg(100.0, 100.0);
        let err = realized_payoff(BeliefClass::High, 10.0, 5.0, 0.0, 0.0, false, &c).unwrap_err();
        assert!(matches!(err, Error::Arithmetic(_)));
        let err = expected_unfunded_payoff(BeliefClass::High, 0.5, 1.0, 0.0, 0.0, &c).unwrap_err();
        assert!(matches!(err, Error::Arithmetic(_)));
    }

    #[test]
    fn zero_contribution_gets_zero_or_reward() {
        let c = cfg(100.0, 100.0);
        assert_eq!(realized_payoff(BeliefClass::High, 10.0, 0.0, 2.0, 0.0, false, &c).unwrap(), 0.0);
        assert_eq!(realized_payoff(BeliefClass::Low, 10.0, 0.0, 2.0, 0.0, false, &c).unwrap(), 2.0);
    }

    #[test]
    fn expected_funded_examples() {
        let high = expected_funded_payoff(BeliefClass::High, 0.6, 10.0, 9.0, 2.0).unwrap();
        assert_relative_eq!(high, 1.8, max_relative = 1e-12);
        let low = expected_funded_payoff(BeliefClass::Low, 0.25, 10.0, 1.0, 2.0).unwrap();
        assert_relative_eq!(low, 2.25, max_relative = 1e-12);
        assert_eq!(expected_funded_payoff(BeliefClass::High, 0.0, 10.0, 3.0, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn expected_unfunded_examples() {
        let high = expected_unfunded_payoff(BeliefClass::High, 0.6, 9.0, 100.0, 2.0, &cfg(100.0, 50.0)).unwrap();
        assert_relative_eq!(high, 1.8, max_relative = 1e-12);
        let low = expected_unfunded_payoff(BeliefClass::Low, 0.25, 1.0, 100.0, 2.0, &cfg(100.0, 100.0)).unwrap();
        assert_relative_eq!(low, 2.25, max_relative = 1e-12);
        for class in [BeliefClass::High, BeliefClass::Low] {
            let v = expected_unfunded_payoff(class, 1.0, 7.0, 100.0, 2.0, &cfg(100.0, 50.0)).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn unfunded_payoff_is_linear_in_contribution() {
        let c = cfg(100.0, 80.0);
        let one = realized_payoff(BeliefClass::High, 10.0, 3.0, 0.0, 60.0, false, &c).unwrap();
        let two = realized_payoff(BeliefClass::High, 10.0, 6.0, 0.0, 60.0, false, &c).unwrap();
        assert_relative_eq!(two / one, 2.0, max_relative = 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(100.0, 50.0).with_deadlines(1, 1).validate().is_ok());
        assert!(cfg(0.0, 50.0).validate().is_err());
        assert!(cfg(100.0, -1.0).validate().is_err());
        assert!(ProjectConfig::new(100.0, 50.0, 0.0).validate().is_err());
        assert!(cfg(100.0, 50.0).with_deadlines(0, 3).validate().is_err());
        assert!(cfg(100.0, 50.0).with_deadlines(3, 0).validate().is_err());
    }
}
