//! Closed-form equilibrium layer: contribution caps, the belief threshold `b*`,
//! equilibrium contribution timing per drift class, and assembly of the full
//! per-agent strategy.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::belief::DriftClass;
use crate::error::{Error, Result};
use crate::model::{check_probability, check_sufficient_interest, classify_agent, Agent, BeliefClass, LowCapVariant, ProjectConfig};

fn cap_denominator(belief: f64, cfg: &ProjectConfig) -> f64 {
    cfg.contribution_budget * (1.0 - belief) + cfg.provision_point * belief
}

/// High-belief cap `H0·b·(θ+m) / (B_C·(1−b) + H0·b)`. Zero at `b = 0`.
pub fn contribution_cap_high(belief: f64, valuation: f64, reward: f64, cfg: &ProjectConfig) -> Result<f64> {
    check_probability("belief", belief)?;
    let h0 = cfg.provision_point;
    Ok(h0 * belief * (valuation + reward) / cap_denominator(belief, cfg))
}

/// Low-belief cap under the configured [`LowCapVariant`].
pub fn contribution_cap_low(belief: f64, valuation: f64, reward: f64, cfg: &ProjectConfig) -> Result<f64> {
    check_probability("belief", belief)?;
    let h0 = cfg.provision_point;
    let reward_term = h0 * reward * (1.0 - belief);
    let base = h0 * belief * valuation;
    let denom = cap_denominator(belief, cfg);
    Ok(match cfg.low_cap_variant {
        LowCapVariant::PaperVerbatim => (base + reward_term) / denom,
        LowCapVariant::Rederived => ((base - reward_term) / denom).max(0.0),
    })
}

pub fn contribution_cap(class: BeliefClass, belief: f64, valuation: f64, reward: f64, cfg: &ProjectConfig) -> Result<f64> {
    match class {
        BeliefClass::High => contribution_cap_high(belief, valuation, reward, cfg),
        BeliefClass::Low => contribution_cap_low(belief, valuation, reward, cfg),
    }
}

/// `b* = √(B_C/H0) / (1 + √(B_C/H0))`, the belief that maximises a
/// high-belief agent's expected unfunded payoff at its cap.
pub fn belief_threshold(cfg: &ProjectConfig) -> f64 {
    let root = cfg.budget_ratio().sqrt();
    root / (1.0 + root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossDirection {
    /// Fire once the belief has fallen to the threshold or below.
    Downward,
    /// Fire once the belief has risen to the threshold or above.
    Upward,
}

/// When an agent contributes during the contribution phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimingRule {
    /// At the arrival epoch.
    Immediate { epoch: u32 },
    /// At the contribution deadline `T_C`.
    AtDeadline { epoch: u32 },
    /// At the first epoch the belief crosses `threshold` in `direction`; at
    /// `fallback` if it never does.
    FirstCrossing {
        threshold: f64,
        direction: CrossDirection,
        fallback: u32,
    },
}

impl TimingRule {
    /// Whether the rule fires at `epoch` given the belief held then.
    pub fn fires(&self, epoch: u32, belief: f64) -> bool {
        match *self {
            TimingRule::Immediate { epoch: e } | TimingRule::AtDeadline { epoch: e } => epoch >= e,
            TimingRule::FirstCrossing {
                threshold,
                direction,
                fallback,
            } => {
                epoch >= fallback
                    || match direction {
                        CrossDirection::Downward => belief <= threshold,
                        CrossDirection::Upward => belief >= threshold,
                    }
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            TimingRule::Immediate { .. } => "immediate",
            TimingRule::AtDeadline { .. } => "at_deadline",
            TimingRule::FirstCrossing { .. } => "first_crossing",
        }
    }

    pub fn verdict(&self) -> RaceVerdict {
        match self {
            TimingRule::AtDeadline { .. } => RaceVerdict::Persists,
            _ => RaceVerdict::Avoided,
        }
    }
}

impl fmt::Display for TimingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimingRule::Immediate { epoch } => write!(f, "immediate({epoch})"),
            TimingRule::AtDeadline { epoch } => write!(f, "at_deadline({epoch})"),
            TimingRule::FirstCrossing {
                threshold,
                direction,
                fallback,
            } => {
                let dir = match direction {
                    CrossDirection::Downward => "down",
                    CrossDirection::Upward => "up",
                };
                write!(f, "first_crossing({threshold:.6},{dir},fallback={fallback})")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaceVerdict {
    Avoided,
    Persists,
}

impl RaceVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            RaceVerdict::Avoided => "avoided",
            RaceVerdict::Persists => "persists",
        }
    }
}

fn pure_drift(drift: DriftClass) -> Result<DriftClass> {
    match drift {
        DriftClass::Mixed => Err(Error::UnsupportedDrift(drift.to_string())),
        d => Ok(d),
    }
}

/// Equilibrium contribution timing of a high-belief agent.
pub fn timing_high(prior: f64, drift: DriftClass, cfg: &ProjectConfig, arrival: u32) -> Result<TimingRule> {
    let b_star = belief_threshold(cfg);
    let deadline = cfg.contribution_deadline;
    let crossing = |direction| TimingRule::FirstCrossing {
        threshold: b_star,
        direction,
        fallback: deadline,
    };
    Ok(match pure_drift(drift)? {
        DriftClass::Martingale => TimingRule::AtDeadline { epoch: deadline },
        DriftClass::SuperMartingale if prior <= b_star => TimingRule::Immediate { epoch: arrival },
        DriftClass::SuperMartingale => crossing(CrossDirection::Downward),
        DriftClass::SubMartingale if prior >= b_star => TimingRule::Immediate { epoch: arrival },
        DriftClass::SubMartingale => crossing(CrossDirection::Upward),
        DriftClass::Mixed => unreachable!(),
    })
}

/// `m < θ < m·H0/B_C`; only satisfiable when `H0 > B_C`.
pub fn lemma5_condition(valuation: f64, reward: f64, cfg: &ProjectConfig) -> bool {
    valuation > reward && valuation < reward * cfg.provision_point / cfg.contribution_budget
}

/// Equilibrium contribution timing of a low-belief agent. Fails with
/// [`Error::PreconditionUnsatisfied`] outside `m < θ < m·H0/B_C`.
pub fn timing_low(valuation: f64, reward: f64, drift: DriftClass, cfg: &ProjectConfig, arrival: u32) -> Result<TimingRule> {
    let drift = pure_drift(drift)?;
    if !lemma5_condition(valuation, reward, cfg) {
        return Err(Error::PreconditionUnsatisfied { theta: valuation, m: reward });
    }
    let deadline = cfg.contribution_deadline;
    Ok(match drift {
        DriftClass::SuperMartingale => TimingRule::Immediate { epoch: arrival },
        _ => TimingRule::AtDeadline { epoch: deadline },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumStrategy {
    pub agent_id: u32,
    pub class: BeliefClass,
    pub drift: DriftClass,
    /// Reported belief; equals the prior.
    pub belief_report: f64,
    /// Report epoch; equals the belief-phase arrival.
    pub report_epoch: u32,
    pub valuation: f64,
    pub reward: f64,
    /// Cap evaluated at the prior. The engine re-evaluates it at the belief
    /// held on the realized contribution epoch.
    pub nominal_cap: f64,
    pub timing: TimingRule,
    pub verdict: RaceVerdict,
    /// Set when the low-belief timing precondition failed and the rule fell
    /// back to contributing at the deadline.
    pub precondition_fallback: bool,
}

impl EquilibriumStrategy {
    pub fn cap_at(&self, belief: f64, cfg: &ProjectConfig) -> Result<f64> {
        contribution_cap(self.class, belief, self.valuation, self.reward, cfg)
    }

    /// Table row this strategy instantiates.
    pub fn table_cell(&self) -> &'static str {
        match (self.class, self.drift, self.timing) {
            (BeliefClass::High, DriftClass::Martingale, _) => "high/martingale",
            (BeliefClass::High, DriftClass::SuperMartingale, TimingRule::Immediate { .. }) => "high/super/b0<=b*",
            (BeliefClass::High, DriftClass::SuperMartingale, _) => "high/super/b0>b*",
            (BeliefClass::High, DriftClass::SubMartingale, TimingRule::Immediate { .. }) => "high/sub/b0>=b*",
            (BeliefClass::High, DriftClass::SubMartingale, _) => "high/sub/b0<b*",
            (BeliefClass::Low, _, _) if self.precondition_fallback => "low/precondition-fallback",
            (BeliefClass::Low, DriftClass::Martingale, _) => "low/martingale",
            (BeliefClass::Low, DriftClass::SuperMartingale, _) => "low/super",
            (BeliefClass::Low, DriftClass::SubMartingale, _) => "low/sub",
            (_, DriftClass::Mixed, _) => "mixed",
        }
    }
}

/// Equilibrium strategy of a single agent: report the prior on arrival,
/// offer the class cap at the contribution epoch, time the contribution per
/// drift class.
pub fn equilibrium_strategy(agent: &Agent, reward: f64, drift: DriftClass, cfg: &ProjectConfig) -> Result<EquilibriumStrategy> {
    let class = classify_agent(agent.prior_belief)?;
    let (timing, precondition_fallback) = match class {
        BeliefClass::High => (timing_high(agent.prior_belief, drift, cfg, agent.arrival_contribution)?, false),
        BeliefClass::Low => match timing_low(agent.valuation, reward, drift, cfg, agent.arrival_contribution) {
            Ok(rule) => (rule, false),
            Err(Error::PreconditionUnsatisfied { .. }) => (
                TimingRule::AtDeadline {
                    epoch: cfg.contribution_deadline,
                },
                true,
            ),
            Err(e) => return Err(e),
        },
    };
    Ok(EquilibriumStrategy {
        agent_id: agent.id,
        class,
        drift,
        belief_report: agent.prior_belief,
        report_epoch: agent.arrival_belief,
        valuation: agent.valuation,
        reward,
        nominal_cap: contribution_cap(class, agent.prior_belief, agent.valuation, reward, cfg)?,
        timing,
        verdict: timing.verdict(),
        precondition_fallback,
    })
}

/// Assemble the equilibrium strategy of every agent.
///
/// `rewards` holds the announced belief-based rewards (missing agents get 0).
pub fn assemble_spe(
    agents: &[Agent],
    rewards: &BTreeMap<u32, f64>,
    drifts: &BTreeMap<u32, DriftClass>,
    cfg: &ProjectConfig,
) -> Result<Vec<EquilibriumStrategy>> {
    check_sufficient_interest(agents, cfg)?;
    agents
        .iter()
        .map(|agent| {
            let drift = drifts
                .get(&agent.id)
                .copied()
                .ok_or_else(|| Error::validation("drifts", format!("no drift class for agent {}", agent.id)))?;
            equilibrium_strategy(agent, rewards.get(&agent.id).copied().unwrap_or(0.0), drift, cfg)
        })
        .collect()
}
