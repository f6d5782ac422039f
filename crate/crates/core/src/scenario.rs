//! Scenario files: a TOML document describing the project, the scorer and the
//! agents with their belief generators and contribution policies.
//!
//! ```toml
//! master_seed = 7
//!
//! [project]
//! provision_point = 100.0
//! contribution_budget = 50.0
//! belief_budget = 10.0
//! belief_deadline = 3
//! contribution_deadline = 10
//! low_cap_variant = "paper_verbatim"   # or "rederived"
//!
//! [scorer]
//! kind = "uniform"                      # or { kind = "quadratic", outcome = 0.7 }
//!
//! [[agents]]
//! id = 1
//! valuation = 60.0
//! prior_belief = 0.8
//! arrival_belief = 1
//! arrival_contribution = 1
//! generator = { kind = "symmetric_bernoulli", p = 0.5, up = 0.01, down = -0.01 }
//! policy = { kind = "equilibrium" }
//! ```

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bbr::ScorerConfig;
use crate::belief::StepGenerator;
use crate::error::{Error, Result};
use crate::model::{check_sufficient_interest, Agent, ProjectConfig};

/// How an agent picks its contribution and contribution epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Policy {
    /// Equilibrium cap and timing rule.
    #[default]
    Equilibrium,
    /// Offer `amount` at `epoch`.
    Fixed { amount: f64, epoch: u32 },
    /// Offer `fraction · θ` on arrival.
    Greedy { fraction: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSpec {
    pub id: u32,
    pub valuation: f64,
    pub prior_belief: f64,
    pub arrival_belief: u32,
    pub arrival_contribution: u32,
    pub generator: StepGenerator,
    #[serde(default)]
    pub policy: Policy,
}

impl AgentSpec {
    pub fn agent(&self) -> Agent {
        Agent {
            id: self.id,
            valuation: self.valuation,
            prior_belief: self.prior_belief,
            arrival_belief: self.arrival_belief,
            arrival_contribution: self.arrival_contribution,
        }
    }
}

impl Policy {
    pub fn validate(&self, spec: &AgentSpec, cfg: &ProjectConfig, path: &str) -> Result<()> {
        match *self {
            Policy::Equilibrium => Ok(()),
            Policy::Fixed { amount, epoch } => {
                if !(amount >= 0.0 && amount.is_finite()) {
                    return Err(Error::validation(format!("{path}.amount"), "must be finite and >= 0"));
                }
                if epoch < spec.arrival_contribution || epoch > cfg.contribution_deadline {
                    return Err(Error::PolicyContract {
                        agent_id: spec.id,
                        message: format!(
                            "contribution epoch {epoch} outside [{}, {}]",
                            spec.arrival_contribution, cfg.contribution_deadline
                        ),
                    });
                }
                Ok(())
            }
            Policy::Greedy { fraction } => {
                if (0.0..=1.0).contains(&fraction) {
                    Ok(())
                } else {
                    Err(Error::validation(format!("{path}.fraction"), "must lie in [0, 1]"))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub master_seed: u64,
    pub project: ProjectConfig,
    #[serde(default)]
    pub scorer: ScorerConfig,
    pub agents: Vec<AgentSpec>,
}

impl Scenario {
    /// Parse and validate.
    pub fn from_toml_str(text: &str) -> Result<Scenario> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
        Scenario::from_toml_str(&text)
    }

    /// Normalised TOML rendering; loading it back yields an equal scenario.
    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn agents(&self) -> Vec<Agent> {
        self.agents.iter().map(AgentSpec::agent).collect()
    }

    pub fn agent_spec(&self, id: u32) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    pub fn validate(&self) -> Result<()> {
        self.project.validate()?;
        self.scorer.validate()?;
        if self.agents.is_empty() {
            return Err(Error::validation("agents", "at least one agent is required"));
        }
        let mut seen = BTreeSet::new();
        for (k, spec) in self.agents.iter().enumerate() {
            let path = format!("agents[{k}]");
            if !seen.insert(spec.id) {
                return Err(Error::validation(format!("{path}.id"), format!("duplicate agent id {}", spec.id)));
            }
            spec.agent().validate(&self.project, &path)?;
            spec.generator.validate(&format!("{path}.generator"))?;
            spec.policy.validate(spec, &self.project, &format!("{path}.policy"))?;
        }
        check_sufficient_interest(&self.agents(), &self.project)
    }
}
