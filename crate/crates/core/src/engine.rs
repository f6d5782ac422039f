//! Discrete-epoch execution of the two-phase mechanism.
//!
//! Belief phase: every agent reports its prior on arrival and is told its
//! belief-based reward. Contribution phase: at each epoch the walks of arrived
//! agents step (seeing the total at the start of the epoch), then agents whose
//! rule fires contribute in id order, each capped at the remaining deficit.
//! The phase ends as soon as the provision point is reached. Settlement pays
//! out according to the funded/unfunded payoff structure.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bbr::{compute_bbr, score_reports, BeliefReport, ScoreVector};
use crate::belief::{classify_generator, default_ensemble, BeliefWalk, DriftClass, WalkEnv};
use crate::equilibrium::{equilibrium_strategy, EquilibriumStrategy, TimingRule};
use crate::error::{Error, Result};
use crate::model::{classify_agent, realized_payoff, refund_bonus, BeliefClass, ProjectConfig};
use crate::money::Money;
use crate::rng::derive_seed;
use crate::scenario::{AgentSpec, Policy, Scenario};
use crate::stats::{binomial_ci95, compensated_sum, MeanEstimate};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefPhaseOutcome {
    pub reports: Vec<BeliefReport>,
    pub scores: ScoreVector,
    pub classes: BTreeMap<u32, BeliefClass>,
    /// Announced rewards `m_i`.
    pub rewards: BTreeMap<u32, f64>,
}

/// Truthful reports at belief-phase arrival, scored and turned into rewards.
pub fn run_belief_phase(scenario: &Scenario) -> Result<BeliefPhaseOutcome> {
    let reports: Vec<BeliefReport> = scenario
        .agents
        .iter()
        .map(|a| BeliefReport {
            agent_id: a.id,
            reported_belief: a.prior_belief,
            report_epoch: a.arrival_belief,
        })
        .collect();
    let scorer = scenario.scorer.build();
    let scores = score_reports(&reports, scorer.as_ref())?;
    let classes = reports
        .iter()
        .map(|r| Ok((r.agent_id, classify_agent(r.reported_belief)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let rewards = compute_bbr(&scores, &classes, scenario.project.belief_budget)?;
    Ok(BeliefPhaseOutcome {
        reports,
        scores,
        classes,
        rewards,
    })
}

/// Drift class of every agent's generator over the default walk-state grid.
pub fn drift_classes(scenario: &Scenario) -> BTreeMap<u32, DriftClass> {
    let ensemble = default_ensemble(scenario.project.provision_point, scenario.project.contribution_deadline);
    scenario
        .agents
        .iter()
        .map(|a| (a.id, classify_generator(&a.generator, &ensemble)))
        .collect()
}

/// Resolved contribution behaviour of one agent.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Equilibrium(EquilibriumStrategy),
    Fixed { amount: f64, epoch: u32 },
    Greedy { fraction: f64 },
}

#[derive(Debug, Clone)]
struct AgentRuntime {
    spec: AgentSpec,
    action: Action,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContributionEvent {
    pub epoch: u32,
    pub agent_id: u32,
    pub amount: Money,
    /// What the agent offered before deficit capping.
    pub offered: Money,
    /// Belief held when contributing.
    pub belief: f64,
    /// Total after this contribution.
    pub total_after: Money,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ledger {
    pub decimals: u32,
    pub provision_point: Money,
    /// `totals[t]` is `C_t` at the end of epoch `t`; `totals[0] = 0`.
    pub totals: Vec<Money>,
    pub events: Vec<ContributionEvent>,
    pub last_epoch: u32,
    /// Agents whose first-crossing rule fired only through its fallback.
    pub fallback_agents: Vec<u32>,
}

impl Ledger {
    pub fn final_total(&self) -> Money {
        *self.totals.last().unwrap_or(&Money::ZERO)
    }

    pub fn funded(&self) -> bool {
        self.final_total() >= self.provision_point
    }

    pub fn contribution_of(&self, agent_id: u32) -> Option<&ContributionEvent> {
        self.events.iter().find(|e| e.agent_id == agent_id)
    }
}

/// Belief trajectories of one run, keyed by agent id.
pub type Trajectories = BTreeMap<u32, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent_id: u32,
    pub class: BeliefClass,
    pub contribution: f64,
    pub contribution_epoch: Option<u32>,
    pub refund_bonus: f64,
    /// Contribution handed back plus refund bonus (unfunded only).
    pub returned: f64,
    /// Announced reward `m_i`.
    pub bbr_reward: f64,
    /// Reward actually paid given the outcome.
    pub bbr_paid: f64,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub seed: u64,
    pub funded: bool,
    pub final_total: f64,
    pub last_epoch: u32,
    pub agents: Vec<AgentOutcome>,
    pub refund_outlay: f64,
    pub bbr_outlay: f64,
    /// Share of contributed mass that arrived in the final epoch `T_C`.
    pub race_fraction: f64,
    pub fallback_agents: Vec<u32>,
}

impl SimOutcome {
    pub fn agent(&self, agent_id: u32) -> Option<&AgentOutcome> {
        self.agents.iter().find(|a| a.agent_id == agent_id)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub outcome: SimOutcome,
    pub ledger: Ledger,
    pub trajectories: Trajectories,
}

/// A scenario with its belief phase resolved and every agent's action fixed.
/// Runs are independent and may execute in parallel.
#[derive(Debug, Clone)]
pub struct Simulation {
    scenario: Scenario,
    belief_phase: BeliefPhaseOutcome,
    drifts: BTreeMap<u32, DriftClass>,
    runtimes: Vec<AgentRuntime>,
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Simulation> {
        scenario.validate()?;
        let belief_phase = run_belief_phase(scenario)?;
        let drifts = drift_classes(scenario);
        let mut specs = scenario.agents.clone();
        specs.sort_by_key(|a| a.id);
        let runtimes = specs
            .into_iter()
            .map(|spec| {
                let action = match spec.policy {
                    Policy::Equilibrium => Action::Equilibrium(equilibrium_strategy(
                        &spec.agent(),
                        belief_phase.rewards.get(&spec.id).copied().unwrap_or(0.0),
                        drifts[&spec.id],
                        &scenario.project,
                    )?),
                    Policy::Fixed { amount, epoch } => Action::Fixed { amount, epoch },
                    Policy::Greedy { fraction } => Action::Greedy { fraction },
                };
                Ok(AgentRuntime { spec, action })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Simulation {
            scenario: scenario.clone(),
            belief_phase,
            drifts,
            runtimes,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn config(&self) -> &ProjectConfig {
        &self.scenario.project
    }

    pub fn belief_phase(&self) -> &BeliefPhaseOutcome {
        &self.belief_phase
    }

    pub fn drifts(&self) -> &BTreeMap<u32, DriftClass> {
        &self.drifts
    }

    pub fn action(&self, agent_id: u32) -> Option<&Action> {
        self.runtimes.iter().find(|r| r.spec.id == agent_id).map(|r| &r.action)
    }

    /// Equilibrium strategies of agents playing the equilibrium policy.
    pub fn strategies(&self) -> Vec<&EquilibriumStrategy> {
        self.runtimes
            .iter()
            .filter_map(|r| match &r.action {
                Action::Equilibrium(s) => Some(s),
                _ => None,
            })
            .collect()
    }

    /// Replace one agent's action, keeping everything else (including the
    /// belief phase) unchanged.
    pub fn with_action(&self, agent_id: u32, action: Action) -> Result<Simulation> {
        let mut sim = self.clone();
        let runtime = sim
            .runtimes
            .iter_mut()
            .find(|r| r.spec.id == agent_id)
            .ok_or_else(|| Error::validation("agent_id", format!("unknown agent {agent_id}")))?;
        if let Action::Fixed { epoch, .. } = action {
            if epoch < runtime.spec.arrival_contribution || epoch > self.config().contribution_deadline {
                return Err(Error::PolicyContract {
                    agent_id,
                    message: format!("contribution epoch {epoch} outside the contribution window"),
                });
            }
        }
        runtime.action = action;
        Ok(sim)
    }

    pub fn run_seed(&self, run_index: u64) -> u64 {
        derive_seed(self.scenario.master_seed, run_index)
    }

    /// Run `run_index` of the ensemble.
    pub fn run(&self, run_index: u64) -> Result<RunRecord> {
        self.run_with_seed(self.run_seed(run_index))
    }

    pub fn run_with_seed(&self, seed: u64) -> Result<RunRecord> {
        let (ledger, trajectories) = self.contribution_phase(seed)?;
        let outcome = self.settle(&ledger, seed)?;
        Ok(RunRecord {
            outcome,
            ledger,
            trajectories,
        })
    }

    /// Contribution phase under `seed`; each agent's walk uses stream `id`.
    pub fn contribution_phase(&self, seed: u64) -> Result<(Ledger, Trajectories)> {
        let cfg = &self.scenario.project;
        let decimals = cfg.money_decimals;
        let deadline = cfg.contribution_deadline;
        let h0 = Money::from_f64(cfg.provision_point, decimals);

        let mut walks: Vec<BeliefWalk> = self
            .runtimes
            .iter()
            .map(|r| {
                BeliefWalk::new(
                    r.spec.id,
                    r.spec.prior_belief,
                    r.spec.arrival_contribution,
                    r.spec.generator.clone(),
                    seed,
                    r.spec.id as u64,
                )
            })
            .collect();
        let mut acted = vec![false; self.runtimes.len()];
        let mut total = Money::ZERO;
        let mut totals = vec![Money::ZERO];
        let mut events = Vec::new();
        let mut fallback_agents = Vec::new();
        let mut last_epoch = 0;

        for epoch in 1..=deadline {
            last_epoch = epoch;
            let env = WalkEnv::new(total.to_f64(decimals), deadline - epoch, cfg.provision_point, deadline);
            for (runtime, walk) in self.runtimes.iter().zip(walks.iter_mut()) {
                if epoch > runtime.spec.arrival_contribution {
                    walk.step(&env);
                }
            }
            for (k, runtime) in self.runtimes.iter().enumerate() {
                if acted[k] || epoch < runtime.spec.arrival_contribution {
                    continue;
                }
                let belief = walks[k].current();
                let offer = match &runtime.action {
                    Action::Equilibrium(strategy) => {
                        if !strategy.timing.fires(epoch, belief) {
                            continue;
                        }
                        if let TimingRule::FirstCrossing { threshold, direction, fallback } = strategy.timing {
                            let crossed = TimingRule::FirstCrossing { threshold, direction, fallback: u32::MAX }
                                .fires(epoch, belief);
                            if epoch >= fallback && !crossed {
                                fallback_agents.push(runtime.spec.id);
                            }
                        }
                        strategy.cap_at(belief, cfg)?
                    }
                    Action::Fixed { amount, epoch: at } => {
                        if *at < runtime.spec.arrival_contribution {
                            return Err(Error::PolicyContract {
                                agent_id: runtime.spec.id,
                                message: format!("contribution epoch {at} precedes arrival"),
                            });
                        }
                        if epoch != *at {
                            continue;
                        }
                        *amount
                    }
                    Action::Greedy { fraction } => fraction * runtime.spec.valuation,
                };
                acted[k] = true;
                let offered = Money::from_f64(offer, decimals).max(Money::ZERO);
                let amount = offered.min(h0 - total);
                if amount.is_zero() {
                    continue;
                }
                total += amount;
                events.push(ContributionEvent {
                    epoch,
                    agent_id: runtime.spec.id,
                    amount,
                    offered,
                    belief,
                    total_after: total,
                });
                if total >= h0 {
                    break;
                }
            }
            totals.push(total);
            if total >= h0 {
                break;
            }
        }

        let trajectories = walks.into_iter().map(|w| (w.agent_id, w.trajectory().to_vec())).collect();
        Ok((
            Ledger {
                decimals,
                provision_point: h0,
                totals,
                events,
                last_epoch,
                fallback_agents,
            },
            trajectories,
        ))
    }

    /// Pay out a finished contribution phase.
    pub fn settle(&self, ledger: &Ledger, seed: u64) -> Result<SimOutcome> {
        settle(ledger, &self.belief_phase, &self.scenario, seed)
    }

    /// Independent runs `0..n_runs`, summarised.
    pub fn ensemble(&self, n_runs: usize) -> Result<(EnsembleSummary, Vec<RunRecord>)> {
        if n_runs == 0 {
            return Err(Error::validation("runs", "must be at least 1"));
        }
        let records = (0..n_runs as u64)
            .into_par_iter()
            .map(|r| self.run(r))
            .collect::<Result<Vec<_>>>()?;
        let outcomes: Vec<&SimOutcome> = records.iter().map(|r| &r.outcome).collect();
        Ok((EnsembleSummary::from_outcomes(self.scenario.master_seed, &outcomes), records))
    }
}

/// Settle a contribution phase: refunds and bonuses when unfunded, rewards to
/// the class whose belief matched the outcome.
pub fn settle(ledger: &Ledger, belief_phase: &BeliefPhaseOutcome, scenario: &Scenario, seed: u64) -> Result<SimOutcome> {
    let decimals = ledger.decimals;
    let mut cfg = scenario.project.clone();
    // Compare against the provision point as the ledger holds it.
    cfg.provision_point = ledger.provision_point.to_f64(decimals);
    let funded = ledger.funded();
    let total = ledger.final_total().to_f64(decimals);
    let deadline = cfg.contribution_deadline;

    let mut ids: Vec<u32> = scenario.agents.iter().map(|a| a.id).collect();
    ids.sort_unstable();
    let mut agents = Vec::with_capacity(ids.len());
    for id in ids {
        let spec = scenario.agent_spec(id).expect("id taken from scenario");
        let class = belief_phase
            .classes
            .get(&id)
            .copied()
            .map_or_else(|| classify_agent(spec.prior_belief), Ok)?;
        let reward = belief_phase.rewards.get(&id).copied().unwrap_or(0.0);
        let event = ledger.contribution_of(id);
        let contribution = event.map_or(0.0, |e| e.amount.to_f64(decimals));
        let payoff = realized_payoff(class, spec.valuation, contribution, reward, total, funded, &cfg)?;
        let bonus = if funded {
            0.0
        } else {
            refund_bonus(contribution, total, cfg.contribution_budget)?
        };
        let bbr_paid = match (funded, class) {
            (true, BeliefClass::High) | (false, BeliefClass::Low) => reward,
            _ => 0.0,
        };
        agents.push(AgentOutcome {
            agent_id: id,
            class,
            contribution,
            contribution_epoch: event.map(|e| e.epoch),
            refund_bonus: bonus,
            returned: if funded { 0.0 } else { contribution + bonus },
            bbr_reward: reward,
            bbr_paid,
            payoff,
        });
    }

    let contributed: Money = ledger.events.iter().map(|e| e.amount).sum();
    let at_deadline: Money = ledger.events.iter().filter(|e| e.epoch == deadline).map(|e| e.amount).sum();
    let race_fraction = if contributed.is_zero() {
        0.0
    } else {
        at_deadline.units() as f64 / contributed.units() as f64
    };

    Ok(SimOutcome {
        seed,
        funded,
        final_total: total,
        last_epoch: ledger.last_epoch,
        refund_outlay: compensated_sum(agents.iter().map(|a| a.refund_bonus)),
        bbr_outlay: compensated_sum(agents.iter().map(|a| a.bbr_paid)),
        agents,
        race_fraction,
        fallback_agents: ledger.fallback_agents.clone(),
    })
}

/// Contribution phase of a prepared simulation under `seed`.
pub fn run_contribution_phase(sim: &Simulation, seed: u64) -> Result<Ledger> {
    Ok(sim.contribution_phase(seed)?.0)
}

/// Prepare and run `n_runs` seeded runs of `scenario`.
pub fn run_ensemble(scenario: &Scenario, n_runs: usize) -> Result<EnsembleSummary> {
    Ok(Simulation::new(scenario)?.ensemble(n_runs)?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSummary {
    pub agent_id: u32,
    pub mean_payoff: f64,
    pub payoff_std_error: f64,
    pub mean_contribution: f64,
    /// Share of runs in which the agent contributed a positive amount.
    pub contribution_rate: f64,
    /// Mean contribution epoch over runs where the agent contributed.
    pub mean_contribution_epoch: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSummary {
    pub master_seed: u64,
    pub runs: usize,
    pub funded_rate: f64,
    pub funded_rate_std_error: f64,
    pub funded_rate_ci95: (f64, f64),
    pub mean_final_total: f64,
    pub mean_race_fraction: f64,
    pub mean_contribution_epoch: Option<f64>,
    pub mean_refund_outlay: f64,
    pub mean_bbr_outlay: f64,
    pub agents: Vec<AgentSummary>,
}

impl EnsembleSummary {
    pub fn from_outcomes(master_seed: u64, outcomes: &[&SimOutcome]) -> EnsembleSummary {
        let n = outcomes.len();
        let funded = outcomes.iter().filter(|o| o.funded).count();
        let (se, lo, hi) = binomial_ci95(funded, n);
        let mean = |f: &dyn Fn(&SimOutcome) -> f64| MeanEstimate::from_samples(&outcomes.iter().map(|o| f(o)).collect::<Vec<_>>()).mean;
        let all_epochs: Vec<f64> = outcomes
            .iter()
            .flat_map(|o| o.agents.iter().filter_map(|a| a.contribution_epoch.map(f64::from)))
            .collect();

        let ids: Vec<u32> = outcomes.first().map(|o| o.agents.iter().map(|a| a.agent_id).collect()).unwrap_or_default();
        let agents = ids
            .iter()
            .map(|&id| {
                let rows: Vec<&AgentOutcome> = outcomes.iter().filter_map(|o| o.agent(id)).collect();
                let payoffs = MeanEstimate::from_samples(&rows.iter().map(|a| a.payoff).collect::<Vec<_>>());
                let epochs: Vec<f64> = rows.iter().filter_map(|a| a.contribution_epoch.map(f64::from)).collect();
                AgentSummary {
                    agent_id: id,
                    mean_payoff: payoffs.mean,
                    payoff_std_error: payoffs.std_error(),
                    mean_contribution: MeanEstimate::from_samples(&rows.iter().map(|a| a.contribution).collect::<Vec<_>>()).mean,
                    contribution_rate: epochs.len() as f64 / rows.len().max(1) as f64,
                    mean_contribution_epoch: (!epochs.is_empty()).then(|| MeanEstimate::from_samples(&epochs).mean),
                }
            })
            .collect();

        EnsembleSummary {
            master_seed,
            runs: n,
            funded_rate: if n == 0 { 0.0 } else { funded as f64 / n as f64 },
            funded_rate_std_error: se,
            funded_rate_ci95: (lo, hi),
            mean_final_total: mean(&|o| o.final_total),
            mean_race_fraction: mean(&|o| o.race_fraction),
            mean_contribution_epoch: (!all_epochs.is_empty()).then(|| MeanEstimate::from_samples(&all_epochs).mean),
            mean_refund_outlay: mean(&|o| o.refund_outlay),
            mean_bbr_outlay: mean(&|o| o.bbr_outlay),
            agents,
        }
    }
}
