//! Monte Carlo best-response spot check on small instances.

use rayon::prelude::*;

use crate::engine::{Action, Simulation};
use crate::error::{Error, Result};
use crate::oracle::analytic::GridSpec;
use crate::oracle::report::{Counterexample, OracleReport};
use crate::oracle::timing::MIN_MC_RUNS;
use crate::stats::MeanEstimate;

pub const MAX_AGENTS: usize = 4;
pub const MAX_DEADLINE: u32 = 10;
const Z: f64 = 3.0;
const ABS_SLACK: f64 = 1e-9;

/// Unilateral deviations `(amount, epoch)` to try.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviationGrid {
    pub amounts: Vec<f64>,
    pub epochs: Vec<u32>,
}

impl DeviationGrid {
    /// `grid.contribution_points` amounts over `[0, θ + m]` crossed with every
    /// epoch of the agent's contribution window.
    pub fn for_agent(sim: &Simulation, agent_id: u32, grid: &GridSpec) -> Result<DeviationGrid> {
        grid.validate()?;
        let spec = sim
            .scenario()
            .agent_spec(agent_id)
            .ok_or_else(|| Error::validation("agent_id", format!("unknown agent {agent_id}")))?;
        let reward = sim.belief_phase().rewards.get(&agent_id).copied().unwrap_or(0.0);
        let top = spec.valuation + reward;
        let n = grid.contribution_points;
        Ok(DeviationGrid {
            amounts: (0..n).map(|k| top * k as f64 / (n - 1) as f64).collect(),
            epochs: (spec.arrival_contribution..=sim.config().contribution_deadline).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.amounts.len() * self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Check that no deviation in `grid` raises the agent's mean realized payoff
/// above the equilibrium strategy by more than three paired standard errors.
/// Runs share seeds across deviations.
pub fn best_response_check(sim: &Simulation, agent_id: u32, grid: &DeviationGrid, mc_runs: usize) -> Result<OracleReport> {
    let n_agents = sim.scenario().agents.len();
    let deadline = sim.config().contribution_deadline;
    if n_agents > MAX_AGENTS || deadline > MAX_DEADLINE {
        return Err(Error::InstanceTooLarge(format!(
            "{n_agents} agents and T_C = {deadline}; the check supports at most {MAX_AGENTS} agents and T_C <= {MAX_DEADLINE}"
        )));
    }
    if mc_runs < MIN_MC_RUNS {
        return Err(Error::validation("mc_runs", format!("must be at least {MIN_MC_RUNS}")));
    }
    if grid.is_empty() {
        return Err(Error::validation("deviation_grid", "is empty"));
    }
    match sim.action(agent_id) {
        Some(Action::Equilibrium(_)) => {}
        Some(_) => {
            return Err(Error::validation("agent_id", format!("agent {agent_id} does not play the equilibrium policy")))
        }
        None => return Err(Error::validation("agent_id", format!("unknown agent {agent_id}"))),
    }

    let payoffs = |s: &Simulation| -> Result<Vec<f64>> {
        (0..mc_runs as u64)
            .map(|r| {
                let seed = s.run_seed(r);
                let (ledger, _) = s.contribution_phase(seed)?;
                let outcome = s.settle(&ledger, seed)?;
                Ok(outcome.agent(agent_id).expect("agent is in the scenario").payoff)
            })
            .collect()
    };
    let equilibrium = payoffs(sim)?;
    let eq_est = MeanEstimate::from_samples(&equilibrium);

    let deviations: Vec<(f64, u32)> = grid
        .epochs
        .iter()
        .flat_map(|&e| grid.amounts.iter().map(move |&x| (x, e)))
        .collect();
    let gains = deviations
        .par_iter()
        .map(|&(amount, epoch)| {
            let deviant = sim.with_action(agent_id, Action::Fixed { amount, epoch })?;
            let diffs: Vec<f64> = payoffs(&deviant)?.iter().zip(&equilibrium).map(|(d, e)| d - e).collect();
            Ok(MeanEstimate::from_samples(&diffs))
        })
        .collect::<Result<Vec<_>>>()?;

    let (best_k, best) = gains
        .iter()
        .enumerate()
        .fold((0, gains[0]), |acc, (k, g)| if g.mean > acc.1.mean { (k, *g) } else { acc });
    let mut report = OracleReport::new(
        format!("best_response:agent{agent_id}"),
        best.mean,
        0.0,
        Z * best.std_error() + ABS_SLACK,
    );
    let mut violations: Vec<(usize, MeanEstimate)> = gains
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, g)| g.mean > Z * g.std_error() + ABS_SLACK)
        .collect();
    violations.sort_by(|a, b| b.1.mean.total_cmp(&a.1.mean));
    for (k, g) in violations.iter().take(5) {
        let (amount, epoch) = deviations[*k];
        report.fail(Counterexample::new(
            "deviation beats the equilibrium strategy",
            [
                ("amount", amount),
                ("epoch", epoch as f64),
                ("gain", g.mean),
                ("paired_se", g.std_error()),
            ],
        ));
    }
    report.detail("deviations", deviations.len() as f64);
    report.detail("violations", violations.len() as f64);
    report.detail("equilibrium_mean_payoff", eq_est.mean);
    report.detail("best_deviation_amount", deviations[best_k].0);
    report.detail("best_deviation_epoch", deviations[best_k].1 as f64);
    report.detail("mc_runs", mc_runs as f64);
    Ok(report)
}
