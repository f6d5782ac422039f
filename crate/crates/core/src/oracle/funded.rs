//! Funding at equilibrium: whenever the equilibrium caps suffice, the project
//! is funded with `C0 = H0` exactly.

use rayon::prelude::*;

use crate::engine::{Action, RunRecord, Simulation};
use crate::error::{Error, Result};
use crate::money::Money;
use crate::oracle::report::{Counterexample, OracleReport, Status};

/// Independent feasibility: every agent's cap at the first epoch its rule
/// fires on the recorded trajectory, summed.
fn offered_total(sim: &Simulation, record: &RunRecord) -> Result<Money> {
    let cfg = sim.config();
    let mut total = Money::ZERO;
    for strategy in sim.strategies() {
        let spec = sim.scenario().agent_spec(strategy.agent_id).expect("strategy of a known agent");
        let path = &record.trajectories[&strategy.agent_id];
        let fire = (spec.arrival_contribution..=record.ledger.last_epoch)
            .find(|&t| strategy.timing.fires(t, path[t as usize]));
        if let Some(t) = fire {
            let cap = strategy.cap_at(path[t as usize], cfg)?;
            total += Money::from_f64(cap, cfg.money_decimals).max(Money::ZERO);
        }
    }
    Ok(total)
}

/// Run `runs` equilibrium runs. Runs whose caps cannot reach `H0` are
/// infeasible; every feasible run must end funded with `C0 = H0`.
pub fn verify_funded_at_equilibrium(sim: &Simulation, runs: usize) -> Result<OracleReport> {
    if runs == 0 {
        return Err(Error::validation("runs", "must be at least 1"));
    }
    if let Some(spec) = sim
        .scenario()
        .agents
        .iter()
        .find(|a| !matches!(sim.action(a.id), Some(Action::Equilibrium(_))))
    {
        return Err(Error::validation(
            "policy",
            format!("agent {} does not play the equilibrium policy", spec.id),
        ));
    }
    let h0 = Money::from_f64(sim.config().provision_point, sim.config().money_decimals);
    let checked = (0..runs as u64)
        .into_par_iter()
        .map(|r| {
            let record = sim.run(r)?;
            let offered = offered_total(sim, &record)?;
            Ok((r, record.ledger.final_total(), offered))
        })
        .collect::<Result<Vec<_>>>()?;

    let decimals = sim.config().money_decimals;
    let feasible: Vec<_> = checked.iter().filter(|(_, _, offered)| *offered >= h0).collect();
    let exact = feasible.iter().filter(|(_, total, _)| *total == h0).count();
    let mut report = OracleReport::new("funded", exact as f64, feasible.len() as f64, 0.0);
    report.detail("runs", runs as f64);
    report.detail("feasible_runs", feasible.len() as f64);
    for (r, total, offered) in &checked {
        if (*offered >= h0) != (*total == h0) || *total > h0 {
            report.fail(Counterexample::new(
                "feasibility and funding disagree",
                [
                    ("run", *r as f64),
                    ("final_total", total.to_f64(decimals)),
                    ("caps_total", offered.to_f64(decimals)),
                    ("provision_point", h0.to_f64(decimals)),
                ],
            ));
        }
    }
    if report.status == Status::Pass && feasible.is_empty() {
        report.status = Status::Infeasible;
        report.note("equilibrium caps never reached the provision point");
    }
    Ok(report)
}
