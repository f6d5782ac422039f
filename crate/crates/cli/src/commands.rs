//! Subcommand implementations. Each returns its results as plain data and a
//! writer persists them together with the manifest.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use pprx_core::belief::{DriftClass, StepGenerator};
use pprx_core::engine::{drift_classes, run_belief_phase, Action, EnsembleSummary, RunRecord, Simulation};
use pprx_core::equilibrium::{belief_threshold, equilibrium_strategy};
use pprx_core::model::BeliefClass;
use pprx_core::oracle::{
    best_response_check, verify_bstar, verify_funded_at_equilibrium, verify_indifference, verify_low_monotonicity,
    verify_timing, DeviationGrid, GridSpec, OracleReport, MAX_AGENTS, MAX_DEADLINE,
};
use pprx_core::rng::derive_seed;
use pprx_core::{Error as CoreError, LowCapVariant, Scenario};

use crate::output::{fmt_f64, fmt_opt, sha256_hex, OutputDir, RunManifest, MANIFEST_FILE};
use crate::{Claim, ClaimSet, Cli, Command, CommonArgs, SeedArg, SweepParam};

/// Result of one command: the manifest written and lines for the terminal.
#[derive(Debug)]
pub struct Execution {
    pub manifest: RunManifest,
    pub hard_failures: usize,
    pub lines: Vec<String>,
}

struct Loaded {
    scenario: Scenario,
    sha256: String,
    seed: u64,
}

fn load(common: &CommonArgs) -> Result<Loaded> {
    let text = std::fs::read_to_string(&common.scenario)
        .with_context(|| format!("reading scenario {}", common.scenario.display()))?;
    let mut scenario = Scenario::from_toml_str(&text).with_context(|| format!("in {}", common.scenario.display()))?;
    if let Some(v) = common.variant {
        scenario.project.low_cap_variant = v.variant();
    }
    scenario.master_seed = match common.seed {
        None => scenario.master_seed,
        Some(SeedArg::Fixed(s)) => s,
        Some(SeedArg::Random) => rand::random(),
    };
    Ok(Loaded {
        seed: scenario.master_seed,
        sha256: sha256_hex(text.as_bytes()),
        scenario,
    })
}

fn base_args(name: &str, common: &CommonArgs, seed: u64) -> Vec<String> {
    let mut args = vec![
        name.to_string(),
        "--scenario".into(),
        common.scenario.display().to_string(),
        "--seed".into(),
        seed.to_string(),
    ];
    if let Some(v) = common.variant {
        args.extend(["--variant".into(), v.as_str().into()]);
    }
    args
}

fn manifest(name: &str, common: &CommonArgs, loaded: &Loaded, args: Vec<String>) -> RunManifest {
    RunManifest {
        tool: "pprxdb".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: name.into(),
        scenario_path: common.scenario.display().to_string(),
        scenario_sha256: loaded.sha256.clone(),
        seed: loaded.seed,
        args,
        output_dir: common.out.display().to_string(),
        artifacts: Default::default(),
    }
}

/// Run a parsed command line.
pub fn execute(cli: &Cli) -> Result<Execution> {
    match &cli.command {
        Command::Equilibrium(common) => {
            let loaded = load(common)?;
            let table = cmd_equilibrium(&loaded.scenario)?;
            let mut out = OutputDir::create(&common.out)?;
            write_equilibrium(&mut out, &table)?;
            let lines = table
                .strategies
                .iter()
                .map(|s| format!("agent {}: {} x_cap={} {} ({})", s.agent_id, s.table_cell, fmt_opt(s.x_cap), s.timing, s.race_verdict))
                .collect();
            let args = base_args("equilibrium", common, loaded.seed);
            let manifest = out.finish(manifest("equilibrium", common, &loaded, args))?;
            Ok(Execution { manifest, hard_failures: 0, lines })
        }
        Command::Simulate(a) => {
            let loaded = load(&a.common)?;
            let (summary, records) = cmd_simulate(&loaded.scenario, a.runs)?;
            let mut out = OutputDir::create(&a.common.out)?;
            write_simulation(&mut out, &summary, &records)?;
            let (lo, hi) = summary.funded_rate_ci95;
            let lines = vec![format!(
                "{} runs: funded rate {} (95% CI {lo:.4}..{hi:.4}), race fraction {:.4}",
                summary.runs, summary.funded_rate, summary.mean_race_fraction
            )];
            let mut args = base_args("simulate", &a.common, loaded.seed);
            args.extend(["--runs".into(), a.runs.to_string()]);
            let manifest = out.finish(manifest("simulate", &a.common, &loaded, args))?;
            Ok(Execution { manifest, hard_failures: 0, lines })
        }
        Command::Verify(a) => {
            let loaded = load(&a.common)?;
            let bundle = cmd_verify(&loaded.scenario, &a.claims, a.runs)?;
            let mut out = OutputDir::create(&a.common.out)?;
            write_verify(&mut out, &bundle)?;
            let mut lines: Vec<String> = bundle
                .reports
                .iter()
                .map(|r| format!("{:<20} {:<40} measured={} predicted={}", r.status.as_str(), r.claim, fmt_f64(r.measured), fmt_f64(r.predicted)))
                .collect();
            lines.push(format!("hard failures: {}", bundle.hard_failures));
            let mut args = base_args("verify", &a.common, loaded.seed);
            args.extend(["--runs".into(), a.runs.to_string(), "--claims".into(), a.claims.ids()]);
            let manifest = out.finish(manifest("verify", &a.common, &loaded, args))?;
            Ok(Execution {
                manifest,
                hard_failures: bundle.hard_failures,
                lines,
            })
        }
        Command::Sweep(a) => {
            let loaded = load(&a.common)?;
            let rows = cmd_sweep(&loaded.scenario, a.param, &a.range.0, a.runs)?;
            let mut out = OutputDir::create(&a.common.out)?;
            write_sweep(&mut out, &rows)?;
            let lines = vec![format!("{} rows over {} values of {}", rows.len(), a.range.0.len(), a.param.as_str())];
            let mut args = base_args("sweep", &a.common, loaded.seed);
            let range = a.range.0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
            args.extend([
                "--param".into(),
                a.param.as_str().into(),
                "--range".into(),
                range,
                "--runs".into(),
                a.runs.to_string(),
            ]);
            let manifest = out.finish(manifest("sweep", &a.common, &loaded, args))?;
            Ok(Execution { manifest, hard_failures: 0, lines })
        }
        Command::Rerun(a) => {
            let (execution, mismatches) = rerun(&a.manifest, &a.out)?;
            let mut lines = execution.lines;
            if mismatches.is_empty() {
                lines.push(format!("all {} artifacts reproduced", execution.manifest.artifacts.len()));
            } else {
                lines.extend(mismatches.iter().map(|m| format!("mismatch: {m}")));
            }
            Ok(Execution {
                manifest: execution.manifest,
                hard_failures: execution.hard_failures + mismatches.len(),
                lines,
            })
        }
    }
}

/// Re-execute a manifest into `out`; returns the artifacts whose checksum
/// differs from the recorded one.
pub fn rerun(manifest_path: &Path, out: &Path) -> Result<(Execution, Vec<String>)> {
    let recorded = RunManifest::load(manifest_path)?;
    let mut argv = vec!["pprxdb".to_string()];
    argv.extend(recorded.args.iter().cloned());
    argv.extend(["--out".into(), out.display().to_string()]);
    let cli = <Cli as clap::Parser>::try_parse_from(&argv).context("manifest holds an invalid command line")?;
    if matches!(cli.command, Command::Rerun(_)) {
        bail!("a manifest cannot record a rerun");
    }
    let execution = execute(&cli)?;
    let mut mismatches = Vec::new();
    if execution.manifest.scenario_sha256 != recorded.scenario_sha256 {
        mismatches.push(format!("scenario {} changed since the manifest was written", recorded.scenario_path));
    }
    for (name, sum) in &recorded.artifacts {
        match execution.manifest.artifacts.get(name) {
            Some(new) if new == sum => {}
            Some(_) => mismatches.push(name.clone()),
            None => mismatches.push(format!("{name} (missing)")),
        }
    }
    for name in execution.manifest.artifacts.keys() {
        if !recorded.artifacts.contains_key(name) && name != MANIFEST_FILE {
            mismatches.push(format!("{name} (unexpected)"));
        }
    }
    Ok((execution, mismatches))
}

// ---------------------------------------------------------------- equilibrium

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRow {
    pub agent_id: u32,
    pub class: BeliefClass,
    pub b0: f64,
    pub drift: DriftClass,
    pub m: f64,
    /// `None` when the drift class has no equilibrium timing.
    pub x_cap: Option<f64>,
    pub timing: String,
    pub race_verdict: String,
    pub table_cell: String,
    pub precondition_fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumTable {
    pub master_seed: u64,
    pub b_star: f64,
    pub budget_ratio: f64,
    pub low_cap_variant: LowCapVariant,
    pub strategies: Vec<StrategyRow>,
}

pub fn cmd_equilibrium(scenario: &Scenario) -> Result<EquilibriumTable> {
    let cfg = &scenario.project;
    let belief_phase = run_belief_phase(scenario)?;
    let drifts = drift_classes(scenario);
    let mut agents = scenario.agents();
    agents.sort_by_key(|a| a.id);
    let strategies = agents
        .iter()
        .map(|agent| {
            let m = belief_phase.rewards.get(&agent.id).copied().unwrap_or(0.0);
            let drift = drifts[&agent.id];
            Ok(match equilibrium_strategy(agent, m, drift, cfg) {
                Ok(s) => StrategyRow {
                    agent_id: agent.id,
                    class: s.class,
                    b0: agent.prior_belief,
                    drift,
                    m,
                    x_cap: Some(s.nominal_cap),
                    timing: s.timing.to_string(),
                    race_verdict: s.verdict.as_str().into(),
                    table_cell: s.table_cell().into(),
                    precondition_fallback: s.precondition_fallback,
                },
                Err(CoreError::UnsupportedDrift(_)) => StrategyRow {
                    agent_id: agent.id,
                    class: belief_phase.classes[&agent.id],
                    b0: agent.prior_belief,
                    drift,
                    m,
                    x_cap: None,
                    timing: "unsupported".into(),
                    race_verdict: "n/a".into(),
                    table_cell: "mixed".into(),
                    precondition_fallback: false,
                },
                Err(e) => return Err(e.into()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumTable {
        master_seed: scenario.master_seed,
        b_star: belief_threshold(cfg),
        budget_ratio: cfg.budget_ratio(),
        low_cap_variant: cfg.low_cap_variant,
        strategies,
    })
}

fn write_equilibrium(out: &mut OutputDir, table: &EquilibriumTable) -> Result<()> {
    out.write_json("equilibrium.json", table)?;
    let rows: Vec<Vec<String>> = table
        .strategies
        .iter()
        .map(|s| {
            vec![
                s.agent_id.to_string(),
                s.class.to_string(),
                fmt_f64(s.b0),
                s.drift.to_string(),
                fmt_f64(s.m),
                fmt_opt(s.x_cap),
                s.timing.clone(),
                s.race_verdict.clone(),
                s.table_cell.clone(),
                s.precondition_fallback.to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "strategies.csv",
        "pprxdb.strategies.v1",
        &["agent_id", "class", "b0", "drift", "m", "x_cap", "timing", "race_verdict", "table_cell", "precondition_fallback"],
        &rows,
    )
}

// ----------------------------------------------------------------- simulate

pub fn cmd_simulate(scenario: &Scenario, runs: usize) -> Result<(EnsembleSummary, Vec<RunRecord>)> {
    if runs == 0 {
        bail!("--runs must be at least 1");
    }
    Ok(Simulation::new(scenario)?.ensemble(runs)?)
}

fn write_simulation(out: &mut OutputDir, summary: &EnsembleSummary, records: &[RunRecord]) -> Result<()> {
    out.write_json("summary.json", summary)?;
    let decimals = records.first().map_or(9, |r| r.ledger.decimals);
    let runs: Vec<Vec<String>> = records
        .iter()
        .enumerate()
        .map(|(k, r)| {
            let o = &r.outcome;
            vec![
                k.to_string(),
                o.seed.to_string(),
                o.funded.to_string(),
                fmt_f64(o.final_total),
                o.last_epoch.to_string(),
                fmt_f64(o.race_fraction),
                fmt_f64(o.refund_outlay),
                fmt_f64(o.bbr_outlay),
            ]
        })
        .collect();
    out.write_csv(
        "runs.csv",
        "pprxdb.runs.v1",
        &["run", "seed", "funded", "final_total", "last_epoch", "race_fraction", "refund_outlay", "bbr_outlay"],
        &runs,
    )?;
    let agents: Vec<Vec<String>> = records
        .iter()
        .enumerate()
        .flat_map(|(k, r)| {
            r.outcome.agents.iter().map(move |a| {
                vec![
                    k.to_string(),
                    a.agent_id.to_string(),
                    a.class.to_string(),
                    fmt_f64(a.contribution),
                    a.contribution_epoch.map(|e| e.to_string()).unwrap_or_default(),
                    fmt_f64(a.refund_bonus),
                    fmt_f64(a.bbr_paid),
                    fmt_f64(a.payoff),
                ]
            })
        })
        .collect();
    out.write_csv(
        "agents.csv",
        "pprxdb.agents.v1",
        &["run", "agent_id", "class", "x", "t2", "refund_bonus", "bbr_paid", "payoff"],
        &agents,
    )?;
    for (k, r) in records.iter().enumerate() {
        let rows: Vec<Vec<String>> = r
            .ledger
            .events
            .iter()
            .map(|e| {
                vec![
                    e.epoch.to_string(),
                    e.agent_id.to_string(),
                    fmt_f64(e.amount.to_f64(decimals)),
                    fmt_f64(e.total_after.to_f64(decimals)),
                ]
            })
            .collect();
        out.write_csv(
            &format!("ledgers/run_{k:06}.csv"),
            "pprxdb.ledger.v1",
            &["epoch", "agent_id", "x", "C_t"],
            &rows,
        )?;
    }
    Ok(())
}

// ------------------------------------------------------------------- verify

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyBundle {
    pub master_seed: u64,
    pub claims: Vec<String>,
    pub mc_runs: usize,
    pub hard_failures: usize,
    pub reports: Vec<OracleReport>,
}

/// Agent whose best response the bundle checks: the last to arrive in the
/// contribution phase (ties broken by the larger id, which also acts later
/// within an epoch).
pub fn best_response_focal(scenario: &Scenario) -> Option<u32> {
    scenario.agents.iter().max_by_key(|a| (a.arrival_contribution, a.id)).map(|a| a.id)
}

pub fn cmd_verify(scenario: &Scenario, claims: &ClaimSet, runs: usize) -> Result<VerifyBundle> {
    let cfg = &scenario.project;
    let grid = GridSpec::default();
    let belief_phase = run_belief_phase(scenario)?;
    let reward = |id: u32| belief_phase.rewards.get(&id).copied().unwrap_or(0.0);
    let mut agents = scenario.agents.clone();
    agents.sort_by_key(|a| a.id);
    let mut reports = Vec::new();
    let mut simulation: Option<Simulation> = None;
    let mut sim = || -> Result<Simulation> {
        if simulation.is_none() {
            simulation = Some(Simulation::new(scenario)?);
        }
        Ok(simulation.clone().expect("just set"))
    };

    for claim in &claims.0 {
        match claim {
            Claim::Bstar => {
                let first = &agents[0];
                reports.push(verify_bstar(cfg, first.valuation, reward(first.id), &grid)?);
            }
            Claim::Indifference => {
                for a in &agents {
                    let class = belief_phase.classes[&a.id];
                    let mut report = if a.prior_belief > 0.0 && a.prior_belief < 1.0 {
                        verify_indifference(cfg, class, a.prior_belief, a.valuation, reward(a.id), cfg.low_cap_variant)?
                    } else {
                        OracleReport::skipped(format!("indifference:{class}"), "belief on the boundary")
                    };
                    report.claim = format!("{}:agent{}", report.claim, a.id);
                    reports.push(report);
                }
            }
            Claim::LowMonotonicity => {
                for a in agents.iter().filter(|a| belief_phase.classes[&a.id] == BeliefClass::Low) {
                    for variant in [LowCapVariant::PaperVerbatim, LowCapVariant::Rederived] {
                        let mut report = verify_low_monotonicity(cfg, a.valuation, reward(a.id), variant, &grid)?;
                        report.claim = format!("{}:agent{}", report.claim, a.id);
                        reports.push(report);
                    }
                }
            }
            Claim::Timing => {
                for a in &agents {
                    let class = belief_phase.classes[&a.id];
                    let seed = derive_seed(scenario.master_seed, 0x7100 + a.id as u64);
                    let mut report = match verify_timing(cfg, class, &a.generator, a.prior_belief, a.valuation, reward(a.id), runs, seed) {
                        Ok(r) => r,
                        Err(CoreError::UnsupportedDrift(d)) => {
                            OracleReport::skipped("timing:mixed", format!("no equilibrium timing for mixed drift ({d})"))
                        }
                        Err(e) => return Err(e.into()),
                    };
                    report.claim = format!("{}:agent{}", report.claim, a.id);
                    reports.push(report);
                }
            }
            Claim::BestResponse => {
                let focal = best_response_focal(scenario).expect("validated scenarios have agents");
                let claim = format!("best_response:agent{focal}");
                let report = if agents.len() > MAX_AGENTS || cfg.contribution_deadline > MAX_DEADLINE {
                    OracleReport::skipped(
                        claim,
                        format!("instance too large: at most {MAX_AGENTS} agents and T_C <= {MAX_DEADLINE}"),
                    )
                } else {
                    let sim = sim()?;
                    if matches!(sim.action(focal), Some(Action::Equilibrium(_))) {
                        let deviations = DeviationGrid::for_agent(&sim, focal, &grid)?;
                        best_response_check(&sim, focal, &deviations, runs)?
                    } else {
                        OracleReport::skipped(claim, "agent does not play the equilibrium policy")
                    }
                };
                reports.push(report);
            }
            Claim::Funded => {
                let sim = sim()?;
                let all_equilibrium = agents.iter().all(|a| matches!(sim.action(a.id), Some(Action::Equilibrium(_))));
                reports.push(if all_equilibrium {
                    verify_funded_at_equilibrium(&sim, runs)?
                } else {
                    OracleReport::skipped("funded", "some agents do not play the equilibrium policy")
                });
            }
        }
    }
    let hard_failures = reports.iter().filter(|r| r.is_hard_failure()).count();
    Ok(VerifyBundle {
        master_seed: scenario.master_seed,
        claims: claims.0.iter().map(|c| c.id().to_string()).collect(),
        mc_runs: runs,
        hard_failures,
        reports,
    })
}

fn write_verify(out: &mut OutputDir, bundle: &VerifyBundle) -> Result<()> {
    out.write_json("verify.json", bundle)?;
    let rows: Vec<Vec<String>> = bundle
        .reports
        .iter()
        .map(|r| {
            vec![
                r.claim.clone(),
                r.status.as_str().into(),
                r.gate.to_string(),
                fmt_f64(r.measured),
                fmt_f64(r.predicted),
                fmt_f64(r.tolerance),
                r.counterexamples.len().to_string(),
            ]
        })
        .collect();
    out.write_csv(
        "verify.csv",
        "pprxdb.verify.v1",
        &["claim", "status", "gate", "measured", "predicted", "tolerance", "counterexamples"],
        &rows,
    )
}

// -------------------------------------------------------------------- sweep

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub metric: String,
    pub metric_value: f64,
}

fn apply(scenario: &Scenario, param: SweepParam, value: f64) -> Result<Scenario> {
    let mut s = scenario.clone();
    match param {
        SweepParam::ContributionBudget => s.project.contribution_budget = value,
        SweepParam::BeliefBudget => s.project.belief_budget = value,
        SweepParam::ProvisionPoint => s.project.provision_point = value,
        SweepParam::PriorBelief => s.agents.iter_mut().for_each(|a| a.prior_belief = value),
        SweepParam::DriftGain => {
            let mut touched = false;
            for a in &mut s.agents {
                if let StepGenerator::ContributionDrift { gain, .. } | StepGenerator::DeadlineDrift { gain, .. } = &mut a.generator {
                    *gain = value;
                    touched = true;
                }
            }
            if !touched {
                bail!("drift_gain sweep needs at least one agent with a drift-family generator");
            }
        }
    }
    s.validate().with_context(|| format!("{} = {value}", param.as_str()))?;
    Ok(s)
}

pub fn cmd_sweep(scenario: &Scenario, param: SweepParam, values: &[f64], runs: usize) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        bail!("empty range");
    }
    let mut rows = Vec::new();
    for &value in values {
        let s = apply(scenario, param, value)?;
        let (summary, _) = cmd_simulate(&s, runs)?;
        let mean_payoff = if summary.agents.is_empty() {
            f64::NAN
        } else {
            summary.agents.iter().map(|a| a.mean_payoff).sum::<f64>() / summary.agents.len() as f64
        };
        let metrics = [
            ("b_star", belief_threshold(&s.project)),
            ("funded_rate", summary.funded_rate),
            ("funded_rate_ci_lo", summary.funded_rate_ci95.0),
            ("funded_rate_ci_hi", summary.funded_rate_ci95.1),
            ("mean_contribution_epoch", summary.mean_contribution_epoch.unwrap_or(f64::NAN)),
            ("mean_payoff", mean_payoff),
            ("mean_race_fraction", summary.mean_race_fraction),
        ];
        rows.extend(metrics.into_iter().map(|(metric, metric_value)| SweepRow {
            parameter: param.as_str().into(),
            value,
            metric: metric.into(),
            metric_value,
        }));
    }
    Ok(rows)
}

fn write_sweep(out: &mut OutputDir, rows: &[SweepRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| vec![r.parameter.clone(), fmt_f64(r.value), r.metric.clone(), fmt_f64(r.metric_value)])
        .collect();
    out.write_csv("sweep.csv", "pprxdb.sweep.v1", &["parameter", "value", "metric", "metric_value"], &rows)
}
