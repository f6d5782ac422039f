//! Monte Carlo check of the equilibrium contribution timing.
//!
//! Every sampled belief path is scored at each candidate epoch (common random
//! numbers), so epoch comparisons use paired standard errors.

use rayon::prelude::*;

use crate::belief::{classify_generator, default_ensemble, BeliefWalk, DriftClass, StepGenerator, WalkEnv};
use crate::equilibrium::{contribution_cap, timing_high, timing_low, TimingRule};
use crate::error::{Error, Result};
use crate::model::{check_probability, expected_unfunded_payoff, BeliefClass, ProjectConfig};
use crate::oracle::report::{Counterexample, OracleReport};
use crate::rng::derive_seed;
use crate::stats::MeanEstimate;

pub const MIN_MC_RUNS: usize = 10_000;
const Z: f64 = 3.0;
const ABS_SLACK: f64 = 1e-12;

struct PathValues {
    /// Objective at epochs `1..=T_C`.
    by_epoch: Vec<f64>,
    rule_value: f64,
    rule_epoch: u32,
}

fn cell_label(class: BeliefClass, drift: DriftClass, rule: &TimingRule) -> String {
    let tail = match (class, drift, rule) {
        (BeliefClass::High, DriftClass::Martingale, _) => "martingale",
        (BeliefClass::High, DriftClass::SuperMartingale, TimingRule::Immediate { .. }) => "super/b0<=b*",
        (BeliefClass::High, DriftClass::SuperMartingale, _) => "super/b0>b*",
        (BeliefClass::High, DriftClass::SubMartingale, TimingRule::Immediate { .. }) => "sub/b0>=b*",
        (BeliefClass::High, DriftClass::SubMartingale, _) => "sub/b0<b*",
        (BeliefClass::Low, DriftClass::Martingale, _) => "martingale",
        (BeliefClass::Low, DriftClass::SuperMartingale, _) => "super",
        (BeliefClass::Low, DriftClass::SubMartingale, _) => "sub",
        (_, DriftClass::Mixed, _) => "mixed",
    };
    format!("timing:{}/{tail}", class.to_string().to_lowercase())
}

/// Check that the predicted timing rule is optimal among fixed contribution
/// epochs for an agent arriving at epoch 1 with belief `b0`.
///
/// The objective is the expected unfunded payoff at the cap evaluated at the
/// belief held on the contribution epoch. The rule passes when no epoch beats
/// it by more than three paired standard errors. Martingale drift must also
/// leave every epoch statistically indistinguishable from the best one.
#[allow(clippy::too_many_arguments)]
pub fn verify_timing(
    cfg: &ProjectConfig,
    class: BeliefClass,
    generator: &StepGenerator,
    b0: f64,
    valuation: f64,
    reward: f64,
    mc_runs: usize,
    seed: u64,
) -> Result<OracleReport> {
    cfg.validate()?;
    generator.validate("generator")?;
    if mc_runs < MIN_MC_RUNS {
        return Err(Error::validation("mc_runs", format!("must be at least {MIN_MC_RUNS}")));
    }
    // The class is fixed by the report; b0 may sit on either side of 1/2.
    check_probability("b0", b0)?;
    let deadline = cfg.contribution_deadline;
    let drift = classify_generator(generator, &default_ensemble(cfg.provision_point, deadline));
    if drift == DriftClass::Mixed {
        return Err(Error::UnsupportedDrift(format!("{generator:?}")));
    }
    let arrival = 1;
    let rule = match class {
        BeliefClass::High => timing_high(b0, drift, cfg, arrival)?,
        BeliefClass::Low => match timing_low(valuation, reward, drift, cfg, arrival) {
            Ok(rule) => rule,
            Err(Error::PreconditionUnsatisfied { .. }) => {
                return Ok(OracleReport::skipped(
                    format!("timing:low/{drift}"),
                    "precondition m < theta < m*H0/B_C fails",
                ))
            }
            Err(e) => return Err(e),
        },
    };
    let label = cell_label(class, drift, &rule);

    let objective = |b: f64| -> Result<f64> {
        let cap = contribution_cap(class, b, valuation, reward, cfg)?;
        expected_unfunded_payoff(class, b, cap, cfg.provision_point, reward, cfg)
    };
    let envs: Vec<WalkEnv> = (0..=deadline)
        .map(|t| WalkEnv::new(0.0, deadline - t, cfg.provision_point, deadline))
        .collect();

    let paths = (0..mc_runs as u64)
        .into_par_iter()
        .map(|k| {
            let mut walk = BeliefWalk::new(0, b0, arrival, generator.clone(), derive_seed(seed, k), 0);
            for env in &envs[(arrival + 1) as usize..] {
                walk.step(env);
            }
            let beliefs = &walk.trajectory()[arrival as usize..];
            let by_epoch = beliefs.iter().map(|&b| objective(b)).collect::<Result<Vec<_>>>()?;
            let offset = beliefs
                .iter()
                .enumerate()
                .position(|(i, &b)| rule.fires(arrival + i as u32, b))
                .unwrap_or(beliefs.len() - 1);
            Ok(PathValues {
                rule_value: by_epoch[offset],
                rule_epoch: arrival + offset as u32,
                by_epoch,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let epochs: Vec<u32> = (arrival..=deadline).collect();
    let column = |i: usize| paths.iter().map(|p| p.by_epoch[i]).collect::<Vec<_>>();
    let rule_values: Vec<f64> = paths.iter().map(|p| p.rule_value).collect();
    let rule_est = MeanEstimate::from_samples(&rule_values);
    let means: Vec<f64> = (0..epochs.len()).map(|i| MeanEstimate::from_samples(&column(i)).mean).collect();
    let best = (0..epochs.len()).fold(0, |best, i| if means[i] > means[best] { i } else { best });

    let mut report = OracleReport::new(label, rule_est.mean, means[best], 0.0);
    let mut indistinguishable = 0;
    for (i, &epoch) in epochs.iter().enumerate() {
        let col = column(i);
        let vs_rule: Vec<f64> = col.iter().zip(&rule_values).map(|(a, b)| a - b).collect();
        let vs_rule = MeanEstimate::from_samples(&vs_rule);
        let vs_best: Vec<f64> = paths.iter().map(|p| p.by_epoch[best] - p.by_epoch[i]).collect();
        let vs_best = MeanEstimate::from_samples(&vs_best);
        report.detail(format!("mean_epoch_{epoch:02}"), means[i]);
        report.detail(format!("paired_se_epoch_{epoch:02}"), vs_rule.std_error());
        if vs_best.mean <= Z * vs_best.std_error() + ABS_SLACK {
            indistinguishable += 1;
        }
        let bound = Z * vs_rule.std_error() + ABS_SLACK;
        if i == best {
            report.tolerance = bound;
        }
        if vs_rule.mean > bound {
            report.fail(Counterexample::new(
                "a fixed epoch beats the predicted rule",
                [
                    ("epoch", epoch as f64),
                    ("gain", vs_rule.mean),
                    ("paired_se", vs_rule.std_error()),
                    ("b0", b0),
                ],
            ));
        }
    }
    let flat = indistinguishable == epochs.len();
    if drift == DriftClass::Martingale && !flat {
        report.fail(Counterexample::new(
            "martingale drift yet epochs are distinguishable",
            [("indistinguishable", indistinguishable as f64), ("epochs", epochs.len() as f64), ("b0", b0)],
        ));
    }
    let mean_stop = paths.iter().map(|p| p.rule_epoch as f64).sum::<f64>() / paths.len() as f64;
    report.detail("argmax_epoch", epochs[best] as f64);
    report.detail("indistinguishable_epochs", indistinguishable as f64);
    report.detail("flat", if flat { 1.0 } else { 0.0 });
    report.detail("rule_mean", rule_est.mean);
    report.detail("mean_rule_epoch", mean_stop);
    report.note(format!("drift={drift} rule={rule}"));
    Ok(report)
}
