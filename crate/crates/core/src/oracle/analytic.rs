//! Grid checks of the closed-form results: the belief threshold, the
//! indifference property of the caps and low-belief monotonicity.

use crate::equilibrium::{belief_threshold, contribution_cap, contribution_cap_high, contribution_cap_low, lemma5_condition};
use crate::error::{Error, Result};
use crate::model::{expected_funded_payoff, expected_unfunded_payoff, BeliefClass, LowCapVariant, ProjectConfig};
use crate::oracle::report::{Counterexample, OracleReport, Status};

/// Resolution of the grid searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub belief_step: f64,
    pub contribution_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            belief_step: 1e-3,
            contribution_points: 200,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.belief_step > 0.0 && self.belief_step <= 0.1) {
            return Err(Error::validation("grid.belief_step", "must lie in (0, 0.1]"));
        }
        if self.contribution_points < 2 {
            return Err(Error::validation("grid.contribution_points", "must be at least 2"));
        }
        Ok(())
    }

    /// Belief grid points in `[lo, hi)`.
    fn beliefs(&self, lo: f64, hi: f64) -> Vec<f64> {
        let n = ((hi - lo) / self.belief_step).ceil() as usize;
        (0..n).map(|k| lo + k as f64 * self.belief_step).filter(|&b| b < hi).collect()
    }
}

/// Scalings of `(θ, m)` the threshold must be invariant to.
const BSTAR_SCALINGS: [(f64, f64); 10] = [
    (1.0, 1.0),
    (0.1, 1.0),
    (1.0, 0.1),
    (0.5, 2.0),
    (2.0, 0.5),
    (3.0, 3.0),
    (10.0, 1.0),
    (1.0, 10.0),
    (0.2, 5.0),
    (5.0, 0.2),
];

fn high_unfunded_at_cap(b: f64, valuation: f64, reward: f64, cfg: &ProjectConfig) -> Result<f64> {
    let cap = contribution_cap_high(b, valuation, reward, cfg)?;
    expected_unfunded_payoff(BeliefClass::High, b, cap, cfg.provision_point, reward, cfg)
}

fn grid_argmax(values: &[(f64, f64)]) -> (f64, f64) {
    values
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, (b, v)| if v > best.1 { (b, v) } else { best })
}

/// The high-belief expected unfunded payoff at the cap peaks at `b*` for
/// every `(θ, m)`.
pub fn verify_bstar(cfg: &ProjectConfig, valuation: f64, reward: f64, grid: &GridSpec) -> Result<OracleReport> {
    cfg.validate()?;
    grid.validate()?;
    let claim = "bstar";
    if !(valuation + reward > 0.0) {
        return Ok(OracleReport::skipped(claim, "theta + m must be positive for a non-trivial objective"));
    }
    let b_star = belief_threshold(cfg);
    let beliefs = grid.beliefs(0.0, 1.0 + grid.belief_step / 2.0);
    let mut report = OracleReport::new(claim, f64::NAN, b_star, grid.belief_step);
    let mut worst = 0.0f64;
    for (k, (s_theta, s_m)) in BSTAR_SCALINGS.into_iter().enumerate() {
        let (theta, m) = (valuation * s_theta, reward * s_m);
        let values = beliefs
            .iter()
            .map(|&b| Ok((b, high_unfunded_at_cap(b, theta, m, cfg)?)))
            .collect::<Result<Vec<_>>>()?;
        let (argmax, _) = grid_argmax(&values);
        if k == 0 {
            report.measured = argmax;
        }
        let gap = (argmax - b_star).abs();
        worst = worst.max(gap);
        if gap > grid.belief_step {
            report.fail(Counterexample::new(
                "grid maximiser away from the threshold",
                [("theta", theta), ("m", m), ("argmax", argmax), ("b_star", b_star)],
            ));
        }
    }
    report.detail("pairs", BSTAR_SCALINGS.len() as f64);
    report.detail("max_abs_gap", worst);
    Ok(report)
}

/// Indifference `E[π^F] = E[π^UF]` at the class cap (with `C0 = H0`).
///
/// The published low-belief cap does not satisfy it; such a mismatch is
/// reported as [`Status::ExpectedDocumented`].
pub fn verify_indifference(
    cfg: &ProjectConfig,
    class: BeliefClass,
    belief: f64,
    valuation: f64,
    reward: f64,
    variant: LowCapVariant,
) -> Result<OracleReport> {
    cfg.validate()?;
    let cfg = &cfg.clone().with_variant(variant);
    let tolerance = 1e-9;
    let claim = format!("indifference:{class}");
    if class == BeliefClass::Low && cfg.low_cap_variant == LowCapVariant::Rederived {
        let h0 = cfg.provision_point;
        if h0 * belief * valuation - h0 * reward * (1.0 - belief) < 0.0 {
            return Ok(OracleReport::skipped(claim, "cap floored at zero; no interior indifference point"));
        }
    }
    let cap = contribution_cap(class, belief, valuation, reward, cfg)?;
    let funded = expected_funded_payoff(class, belief, valuation, cap, reward)?;
    let unfunded = expected_unfunded_payoff(class, belief, cap, cfg.provision_point, reward, cfg)?;
    let scale = funded.abs().max(unfunded.abs());
    let rel = if scale == 0.0 { 0.0 } else { (funded - unfunded).abs() / scale };
    let mut report = OracleReport::new(claim, rel, 0.0, tolerance);
    report.detail("cap", cap);
    report.detail("funded", funded);
    report.detail("unfunded", unfunded);
    if rel > tolerance {
        report.fail(Counterexample::new(
            "expected payoffs differ at the cap",
            [
                ("b", belief),
                ("theta", valuation),
                ("m", reward),
                ("cap", cap),
                ("funded", funded),
                ("unfunded", unfunded),
            ],
        ));
        if class == BeliefClass::Low && cfg.low_cap_variant == LowCapVariant::PaperVerbatim {
            report.status = Status::ExpectedDocumented;
            report.note("published low-belief cap carries the reward term with the wrong sign");
        }
    }
    Ok(report)
}

/// Expected unfunded payoff of a low-belief agent at its cap across
/// `b ∈ [0, 0.5)`: `(b, with reward term, without reward term)`.
pub fn low_unfunded_profile(cfg: &ProjectConfig, valuation: f64, reward: f64, grid: &GridSpec) -> Result<Vec<(f64, f64, f64)>> {
    grid.validate()?;
    let r = cfg.budget_ratio();
    grid.beliefs(0.0, 0.5)
        .into_iter()
        .map(|b| {
            let cap = contribution_cap_low(b, valuation, reward, cfg)?;
            let with = expected_unfunded_payoff(BeliefClass::Low, b, cap, cfg.provision_point, reward, cfg)?;
            Ok((b, with, (1.0 - b) * cap * r))
        })
        .collect()
}

/// Maximal runs of grid steps on which `values` fails to increase.
fn non_increasing_runs(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut runs = Vec::new();
    let mut start: Option<f64> = None;
    for w in points.windows(2) {
        let increasing = w[1].1 > w[0].1;
        match (increasing, start) {
            (false, None) => start = Some(w[0].0),
            (true, Some(s)) => {
                runs.push((s, w[0].0));
                start = None;
            }
            _ => {}
        }
    }
    if let (Some(s), Some(last)) = (start, points.last()) {
        runs.push((s, last.0));
    }
    runs
}

/// Whether the low-belief expected unfunded payoff at the cap increases in
/// `b` on `[0, 0.5)` under `variant`. Informational: the
/// report never gates.
pub fn verify_low_monotonicity(
    cfg: &ProjectConfig,
    valuation: f64,
    reward: f64,
    variant: LowCapVariant,
    grid: &GridSpec,
) -> Result<OracleReport> {
    cfg.validate()?;
    let cfg = &cfg.clone().with_variant(variant);
    let claim = format!("low_monotonicity:{}", cfg.low_cap_variant.as_str());
    if !lemma5_condition(valuation, reward, cfg) {
        let mut report = OracleReport::skipped(claim, "precondition m < theta < m*H0/B_C fails");
        report.gate = false;
        return Ok(report);
    }
    let profile = low_unfunded_profile(cfg, valuation, reward, grid)?;
    let with: Vec<(f64, f64)> = profile.iter().map(|&(b, v, _)| (b, v)).collect();
    let without: Vec<(f64, f64)> = profile.iter().map(|&(b, _, v)| (b, v)).collect();
    let frac = |pts: &[(f64, f64)]| {
        let steps = pts.len().saturating_sub(1).max(1) as f64;
        pts.windows(2).filter(|w| w[1].1 > w[0].1).count() as f64 / steps
    };
    let mut report = OracleReport::new(claim, frac(&with), 1.0, 0.0);
    report.gate = false;
    report.detail("increasing_fraction_without_reward_term", frac(&without));
    report.detail("unfunded_at_zero", with.first().map_or(f64::NAN, |p| p.1));
    for (lo, hi) in non_increasing_runs(&with) {
        report.fail(Counterexample::new(
            "expected unfunded payoff at the cap does not increase",
            [("b_from", lo), ("b_to", hi), ("theta", valuation), ("m", reward)],
        ));
    }
    Ok(report)
}
