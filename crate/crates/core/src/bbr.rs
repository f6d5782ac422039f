//! Belief-based rewards.
//!
//! Each belief-phase report receives a raw score `y_i` from a [`PeerScorer`].
//! Scores are normalised over everyone who had reported by the same epoch,
//! `w_i = y_i / Σ_{j: t_j ≤ t_i} y_j`, so later reporters face weakly larger
//! denominators. The budget `B_B` is then split within each belief class in
//! proportion to `w`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_probability, classify_agent, BeliefClass};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefReport {
    pub agent_id: u32,
    pub reported_belief: f64,
    pub report_epoch: u32,
}

impl BeliefReport {
    pub fn class(&self) -> Result<BeliefClass> {
        classify_agent(self.reported_belief)
    }
}

/// Raw score source for belief reports. Implementations must return
/// non-negative scores.
pub trait PeerScorer: Send + Sync {
    fn score(&self, report: &BeliefReport, peers: &[BeliefReport]) -> f64;
}

/// Every report scores 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformScorer;

impl PeerScorer for UniformScorer {
    fn score(&self, _report: &BeliefReport, _peers: &[BeliefReport]) -> f64 {
        1.0
    }
}

/// Quadratic proper score `1 − (b̂ − outcome)²` against a reference funding
/// outcome (e.g. the funded frequency of a reference ensemble).
#[derive(Debug, Clone, Copy)]
pub struct QuadraticScorer {
    pub outcome: f64,
}

impl PeerScorer for QuadraticScorer {
    fn score(&self, report: &BeliefReport, _peers: &[BeliefReport]) -> f64 {
        1.0 - (report.reported_belief - self.outcome).powi(2)
    }
}

/// Serializable scorer selection for scenario files.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScorerConfig {
    #[default]
    Uniform,
    Quadratic { outcome: f64 },
}

impl ScorerConfig {
    pub fn build(&self) -> Box<dyn PeerScorer> {
        match *self {
            ScorerConfig::Uniform => Box::new(UniformScorer),
            ScorerConfig::Quadratic { outcome } => Box::new(QuadraticScorer { outcome }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let ScorerConfig::Quadratic { outcome } = *self {
            check_probability("scorer.outcome", outcome)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredReport {
    pub report: BeliefReport,
    pub raw: f64,
    pub weight: f64,
}

/// Scores in report order (epoch, then agent id).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub entries: Vec<ScoredReport>,
}

impl ScoreVector {
    pub fn weight_of(&self, agent_id: u32) -> Option<f64> {
        self.entries.iter().find(|e| e.report.agent_id == agent_id).map(|e| e.weight)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn score_reports(reports: &[BeliefReport], scorer: &dyn PeerScorer) -> Result<ScoreVector> {
    let mut sorted = reports.to_vec();
    sorted.sort_by_key(|r| (r.report_epoch, r.agent_id));
    for pair in sorted.windows(2) {
        if pair[0].agent_id == pair[1].agent_id {
            return Err(Error::validation("reports", format!("agent {} reported twice", pair[0].agent_id)));
        }
    }

    let mut raw = Vec::with_capacity(sorted.len());
    for report in &sorted {
        check_probability("report.reported_belief", report.reported_belief)?;
        let y = scorer.score(report, &sorted);
        if !(y >= 0.0) {
            return Err(Error::ScorerContract {
                agent_id: report.agent_id,
                score: y,
            });
        }
        raw.push(y);
    }

    // Running denominator per epoch: everyone with t_j <= t_i.
    let mut entries = Vec::with_capacity(sorted.len());
    let mut start = 0;
    let mut cumulative = 0.0;
    while start < sorted.len() {
        let epoch = sorted[start].report_epoch;
        let end = sorted[start..]
            .iter()
            .position(|r| r.report_epoch != epoch)
            .map_or(sorted.len(), |k| start + k);
        cumulative += raw[start..end].iter().sum::<f64>();
        for k in start..end {
            let weight = if cumulative > 0.0 { raw[k] / cumulative } else { 0.0 };
            entries.push(ScoredReport {
                report: sorted[k],
                raw: raw[k],
                weight,
            });
        }
        start = end;
    }
    Ok(ScoreVector { entries })
}

/// Split `B_B` within each class in proportion to the weights. Returns `m_i`
/// keyed by agent id; agents of an empty class simply do not appear.
pub fn compute_bbr(
    scores: &ScoreVector,
    classes: &BTreeMap<u32, BeliefClass>,
    belief_budget: f64,
) -> Result<BTreeMap<u32, f64>> {
    let mut totals: BTreeMap<BeliefClass, f64> = BTreeMap::new();
    for entry in &scores.entries {
        let class = class_of(classes, entry.report.agent_id)?;
        *totals.entry(class).or_insert(0.0) += entry.weight;
    }
    for (class, total) in &totals {
        if *total <= 0.0 {
            return Err(Error::DegenerateScores(class.to_string()));
        }
    }
    let mut rewards = BTreeMap::new();
    for entry in &scores.entries {
        let class = class_of(classes, entry.report.agent_id)?;
        rewards.insert(entry.report.agent_id, entry.weight / totals[&class] * belief_budget);
    }
    Ok(rewards)
}

fn class_of(classes: &BTreeMap<u32, BeliefClass>, agent_id: u32) -> Result<BeliefClass> {
    classes
        .get(&agent_id)
        .copied()
        .ok_or_else(|| Error::validation("classes", format!("no belief class for agent {agent_id}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn report(agent_id: u32, b: f64, epoch: u32) -> BeliefReport {
        BeliefReport {
            agent_id,
            reported_belief: b,
            report_epoch: epoch,
        }
    }

    struct Negative;
    impl PeerScorer for Negative {
        fn score(&self, _: &BeliefReport, _: &[BeliefReport]) -> f64 {
            -1.0
        }
    }

    struct Zero;
    impl PeerScorer for Zero {
        fn score(&self, _: &BeliefReport, _: &[BeliefReport]) -> f64 {
            0.0
        }
    }

    #[test]
    fn running_normalisation() {
        let reports = [report(3, 0.6, 3), report(1, 0.6, 1), report(2, 0.6, 2)];
        let scores = score_reports(&reports, &UniformScorer).unwrap();
        let w: Vec<f64> = scores.entries.iter().map(|e| e.weight).collect();
        assert_relative_eq!(w[0], 1.0);
        assert_relative_eq!(w[1], 0.5);
        assert_relative_eq!(w[2], 1.0 / 3.0);
        assert_eq!(scores.entries[0].report.agent_id, 1);
    }

    #[test]
    fn single_and_simultaneous_reporters() {
        let single = score_reports(&[report(7, 0.2, 4)], &UniformScorer).unwrap();
        assert_eq!(single.weight_of(7), Some(1.0));
        let both = score_reports(&[report(2, 0.7, 1), report(1, 0.7, 1)], &UniformScorer).unwrap();
        assert_eq!(both.weight_of(1), Some(0.5));
        assert_eq!(both.weight_of(2), Some(0.5));
    }

    #[test]
    fn empty_reports_give_empty_vector() {
        assert!(score_reports(&[], &UniformScorer).unwrap().is_empty());
    }

    #[test]
    fn negative_scorer_is_a_contract_error() {
        let err = score_reports(&[report(1, 0.5, 1)], &Negative).unwrap_err();
        assert!(matches!(err, Error::ScorerContract { agent_id: 1, .. }));
    }

    #[test]
    fn duplicate_reports_rejected() {
        assert!(score_reports(&[report(1, 0.5, 1), report(1, 0.6, 2)], &UniformScorer).is_err());
    }

    #[test]
    fn sole_member_takes_budget() {
        let scores = score_reports(&[report(1, 0.9, 1)], &UniformScorer).unwrap();
        let classes = BTreeMap::from([(1, BeliefClass::High)]);
        let m = compute_bbr(&scores, &classes, 10.0).unwrap();
        assert_eq!(m[&1], 10.0);
    }

    #[test]
    fn proportional_split() {
        let scores = score_reports(&[report(1, 0.9, 1), report(2, 0.8, 2)], &UniformScorer).unwrap();
        let classes = BTreeMap::from([(1, BeliefClass::High), (2, BeliefClass::High)]);
        let m = compute_bbr(&scores, &classes, 9.0).unwrap();
        assert_relative_eq!(m[&1], 6.0, epsilon = 1e-12);
        assert_relative_eq!(m[&2], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn each_class_gets_its_own_budget() {
        let reports = [report(1, 0.9, 1), report(2, 0.1, 1), report(3, 0.2, 2), report(4, 0.7, 3)];
        let scores = score_reports(&reports, &UniformScorer).unwrap();
        let classes: BTreeMap<u32, BeliefClass> =
            reports.iter().map(|r| (r.agent_id, r.class().unwrap())).collect();
        let m = compute_bbr(&scores, &classes, 12.0).unwrap();
        assert_relative_eq!(m[&1] + m[&4], 12.0, epsilon = 1e-9);
        assert_relative_eq!(m[&2] + m[&3], 12.0, epsilon = 1e-9);
    }

    #[test]
    fn empty_low_class_pays_nothing() {
        let scores = score_reports(&[report(1, 0.9, 1), report(2, 0.6, 2)], &UniformScorer).unwrap();
        let classes = BTreeMap::from([(1, BeliefClass::High), (2, BeliefClass::High)]);
        let m = compute_bbr(&scores, &classes, 5.0).unwrap();
        assert_eq!(m.len(), 2);
        assert_relative_eq!(m.values().sum::<f64>(), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn all_zero_scores_are_degenerate() {
        let scores = score_reports(&[report(1, 0.9, 1)], &Zero).unwrap();
        let classes = BTreeMap::from([(1, BeliefClass::High)]);
        assert!(matches!(compute_bbr(&scores, &classes, 5.0), Err(Error::DegenerateScores(_))));
    }

    #[test]
    fn quadratic_scorer_rewards_accuracy() {
        let q = QuadraticScorer { outcome: 1.0 };
        assert_eq!(q.score(&report(1, 1.0, 1), &[]), 1.0);
        assert_relative_eq!(q.score(&report(1, 0.5, 1), &[]), 0.75);
    }
}
