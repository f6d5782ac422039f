//! Belief random walks over the contribution phase.
//!
//! An agent's belief moves as `b_t = clamp(b_{t-1} + X_t, 0, 1)` where the step
//! `X_t` takes one of two values whose sizes may depend on the observed total
//! contribution and the remaining time. The built-in drift families are
//! placeholder instantiations of that dependence:
//!
//! * `ContributionDrift`: `E[X | env] = gain · (C_t / H0 − b_prev)`
//! * `DeadlineDrift`: `E[X | env] = −gain · (1 − remaining / T_C)`
//!
//! both with a symmetric `±noise` kick on top.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Information available to an agent when its belief steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkEnv {
    /// Total contribution `C_t` at the start of the epoch.
    pub current_total: f64,
    pub remaining_epochs: u32,
    pub provision_point: f64,
    /// Contribution-phase length `T_C`.
    pub horizon: u32,
}

impl WalkEnv {
    pub fn new(current_total: f64, remaining_epochs: u32, provision_point: f64, horizon: u32) -> Self {
        WalkEnv {
            current_total,
            remaining_epochs,
            provision_point,
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.current_total < 0.0 {
            return Err(Error::validation("env.current_total", "must be >= 0"));
        }
        if self.remaining_epochs > self.horizon {
            return Err(Error::validation("env.remaining_epochs", "must not exceed T_C"));
        }
        Ok(())
    }
}

/// A walk state used for drift classification: the belief the step starts from
/// and the environment it sees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvPoint {
    pub belief: f64,
    pub env: WalkEnv,
}

type StepFn = dyn Fn(f64, &WalkEnv, &mut dyn RngCore) -> f64 + Send + Sync;

/// User-supplied step distribution. Receives the current belief and env and
/// returns the raw (unclamped) step.
#[derive(Clone)]
pub struct CustomStep {
    pub name: String,
    sampler: Arc<StepFn>,
}

impl CustomStep {
    pub fn new<F>(name: impl Into<String>, sampler: F) -> Self
    where
        F: Fn(f64, &WalkEnv, &mut dyn RngCore) -> f64 + Send + Sync + 'static,
    {
        CustomStep {
            name: name.into(),
            sampler: Arc::new(sampler),
        }
    }

    pub fn sample(&self, belief: f64, env: &WalkEnv, rng: &mut dyn RngCore) -> f64 {
        (self.sampler)(belief, env, rng)
    }
}

impl fmt::Debug for CustomStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomStep").field("name", &self.name).finish()
    }
}

impl PartialEq for CustomStep {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.sampler, &other.sampler)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StepGenerator {
    /// Step `up` with probability `p`, else `down`.
    SymmetricBernoulli { p: f64, up: f64, down: f64 },
    ContributionDrift { gain: f64, noise: f64 },
    DeadlineDrift { gain: f64, noise: f64 },
    #[serde(skip)]
    Custom(CustomStep),
}

impl StepGenerator {
    pub fn validate(&self, path: &str) -> Result<()> {
        match *self {
            StepGenerator::SymmetricBernoulli { p, up, down } => {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::validation(format!("{path}.p"), "must lie in [0, 1]"));
                }
                if !(up > 0.0 && up.is_finite()) {
                    return Err(Error::validation(format!("{path}.up"), "must be > 0"));
                }
                if !(down < 0.0 && down.is_finite()) {
                    return Err(Error::validation(format!("{path}.down"), "must be < 0"));
                }
            }
            StepGenerator::ContributionDrift { gain, noise } | StepGenerator::DeadlineDrift { gain, noise } => {
                if !gain.is_finite() {
                    return Err(Error::validation(format!("{path}.gain"), "must be finite"));
                }
                if !(noise >= 0.0 && noise.is_finite()) {
                    return Err(Error::validation(format!("{path}.noise"), "must be finite and >= 0"));
                }
            }
            StepGenerator::Custom(_) => {}
        }
        Ok(())
    }

    /// Analytical `E[X | belief, env]`; `None` for custom generators.
    pub fn expected_step(&self, belief: f64, env: &WalkEnv) -> Option<f64> {
        match *self {
            StepGenerator::SymmetricBernoulli { p, up, down } => Some(p * up + (1.0 - p) * down),
            StepGenerator::ContributionDrift { gain, .. } => {
                Some(gain * (env.current_total / env.provision_point - belief))
            }
            StepGenerator::DeadlineDrift { gain, .. } => {
                Some(-gain * (1.0 - env.remaining_epochs as f64 / env.horizon as f64))
            }
            StepGenerator::Custom(_) => None,
        }
    }

    /// Draw a raw step. Built-in families consume exactly one uniform per step
    /// so that walks stay aligned across experiments sharing a stream.
    pub fn sample_step<R: RngCore>(&self, belief: f64, env: &WalkEnv, rng: &mut R) -> f64 {
        match self {
            StepGenerator::SymmetricBernoulli { p, up, down } => {
                let u: f64 = rng.random();
                if u < *p {
                    *up
                } else {
                    *down
                }
            }
            StepGenerator::ContributionDrift { noise, .. } | StepGenerator::DeadlineDrift { noise, .. } => {
                let drift = self.expected_step(belief, env).unwrap_or(0.0);
                let u: f64 = rng.random();
                if u < 0.5 {
                    drift + noise
                } else {
                    drift - noise
                }
            }
            StepGenerator::Custom(custom) => custom.sample(belief, env, rng),
        }
    }

    /// Scale of the steps, used as the zero tolerance of the analytical sign.
    fn step_scale(&self) -> f64 {
        match *self {
            StepGenerator::SymmetricBernoulli { up, down, .. } => up.abs() + down.abs(),
            StepGenerator::ContributionDrift { gain, noise } | StepGenerator::DeadlineDrift { gain, noise } => {
                gain.abs() + noise
            }
            StepGenerator::Custom(_) => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftClass {
    Martingale,
    SuperMartingale,
    SubMartingale,
    Mixed,
}

impl DriftClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DriftClass::Martingale => "martingale",
            DriftClass::SuperMartingale => "super_martingale",
            DriftClass::SubMartingale => "sub_martingale",
            DriftClass::Mixed => "mixed",
        }
    }

    fn from_signs(signs: impl IntoIterator<Item = i8>) -> DriftClass {
        let (mut neg, mut pos) = (false, false);
        for s in signs {
            neg |= s < 0;
            pos |= s > 0;
        }
        match (neg, pos) {
            (false, false) => DriftClass::Martingale,
            (true, false) => DriftClass::SuperMartingale,
            (false, true) => DriftClass::SubMartingale,
            (true, true) => DriftClass::Mixed,
        }
    }
}

impl fmt::Display for DriftClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Samples per environment when estimating a custom generator's drift.
pub const CUSTOM_SAMPLES: usize = 100_000;
/// Two-sided normal quantile at level 10⁻³.
const Z_TWO_SIDED_1E3: f64 = 3.290_526_731_491_926;

/// Classify a generator by the sign of its conditional expected step over an
/// ensemble of walk states. An empty ensemble yields `Mixed`.
pub fn classify_generator(gen: &StepGenerator, ensemble: &[EnvPoint]) -> DriftClass {
    classify_generator_seeded(gen, ensemble, 0)
}

/// As [`classify_generator`], with an explicit seed for the Monte Carlo path
/// taken by custom generators.
pub fn classify_generator_seeded(gen: &StepGenerator, ensemble: &[EnvPoint], seed: u64) -> DriftClass {
    if ensemble.is_empty() {
        return DriftClass::Mixed;
    }
    let tol = 1e-12 * gen.step_scale();
    if let StepGenerator::Custom(custom) = gen {
        let signs = ensemble.iter().enumerate().map(|(k, point)| {
            let mut rng = stream_rng(seed, k as u64);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for _ in 0..CUSTOM_SAMPLES {
                let x = custom.sample(point.belief, &point.env, &mut rng);
                sum += x;
                sum_sq += x * x;
            }
            let n = CUSTOM_SAMPLES as f64;
            let mean = sum / n;
            let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
            let half = Z_TWO_SIDED_1E3 * (var / n).sqrt();
            if mean - half > 0.0 {
                1
            } else if mean + half < 0.0 {
                -1
            } else {
                0
            }
        });
        return DriftClass::from_signs(signs.collect::<Vec<_>>());
    }
    DriftClass::from_signs(ensemble.iter().map(|point| {
        let e = gen.expected_step(point.belief, &point.env).unwrap_or(0.0);
        if e > tol {
            1
        } else if e < -tol {
            -1
        } else {
            0
        }
    }))
}

/// A grid of walk states covering beliefs in (0, 1), totals in `[0, H0]` and
/// every remaining-time value.
pub fn default_ensemble(provision_point: f64, horizon: u32) -> Vec<EnvPoint> {
    let mut points = Vec::new();
    for b in 1..10 {
        for c in 0..=4 {
            for remaining in 0..=horizon {
                points.push(EnvPoint {
                    belief: b as f64 / 10.0,
                    env: WalkEnv::new(provision_point * c as f64 / 4.0, remaining, provision_point, horizon),
                });
            }
        }
    }
    points
}

/// One agent's belief process. `trajectory[t]` is the belief held at
/// contribution-phase epoch `t`; entries up to the arrival epoch equal the
/// prior.
#[derive(Debug, Clone)]
pub struct BeliefWalk {
    pub agent_id: u32,
    pub prior: f64,
    pub arrival: u32,
    pub generator: StepGenerator,
    pub stream_id: u64,
    trajectory: Vec<f64>,
    touched_boundary: bool,
    rng: ChaCha8Rng,
}

impl BeliefWalk {
    pub fn new(agent_id: u32, prior: f64, arrival: u32, generator: StepGenerator, seed: u64, stream_id: u64) -> Self {
        BeliefWalk {
            agent_id,
            prior,
            arrival,
            generator,
            stream_id,
            trajectory: vec![prior; arrival as usize + 1],
            touched_boundary: false,
            rng: stream_rng(seed, stream_id),
        }
    }

    pub fn current(&self) -> f64 {
        *self.trajectory.last().expect("trajectory starts non-empty")
    }

    /// Epoch of the most recent belief.
    pub fn epoch(&self) -> u32 {
        (self.trajectory.len() - 1) as u32
    }

    pub fn belief_at(&self, epoch: u32) -> Option<f64> {
        self.trajectory.get(epoch as usize).copied()
    }

    pub fn trajectory(&self) -> &[f64] {
        &self.trajectory
    }

    /// True once any emitted belief sat on 0 or 1.
    pub fn touched_boundary(&self) -> bool {
        self.touched_boundary
    }

    /// Advance one epoch: `clamp(b_prev + X, 0, 1)`.
    pub fn step(&mut self, env: &WalkEnv) -> f64 {
        let prev = self.current();
        let x = self.generator.sample_step(prev, env, &mut self.rng);
        let raw = prev + x;
        let next = raw.clamp(0.0, 1.0);
        if next <= 0.0 || next >= 1.0 {
            self.touched_boundary = true;
        }
        self.trajectory.push(next);
        next
    }

    /// Take `horizon` steps, the k-th seeing `envs[k]`.
    pub fn sample_path(&mut self, envs: &[WalkEnv], horizon: u32) -> Result<Vec<f64>> {
        if let Some(env) = envs.first() {
            if horizon > env.horizon {
                return Err(Error::validation(
                    "horizon",
                    format!("{horizon} exceeds the contribution deadline {}", env.horizon),
                ));
            }
        }
        if envs.len() < horizon as usize {
            return Err(Error::validation(
                "env_stream",
                format!("needs {horizon} environments, got {}", envs.len()),
            ));
        }
        Ok(envs[..horizon as usize].iter().map(|env| self.step(env)).collect())
    }
}

/// Sample a path without retaining the walk.
pub fn sample_path(walk: &BeliefWalk, envs: &[WalkEnv], horizon: u32) -> Result<Vec<f64>> {
    walk.clone().sample_path(envs, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn env() -> WalkEnv {
        WalkEnv::new(0.0, 5, 100.0, 10)
    }

    fn bernoulli(p: f64, d: f64) -> StepGenerator {
        StepGenerator::SymmetricBernoulli { p, up: d, down: -d }
    }

    #[test]
    fn single_heads_step() {
        let mut walk = BeliefWalk::new(1, 0.5, 0, bernoulli(1.0, 0.1), 1, 1);
        assert_relative_eq!(walk.step(&env()), 0.6, epsilon = 1e-15);
    }

    #[test]
    fn clamps_at_one() {
        let mut walk = BeliefWalk::new(1, 0.95, 0, bernoulli(1.0, 0.1), 1, 1);
        assert_eq!(walk.step(&env()), 1.0);
        assert!(walk.touched_boundary());
    }

    #[test]
    fn contribution_drift_fixed_point() {
        let gen = StepGenerator::ContributionDrift { gain: 0.3, noise: 0.0 };
        let mut walk = BeliefWalk::new(1, 0.5, 0, gen, 1, 1);
        let e = WalkEnv::new(50.0, 3, 100.0, 10);
        assert_eq!(walk.step(&e), 0.5);
    }

    #[test]
    fn deadline_drift_expected_step() {
        let gen = StepGenerator::DeadlineDrift { gain: 0.1, noise: 0.02 };
        assert_relative_eq!(gen.expected_step(0.4, &WalkEnv::new(0.0, 10, 100.0, 10)).unwrap(), 0.0);
        assert_relative_eq!(gen.expected_step(0.4, &WalkEnv::new(0.0, 5, 100.0, 10)).unwrap(), -0.05);
        assert_relative_eq!(gen.expected_step(0.4, &WalkEnv::new(0.0, 0, 100.0, 10)).unwrap(), -0.1);
    }

    #[test]
    fn classify_bernoulli_families() {
        let ens = default_ensemble(100.0, 10);
        let d = 0.05;
        assert_eq!(classify_generator(&bernoulli(0.5, d), &ens), DriftClass::Martingale);
        assert_eq!(classify_generator(&bernoulli(0.4, d), &ens), DriftClass::SuperMartingale);
        assert_eq!(classify_generator(&bernoulli(0.6, d), &ens), DriftClass::SubMartingale);
    }

    #[test]
    fn classify_drift_families() {
        let ens = default_ensemble(100.0, 10);
        let deadline = StepGenerator::DeadlineDrift { gain: 0.02, noise: 0.01 };
        assert_eq!(classify_generator(&deadline, &ens), DriftClass::SuperMartingale);
        let rising = StepGenerator::DeadlineDrift { gain: -0.02, noise: 0.01 };
        assert_eq!(classify_generator(&rising, &ens), DriftClass::SubMartingale);
        let contribution = StepGenerator::ContributionDrift { gain: 0.2, noise: 0.01 };
        assert_eq!(classify_generator(&contribution, &ens), DriftClass::Mixed);
        let flat = StepGenerator::ContributionDrift { gain: 0.0, noise: 0.01 };
        assert_eq!(classify_generator(&flat, &ens), DriftClass::Martingale);
        assert_eq!(classify_generator(&flat, &[]), DriftClass::Mixed);
    }

    #[test]
    fn classify_custom_by_sampling() {
        let ens = [EnvPoint { belief: 0.5, env: env() }];
        let fair = CustomStep::new("fair", |_, _, rng: &mut dyn RngCore| {
            if rng.random::<f64>() < 0.5 {
                0.01
            } else {
                -0.01
            }
        });
        assert_eq!(
            classify_generator(&StepGenerator::Custom(fair), &ens),
            DriftClass::Martingale
        );
        let falling = CustomStep::new("falling", |_, _, rng: &mut dyn RngCore| {
            if rng.random::<f64>() < 0.4 {
                0.01
            } else {
                -0.01
            }
        });
        assert_eq!(
            classify_generator(&StepGenerator::Custom(falling), &ens),
            DriftClass::SuperMartingale
        );
        // Sign depends on the belief: drifts up below 1/2, down above.
        let reverting = CustomStep::new("reverting", |b, _, rng: &mut dyn RngCore| {
            let kick = if rng.random::<f64>() < 0.5 { 0.01 } else { -0.01 };
            0.1 * (0.5 - b) + kick
        });
        let two = [EnvPoint { belief: 0.2, env: env() }, EnvPoint { belief: 0.8, env: env() }];
        assert_eq!(
            classify_generator(&StepGenerator::Custom(reverting), &two),
            DriftClass::Mixed
        );
    }

    #[test]
    fn deterministic_ascent_path() {
        let walk = BeliefWalk::new(1, 0.5, 0, bernoulli(1.0, 0.1), 9, 3);
        let envs = vec![env(); 3];
        let path = sample_path(&walk, &envs, 3).unwrap();
        assert_eq!(path.len(), 3);
        for (got, want) in path.iter().zip([0.6, 0.7, 0.8]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_noise_zero_drift_is_constant() {
        let gen = StepGenerator::DeadlineDrift { gain: 0.0, noise: 0.0 };
        let walk = BeliefWalk::new(1, 0.37, 0, gen, 9, 3);
        let envs: Vec<WalkEnv> = (0..10).map(|k| WalkEnv::new(0.0, 9 - k, 100.0, 10)).collect();
        let path = sample_path(&walk, &envs, 10).unwrap();
        assert!(path.iter().all(|&b| b == 0.37));
    }

    #[test]
    fn horizon_beyond_deadline_is_rejected() {
        let walk = BeliefWalk::new(1, 0.5, 0, bernoulli(0.5, 0.1), 9, 3);
        let envs = vec![env(); 11];
        assert!(matches!(sample_path(&walk, &envs, 11), Err(Error::Validation { .. })));
    }

    #[test]
    fn arrival_prefix_holds_prior() {
        let mut walk = BeliefWalk::new(4, 0.3, 3, bernoulli(0.5, 0.1), 9, 4);
        assert_eq!(walk.belief_at(3), Some(0.3));
        assert_eq!(walk.epoch(), 3);
        walk.step(&env());
        assert_eq!(walk.epoch(), 4);
        assert_eq!(walk.trajectory()[..4], [0.3; 4]);
    }

    #[test]
    fn generator_validation() {
        assert!(bernoulli(0.5, 0.1).validate("g").is_ok());
        assert!(bernoulli(1.5, 0.1).validate("g").is_err());
        let bad = StepGenerator::SymmetricBernoulli { p: 0.5, up: -0.1, down: -0.1 };
        assert!(bad.validate("g").is_err());
        let bad = StepGenerator::SymmetricBernoulli { p: 0.5, up: 0.1, down: 0.1 };
        assert!(bad.validate("g").is_err());
        assert!(StepGenerator::DeadlineDrift { gain: 0.1, noise: -1.0 }.validate("g").is_err());
    }
}
