//! Small accumulators for Monte Carlo summaries.

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::default();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

/// Sample mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample standard deviation.
    pub std_dev: f64,
}

impl MeanEstimate {
    pub fn from_samples(samples: &[f64]) -> MeanEstimate {
        let n = samples.len();
        if n == 0 {
            return MeanEstimate { n, mean: 0.0, std_dev: 0.0 };
        }
        let mean = compensated_sum(samples.iter().copied()) / n as f64;
        let std_dev = if n > 1 {
            (compensated_sum(samples.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        MeanEstimate { n, mean, std_dev }
    }

    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.std_dev / (self.n as f64).sqrt()
        }
    }
}

/// Normal-approximation 95% interval for a binomial rate.
pub fn binomial_ci95(successes: usize, n: usize) -> (f64, f64, f64) {
    if n == 0 {
        return (0.0, 0.0, 0.0);
    }
    let p = successes as f64 / n as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    (se, (p - 1.96 * se).max(0.0), (p + 1.96 * se).min(1.0))
}
