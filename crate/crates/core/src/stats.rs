//! Mergeable running moments and tail probabilities.

use statrs::function::erf::erfc;

/// Count, mean and sum of squared deviations of a scalar stream.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunningStats {
    pub n: u64,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    /// Combines two disjoint streams (Chan et al. update).
    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        let w = other.n as f64 / n as f64;
        self.mean += delta * w;
        self.m2 += other.m2 + delta * delta * self.n as f64 * w;
        self.n = n;
    }

    /// Unbiased sample variance; zero for fewer than two points.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Running mean vector and co-moment matrix of a vector stream.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentAccumulator {
    pub n: u64,
    pub mean: Vec<f64>,
    /// Row-major `k x k` sum of outer products of deviations.
    comoment: Vec<f64>,
}

impl MomentAccumulator {
    pub fn new(k: usize) -> Self {
        Self { n: 0, mean: vec![0.0; k], comoment: vec![0.0; k * k] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn push(&mut self, x: &[f64]) {
        let k = self.dim();
        debug_assert_eq!(x.len(), k);
        self.n += 1;
        let n = self.n as f64;
        let f = (n - 1.0) / n;
        for i in 0..k {
            let di = x[i] - self.mean[i];
            for j in 0..k {
                self.comoment[i * k + j] += f * di * (x[j] - self.mean[j]);
            }
        }
        for i in 0..k {
            self.mean[i] += (x[i] - self.mean[i]) / n;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = other.clone();
            return;
        }
        let k = self.dim();
        let n = self.n + other.n;
        let w = self.n as f64 * other.n as f64 / n as f64;
        let delta: Vec<f64> = (0..k).map(|i| other.mean[i] - self.mean[i]).collect();
        for i in 0..k {
            for j in 0..k {
                self.comoment[i * k + j] += other.comoment[i * k + j] + delta[i] * delta[j] * w;
            }
        }
        let f = other.n as f64 / n as f64;
        for i in 0..k {
            self.mean[i] += delta[i] * f;
        }
        self.n = n;
    }

    /// Population covariance (divides by `n`), symmetrized, row-major.
    pub fn covariance(&self) -> Vec<f64> {
        let k = self.dim();
        let mut c = vec![0.0; k * k];
        if self.n == 0 {
            return c;
        }
        let inv = 1.0 / self.n as f64;
        for i in 0..k {
            for j in 0..k {
                c[i * k + j] = 0.5 * (self.comoment[i * k + j] + self.comoment[j * k + i]) * inv;
            }
        }
        c
    }
}

/// `P(Z > z)` for a standard normal `Z`.
pub fn normal_upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Number of one-sided exceedances of `z` tolerated among `n` null tests:
/// the binomial mean plus four binomial standard deviations.
pub fn false_positive_budget(n: usize, z: f64) -> usize {
    let p = normal_upper_tail(z);
    let np = n as f64 * p;
    (np + 4.0 * (np * (1.0 - p)).sqrt()).floor() as usize
}
