//! Potentials with stochastic gradient oracles, and empirical probes of their
//! declared regularity constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{Read, Write};
use std::path::Path;
use thiserror::Error;

use crate::constants::ProblemParams;
use crate::stats::RunningStats;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model does not expose a full gradient")]
    NoFullGradient,
    #[error("model data law is not finitely enumerable")]
    NotEnumerable,
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid model parameter: {0}")]
    Parameter(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Regularity constants a model asserts about itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants {
    /// Lipschitz constant in the parameter, relative to `(1 + |x|)^rho`.
    pub l1: f64,
    /// Lipschitz constant in the data, relative to `(1 + |x| + |x'|)^rho (1 + |theta|)`.
    pub l2: f64,
    pub rho: f64,
    /// Dissipativity of the full gradient: `<h(t), t> >= a |t|^2 - b`.
    pub a: f64,
    pub b: f64,
    /// `|H(0, 0)|`, or an upper bound on it.
    pub big_h0: f64,
    /// `|h(0)|`.
    pub h0: f64,
    /// `U(0)`.
    pub u0: f64,
}

/// A potential `U` on `R^d` with an unbiased stochastic gradient `H(theta, X)`.
pub trait GradientModel: Sync {
    /// One draw of the data process.
    type Data: Clone + Send;

    fn dim(&self) -> usize;

    /// Fresh buffer for [`GradientModel::sample_data`].
    fn new_data(&self) -> Self::Data;

    fn sample_data<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Self::Data);

    fn stochastic_gradient(&self, theta: &[f64], x: &Self::Data, out: &mut [f64]);

    /// Writes `h(theta) = E H(theta, X)`; returns `false` when unavailable.
    fn full_gradient(&self, _theta: &[f64], _out: &mut [f64]) -> bool {
        false
    }

    /// `U(theta)` when known in closed form.
    fn potential(&self, _theta: &[f64]) -> Option<f64> {
        None
    }

    fn declared(&self) -> DeclaredConstants;

    /// Euclidean coordinates of a data draw.
    fn data_vector(&self, x: &Self::Data) -> Vec<f64>;

    /// Per-draw dissipativity witness `(a(x), b(x))` with
    /// `<H(t, x), t> >= a(x) |t|^2 - b(x)`.
    fn dissipativity_witness(&self, _x: &Self::Data) -> Option<(f64, f64)> {
        None
    }

    /// Every atom of a finite uniform data law.
    fn enumerate_data(&self, _with_replacement: bool) -> Option<Vec<Self::Data>> {
        None
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `ln cosh(x)` without overflow.
fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `U(theta) = kappa |theta|^2 / 2` with its exact gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub kappa: f64,
    pub dim: usize,
}

impl Quadratic {
    pub fn new(kappa: f64, dim: usize) -> Result<Self, ModelError> {
        if !(kappa > 0.0 && kappa.is_finite()) || dim == 0 {
            return Err(ModelError::Parameter(format!("kappa = {kappa}, dim = {dim}")));
        }
        Ok(Self { kappa, dim })
    }
}

impl GradientModel for Quadratic {
    type Data = ();

    fn dim(&self) -> usize {
        self.dim
    }

    fn new_data(&self) {}

    fn sample_data<R: Rng + ?Sized>(&self, _rng: &mut R, _out: &mut ()) {}

    #[inline]
    fn stochastic_gradient(&self, theta: &[f64], _x: &(), out: &mut [f64]) {
        for (o, t) in out.iter_mut().zip(theta) {
            *o = self.kappa * t;
        }
    }

    fn full_gradient(&self, theta: &[f64], out: &mut [f64]) -> bool {
        self.stochastic_gradient(theta, &(), out);
        true
    }

    fn potential(&self, theta: &[f64]) -> Option<f64> {
        Some(0.5 * self.kappa * dot(theta, theta))
    }

    fn declared(&self) -> DeclaredConstants {
        DeclaredConstants { l1: self.kappa, l2: 0.0, rho: 0.0, a: self.kappa, b: f64::MIN_POSITIVE, big_h0: 0.0, h0: 0.0, u0: 0.0 }
    }

    fn data_vector(&self, _x: &()) -> Vec<f64> {
        Vec::new()
    }

    fn dissipativity_witness(&self, _x: &()) -> Option<(f64, f64)> {
        Some((self.kappa, 0.0))
    }

    fn enumerate_data(&self, _with_replacement: bool) -> Option<Vec<()>> {
        Some(vec![()])
    }
}

/// `H(theta, x) = theta - x` with `X ~ N(mu, sd^2 I)`; `sd = 0` gives a point mass.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLocation {
    pub mu: Vec<f64>,
    pub sd: f64,
}

pub fn gaussian_location_model(mu: Vec<f64>, sd: f64) -> Result<GaussianLocation, ModelError> {
    if mu.is_empty() || mu.iter().any(|m| !m.is_finite()) || !(sd >= 0.0 && sd.is_finite()) {
        return Err(ModelError::Parameter(format!("mu = {mu:?}, sd = {sd}")));
    }
    Ok(GaussianLocation { mu, sd })
}

impl GradientModel for GaussianLocation {
    type Data = Vec<f64>;

    fn dim(&self) -> usize {
        self.mu.len()
    }

    fn new_data(&self) -> Vec<f64> {
        self.mu.clone()
    }

    fn sample_data<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        if self.sd == 0.0 {
            out.copy_from_slice(&self.mu);
            return;
        }
        for (o, m) in out.iter_mut().zip(&self.mu) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + self.sd * z;
        }
    }

    #[inline]
    fn stochastic_gradient(&self, theta: &[f64], x: &Vec<f64>, out: &mut [f64]) {
        for ((o, t), xi) in out.iter_mut().zip(theta).zip(x) {
            *o = t - xi;
        }
    }

    fn full_gradient(&self, theta: &[f64], out: &mut [f64]) -> bool {
        self.stochastic_gradient(theta, &self.mu, out);
        true
    }

    fn potential(&self, theta: &[f64]) -> Option<f64> {
        Some(0.5 * theta.iter().zip(&self.mu).map(|(t, m)| (t - m) * (t - m)).sum::<f64>())
    }

    fn declared(&self) -> DeclaredConstants {
        let mu2 = dot(&self.mu, &self.mu);
        let spread = mu2 + self.dim() as f64 * self.sd * self.sd;
        DeclaredConstants {
            l1: 1.0,
            l2: 1.0,
            rho: 0.0,
            a: 0.5,
            b: (0.5 * spread).max(f64::MIN_POSITIVE),
            big_h0: 0.0,
            h0: mu2.sqrt(),
            u0: 0.5 * mu2,
        }
    }

    fn data_vector(&self, x: &Vec<f64>) -> Vec<f64> {
        x.clone()
    }

    fn dissipativity_witness(&self, x: &Vec<f64>) -> Option<(f64, f64)> {
        Some((0.5, 0.5 * dot(x, x)))
    }

    fn enumerate_data(&self, _with_replacement: bool) -> Option<Vec<Vec<f64>>> {
        (self.sd == 0.0).then(|| vec![self.mu.clone()])
    }
}

/// Negative log of the two-mode prior `e^{-|t-m|^2/2} + e^{-|t+m|^2/2}`,
/// shifted so that it is nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct MixturePrior {
    pub m: Vec<f64>,
}

pub fn mixture_prior_model(m: Vec<f64>) -> Result<MixturePrior, ModelError> {
    if m.is_empty() || m.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::Parameter(format!("mode = {m:?}")));
    }
    Ok(MixturePrior { m })
}

impl MixturePrior {
    pub fn value(&self, theta: &[f64]) -> f64 {
        0.5 * dot(theta, theta) + 0.5 * dot(&self.m, &self.m) - ln_cosh(dot(&self.m, theta))
    }

    pub fn gradient(&self, theta: &[f64], out: &mut [f64]) {
        let t = dot(&self.m, theta).tanh();
        for ((o, th), m) in out.iter_mut().zip(theta).zip(&self.m) {
            *o = th - m * t;
        }
    }

    /// Minimum of the potential, located on the line spanned by the mode.
    ///
    /// Along `s m / |m|` the potential is `s^2/2 + |m|^2/2 - ln cosh(s |m|)`;
    /// its positive critical point solves `s = |m| tanh(s |m|)`, bracketed by
    /// `[0, |m|]` and found by bisection.
    pub fn minimum(&self) -> (Vec<f64>, f64) {
        let r = norm(&self.m);
        let phi = |s: f64| 0.5 * s * s + 0.5 * r * r - ln_cosh(s * r);
        let s_star = if r <= 1.0 {
            0.0
        } else {
            let g = |s: f64| s - r * (s * r).tanh();
            let (mut lo, mut hi) = (f64::EPSILON, r);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if g(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        let theta: Vec<f64> = if r == 0.0 { vec![0.0; self.m.len()] } else { self.m.iter().map(|m| m * s_star / r).collect() };
        (theta, phi(s_star))
    }
}

impl GradientModel for MixturePrior {
    type Data = ();

    fn dim(&self) -> usize {
        self.m.len()
    }

    fn new_data(&self) {}

    fn sample_data<R: Rng + ?Sized>(&self, _rng: &mut R, _out: &mut ()) {}

    fn stochastic_gradient(&self, theta: &[f64], _x: &(), out: &mut [f64]) {
        self.gradient(theta, out);
    }

    fn full_gradient(&self, theta: &[f64], out: &mut [f64]) -> bool {
        self.gradient(theta, out);
        true
    }

    fn potential(&self, theta: &[f64]) -> Option<f64> {
        Some(self.value(theta))
    }

    fn declared(&self) -> DeclaredConstants {
        let m2 = dot(&self.m, &self.m);
        DeclaredConstants {
            l1: 1.0 + m2,
            l2: 0.0,
            rho: 0.0,
            a: 0.5,
            b: (0.5 * m2).max(f64::MIN_POSITIVE),
            big_h0: 0.0,
            h0: 0.0,
            u0: 0.5 * m2,
        }
    }

    fn data_vector(&self, _x: &()) -> Vec<f64> {
        Vec::new()
    }

    fn dissipativity_witness(&self, _x: &()) -> Option<(f64, f64)> {
        Some((0.5, (0.5 * dot(&self.m, &self.m)).max(f64::MIN_POSITIVE)))
    }

    fn enumerate_data(&self, _with_replacement: bool) -> Option<Vec<()>> {
        Some(vec![()])
    }
}

/// Labelled records for logistic regression.
#[derive(Debug, Clone, PartialEq)]
pub struct BlrDataset {
    pub dim: usize,
    /// Row-major `len x dim` features.
    pub features: Vec<f64>,
    pub labels: Vec<u8>,
}

impl BlrDataset {
    pub fn new(dim: usize, features: Vec<f64>, labels: Vec<u8>) -> Result<Self, ModelError> {
        if dim == 0 || labels.is_empty() {
            return Err(ModelError::Dataset("empty dataset".into()));
        }
        if features.len() != dim * labels.len() {
            return Err(ModelError::Dataset(format!(
                "{} feature values for {} records of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(y) = labels.iter().find(|&&y| y > 1) {
            return Err(ModelError::Dataset(format!("label {y} is not 0 or 1")));
        }
        if features.iter().any(|z| !z.is_finite()) {
            return Err(ModelError::Dataset("non-finite feature".into()));
        }
        Ok(Self { dim, features, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    /// Fraction of records whose label matches `z . theta > 0`.
    pub fn accuracy(&self, theta: &[f64]) -> f64 {
        let hits = (0..self.len())
            .filter(|&i| (dot(self.feature(i), theta) > 0.0) == (self.labels[i] == 1))
            .count();
        hits as f64 / self.len() as f64
    }

    /// Reads CSV with a header, columns `z_1..z_d, y`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, ModelError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let dim = headers.len().checked_sub(1).filter(|&d| d > 0).ok_or_else(|| ModelError::Dataset("need at least one feature column and a label column".into()))?;
        if headers.get(dim) != Some("y") {
            return Err(ModelError::Dataset("last column must be named y".into()));
        }
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for j in 0..dim {
                let z = rec[j].trim().parse::<f64>().map_err(|e| ModelError::Dataset(format!("row {}: {e}", row + 1)))?;
                features.push(z);
            }
            let y = match rec[dim].trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(ModelError::Dataset(format!("row {}: label {other:?} is not 0 or 1", row + 1))),
            };
            labels.push(y);
        }
        Self::new(dim, features, labels)
    }

    pub fn read_csv_path(path: &Path) -> Result<Self, ModelError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ModelError> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.dim).map(|j| format!("z_{j}")).collect();
        header.push("y".into());
        wr.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.feature(i).iter().map(|z| z.to_string()).collect();
            row.push(self.labels[i].to_string());
            wr.write_record(&row)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Synthetic logistic data: `z ~ N(0, I)`, `y ~ Bernoulli(sigmoid(z . theta_true))`.
pub fn blr_synthetic_data(len: usize, theta_true: &[f64], seed: u64) -> Result<BlrDataset, ModelError> {
    let dim = theta_true.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(len * dim);
    let mut labels = Vec::with_capacity(len);
    for _ in 0..len {
        let start = features.len();
        for _ in 0..dim {
            features.push(rng.sample::<f64, _>(StandardNormal));
        }
        let p = sigmoid(dot(&features[start..], theta_true));
        labels.push(u8::from(rng.random::<f64>() < p));
    }
    BlrDataset::new(dim, features, labels)
}

/// Logistic regression posterior with the two-mode Gaussian mixture prior.
///
/// A data draw is a minibatch of `batch` indices sampled uniformly with
/// replacement (the whole dataset when `batch == len`); the likelihood part
/// of the gradient is rescaled by `len / batch`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlrModel {
    pub data: BlrDataset,
    pub prior: MixturePrior,
    pub batch: usize,
    max_feature_norm: f64,
}

pub fn blr_model(data: BlrDataset, m: Vec<f64>, batch: usize) -> Result<BlrModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::Dataset("empty dataset".into()));
    }
    if batch == 0 || batch > data.len() {
        return Err(ModelError::Parameter(format!("batch size {batch} outside 1..={}", data.len())));
    }
    if m.len() != data.dim {
        return Err(ModelError::Parameter(format!("prior mode has dimension {}, data {}", m.len(), data.dim)));
    }
    let prior = mixture_prior_model(m)?;
    let max_feature_norm = (0..data.len()).map(|i| norm(data.feature(i))).fold(0.0, f64::max);
    Ok(BlrModel { data, prior, batch, max_feature_norm })
}

impl BlrModel {
    fn add_likelihood(&self, theta: &[f64], i: usize, scale: f64, out: &mut [f64]) {
        let z = self.data.feature(i);
        let r = scale * (sigmoid(dot(z, theta)) - f64::from(self.data.labels[i]));
        for (o, zj) in out.iter_mut().zip(z) {
            *o += r * zj;
        }
    }
}

impl GradientModel for BlrModel {
    type Data = Vec<usize>;

    fn dim(&self) -> usize {
        self.data.dim
    }

    fn new_data(&self) -> Vec<usize> {
        vec![0; self.batch]
    }

    fn sample_data<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<usize>) {
        let n = self.data.len();
        if out.len() == n {
            // A full-size batch is the whole dataset, so H coincides with h.
            for (i, o) in out.iter_mut().enumerate() {
                *o = i;
            }
            return;
        }
        for o in out.iter_mut() {
            *o = rng.random_range(0..n);
        }
    }

    fn stochastic_gradient(&self, theta: &[f64], x: &Vec<usize>, out: &mut [f64]) {
        self.prior.gradient(theta, out);
        let scale = self.data.len() as f64 / x.len() as f64;
        for &i in x {
            self.add_likelihood(theta, i, scale, out);
        }
    }

    fn full_gradient(&self, theta: &[f64], out: &mut [f64]) -> bool {
        self.prior.gradient(theta, out);
        for i in 0..self.data.len() {
            self.add_likelihood(theta, i, 1.0, out);
        }
        true
    }

    fn potential(&self, theta: &[f64]) -> Option<f64> {
        let lik: f64 = (0..self.data.len())
            .map(|i| {
                let s = dot(self.data.feature(i), theta);
                softplus(s) - f64::from(self.data.labels[i]) * s
            })
            .sum();
        Some(self.prior.value(theta) + lik)
    }

    fn declared(&self) -> DeclaredConstants {
        let m2 = dot(&self.prior.m, &self.prior.m);
        let n = self.data.len() as f64;
        let zmax = self.max_feature_norm;
        let mut h = vec![0.0; self.dim()];
        self.full_gradient(&vec![0.0; self.dim()], &mut h);
        DeclaredConstants {
            l1: 1.0 + m2 + 0.25 * n * zmax * zmax,
            l2: n * (2.0 / self.batch as f64).sqrt(),
            rho: 1.0,
            a: 0.5,
            b: (0.5 * (m2.sqrt() + n * zmax).powi(2)).max(f64::MIN_POSITIVE),
            big_h0: 0.5 * n * zmax,
            h0: norm(&h),
            u0: 0.5 * m2 + n * std::f64::consts::LN_2,
        }
    }

    fn data_vector(&self, x: &Vec<usize>) -> Vec<f64> {
        let mut v = Vec::with_capacity(x.len() * (self.dim() + 1));
        for &i in x {
            v.extend_from_slice(self.data.feature(i));
            v.push(f64::from(self.data.labels[i]));
        }
        v
    }

    fn dissipativity_witness(&self, x: &Vec<usize>) -> Option<(f64, f64)> {
        let scale = self.data.len() as f64 / x.len() as f64;
        let pull = norm(&self.prior.m) + scale * x.iter().map(|&i| norm(self.data.feature(i))).sum::<f64>();
        Some((0.5, 0.5 * pull * pull))
    }

    fn enumerate_data(&self, with_replacement: bool) -> Option<Vec<Vec<usize>>> {
        let (n, k) = (self.data.len(), self.batch);
        let count = if with_replacement { (n as f64).powi(k as i32) } else { binomial(n, k) };
        if count > 5e6 {
            return None;
        }
        let mut out = Vec::new();
        let mut idx = vec![0usize; k];
        if with_replacement {
            loop {
                out.push(idx.clone());
                let mut j = k;
                loop {
                    if j == 0 {
                        return Some(out);
                    }
                    j -= 1;
                    idx[j] += 1;
                    if idx[j] < n {
                        break;
                    }
                    idx[j] = 0;
                }
            }
        } else {
            for (j, v) in idx.iter_mut().enumerate() {
                *v = j;
            }
            loop {
                out.push(idx.clone());
                let mut j = k;
                loop {
                    if j == 0 {
                        return Some(out);
                    }
                    j -= 1;
                    if idx[j] < n - k + j {
                        idx[j] += 1;
                        for l in j + 1..k {
                            idx[l] = idx[l - 1] + 1;
                        }
                        break;
                    }
                }
            }
        }
    }
}

/// Maximum-likelihood fit (no prior) by damped Newton iterations.
pub fn fit_logistic_mle(data: &BlrDataset, ridge: f64) -> Vec<f64> {
    let d = data.dim;
    let mut theta = vec![0.0; d];
    for _ in 0..100 {
        let mut grad = nalgebra::DVector::<f64>::zeros(d);
        let mut hess = nalgebra::DMatrix::<f64>::identity(d, d) * ridge;
        for j in 0..d {
            grad[j] = ridge * theta[j];
        }
        for i in 0..data.len() {
            let z = data.feature(i);
            let s = sigmoid(dot(z, &theta));
            let r = s - f64::from(data.labels[i]);
            let w = s * (1.0 - s);
            for a in 0..d {
                grad[a] += r * z[a];
                for b in 0..d {
                    hess[(a, b)] += w * z[a] * z[b];
                }
            }
        }
        let Some(step) = hess.cholesky().map(|c| c.solve(&grad)) else { break };
        for j in 0..d {
            theta[j] -= step[j];
        }
        if step.norm() < 1e-12 * (1.0 + norm(&theta)) {
            break;
        }
    }
    theta
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// How to average the stochastic gradient in [`check_unbiasedness`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnbiasednessMode {
    /// Average over every atom of a finite data law.
    Exhaustive { with_replacement: bool },
    /// Average over `draws` samples; tolerance is four standard errors per coordinate.
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnbiasednessReport {
    /// `max_j |mean H_j - h_j|`.
    pub max_deviation: f64,
    /// Per-coordinate tolerance used for the verdict.
    pub tolerance: Vec<f64>,
    pub pass: bool,
}

pub fn check_unbiasedness<M: GradientModel>(
    model: &M,
    theta: &[f64],
    mode: UnbiasednessMode,
) -> Result<UnbiasednessReport, ModelError> {
    let d = model.dim();
    let mut h = vec![0.0; d];
    if !model.full_gradient(theta, &mut h) {
        return Err(ModelError::NoFullGradient);
    }
    let mut g = vec![0.0; d];
    match mode {
        UnbiasednessMode::Exhaustive { with_replacement } => {
            let atoms = model.enumerate_data(with_replacement).ok_or(ModelError::NotEnumerable)?;
            let mut sum = vec![0.0; d];
            for x in &atoms {
                model.stochastic_gradient(theta, x, &mut g);
                for (s, v) in sum.iter_mut().zip(&g) {
                    *s += v;
                }
            }
            let n = atoms.len() as f64;
            let max_deviation = sum.iter().zip(&h).map(|(s, hj)| (s / n - hj).abs()).fold(0.0, f64::max);
            Ok(UnbiasednessReport { max_deviation, tolerance: vec![1e-10; d], pass: max_deviation < 1e-10 })
        }
        UnbiasednessMode::MonteCarlo { draws, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut x = model.new_data();
            let mut acc = vec![RunningStats::default(); d];
            for _ in 0..draws {
                model.sample_data(&mut rng, &mut x);
                model.stochastic_gradient(theta, &x, &mut g);
                for (a, v) in acc.iter_mut().zip(&g) {
                    a.push(*v);
                }
            }
            let dev: Vec<f64> = acc.iter().zip(&h).map(|(a, hj)| (a.mean - hj).abs()).collect();
            let tolerance: Vec<f64> = acc.iter().map(|a| 4.0 * a.se()).collect();
            let pass = dev.iter().zip(&tolerance).all(|(dv, t)| dv <= t);
            Ok(UnbiasednessReport { max_deviation: dev.iter().copied().fold(0.0, f64::max), tolerance, pass })
        }
    }
}

/// Worst margins of the dissipativity inequalities over a radius-direction grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    /// `min <H(t, x), t> - (a |t|^2 - b)` with the supplied `(a, b)`.
    pub stochastic_margin: f64,
    /// `min <H(t, x), t> - (a(x) |t|^2 - b(x))` with the model's witness.
    pub witness_margin: Option<f64>,
    /// `min <h(t), t> - (a |t|^2 - b)`.
    pub full_margin: Option<f64>,
    pub pass: bool,
}

/// Radii log-spaced over `[1e-3, 1e2]`.
pub fn default_radii(count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| 10f64.powf(-3.0 + 5.0 * i as f64 / (count.max(2) - 1) as f64))
        .collect()
}

fn random_direction<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let r = norm(&u);
        if r > 1e-12 {
            return u.into_iter().map(|x| x / r).collect();
        }
    }
}

/// Probes `<H(t, x), t> >= a |t|^2 - b` on `radii x directions x data draws`.
///
/// Passing requires the full-gradient inequality (or, without `h`, the per-draw
/// witness) to hold everywhere up to rounding.
pub fn probe_dissipativity<M: GradientModel>(
    model: &M,
    a: f64,
    b: f64,
    radii: &[f64],
    directions: usize,
    data_draws: usize,
    seed: u64,
) -> DissipativityReport {
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = model.new_data();
    let mut g = vec![0.0; d];
    let mut stochastic = f64::INFINITY;
    let mut witness: Option<f64> = None;
    let mut full: Option<f64> = None;
    let mut slack = 0.0_f64;
    for _ in 0..directions {
        let u = random_direction(&mut rng, d);
        for &r in radii {
            let theta: Vec<f64> = u.iter().map(|v| v * r).collect();
            let r2 = r * r;
            if model.full_gradient(&theta, &mut g) {
                let m = dot(&g, &theta) - (a * r2 - b);
                full = Some(full.map_or(m, |f: f64| f.min(m)));
            }
            for _ in 0..data_draws {
                model.sample_data(&mut rng, &mut x);
                model.stochastic_gradient(&theta, &x, &mut g);
                let inner = dot(&g, &theta);
                slack = slack.max(1e-12 * (inner.abs() + a * r2 + b));
                stochastic = stochastic.min(inner - (a * r2 - b));
                if let Some((ax, bx)) = model.dissipativity_witness(&x) {
                    let m = inner - (ax * r2 - bx);
                    witness = Some(witness.map_or(m, |w: f64| w.min(m)));
                }
            }
        }
    }
    let tol = -slack.max(1e-12);
    let pass = match (full, witness) {
        (Some(f), Some(w)) => f >= tol && w >= tol,
        (Some(f), None) => f >= tol,
        (None, Some(w)) => w >= tol,
        (None, None) => stochastic >= tol,
    };
    DissipativityReport { stochastic_margin: stochastic, witness_margin: witness, full_margin: full, pass }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    /// `max |H(t,x) - H(t',x)| / ((1+|x|)^rho |t - t'|)`.
    pub theta_ratio: f64,
    /// `max |H(t,x) - H(t,x')| / ((1+|x|+|x'|)^rho (1+|t|) |x - x'|)`; zero for data-free models.
    pub data_ratio: f64,
    pub declared_l1: f64,
    pub declared_l2: f64,
    /// Pairs skipped because the points coincided.
    pub excluded: usize,
    pub pass: bool,
}

/// `|H(t1,x) - H(t2,x)| / ((1+|x|)^rho |t1 - t2|)`; `None` when `|t1 - t2| < 1e-12`.
pub fn theta_lipschitz_ratio<M: GradientModel>(model: &M, t1: &[f64], t2: &[f64], x: &M::Data) -> Option<f64> {
    let dt = norm(&t1.iter().zip(t2).map(|(a, b)| a - b).collect::<Vec<_>>());
    if dt < 1e-12 {
        return None;
    }
    let d = model.dim();
    let (mut g1, mut g2) = (vec![0.0; d], vec![0.0; d]);
    model.stochastic_gradient(t1, x, &mut g1);
    model.stochastic_gradient(t2, x, &mut g2);
    let xn = norm(&model.data_vector(x));
    let num = norm(&g1.iter().zip(&g2).map(|(a, b)| a - b).collect::<Vec<_>>());
    Some(num / ((1.0 + xn).powf(model.declared().rho) * dt))
}

/// Samples parameter pairs at mixed scales and data pairs from the data law.
pub fn probe_lipschitz<M: GradientModel>(model: &M, pairs: usize, data_draws: usize, seed: u64) -> LipschitzReport {
    let decl = model.declared();
    let d = model.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (model.new_data(), model.new_data());
    let (mut g1, mut g2) = (vec![0.0; d], vec![0.0; d]);
    let (mut theta_ratio, mut data_ratio) = (0.0_f64, 0.0_f64);
    let mut excluded = 0;
    for _ in 0..pairs {
        let scale = 10f64.powf(rng.random_range(-2.0..2.0));
        let gap = 10f64.powf(rng.random_range(-4.0..1.0));
        let t1: Vec<f64> = (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
        let t2: Vec<f64> = t1.iter().map(|t| t + gap * rng.sample::<f64, _>(StandardNormal)).collect();
        for _ in 0..data_draws.max(1) {
            model.sample_data(&mut rng, &mut x);
            model.sample_data(&mut rng, &mut y);
            match theta_lipschitz_ratio(model, &t1, &t2, &x) {
                Some(r) => theta_ratio = theta_ratio.max(r),
                None => excluded += 1,
            }
            let (xv, yv) = (model.data_vector(&x), model.data_vector(&y));
            let dx = norm(&xv.iter().zip(&yv).map(|(a, b)| a - b).collect::<Vec<_>>());
            if dx >= 1e-12 {
                model.stochastic_gradient(&t1, &x, &mut g1);
                model.stochastic_gradient(&t1, &y, &mut g2);
                let num = norm(&g1.iter().zip(&g2).map(|(a, b)| a - b).collect::<Vec<_>>());
                let den = (1.0 + norm(&xv) + norm(&yv)).powf(decl.rho) * (1.0 + norm(&t1)) * dx;
                data_ratio = data_ratio.max(num / den);
            }
        }
    }
    let pass = theta_ratio <= decl.l1 * (1.0 + 1e-9) && data_ratio <= decl.l2 * (1.0 + 1e-9);
    LipschitzReport { theta_ratio, data_ratio, declared_l1: decl.l1, declared_l2: decl.l2, excluded, pass }
}

/// Assembles the constant table for `model`, estimating the data moments
/// `C_rho`, `L1_bar` and `sigma_Z` from `draws` samples.
pub fn problem_params<M: GradientModel>(model: &M, gamma: f64, beta: f64, m0: f64, alpha: f64, draws: usize, seed: u64) -> ProblemParams {
    let decl = model.declared();
    let rho = decl.rho;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = model.new_data();
    let mut samples = Vec::with_capacity(draws.max(1));
    for _ in 0..draws.max(1) {
        model.sample_data(&mut rng, &mut x);
        samples.push(model.data_vector(&x));
    }
    let n = samples.len() as f64;
    let k = samples[0].len();
    let mean: Vec<f64> = (0..k).map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n).collect();
    let mean_norm = norm(&mean);
    let avg = |f: &dyn Fn(&[f64]) -> f64| samples.iter().map(|s| f(s)).sum::<f64>() / n;
    let c_rho = avg(&|s| (1.0 + norm(s)).powf(4.0 * (rho + 1.0))).max(1.0);
    let l1_bar = decl.l1 * avg(&|s| (1.0 + norm(s)).powf(rho));
    let sigma_z = avg(&|s| {
        let dev2: f64 = s.iter().zip(&mean).map(|(a, b)| (a - b) * (a - b)).sum();
        (1.0 + norm(s) + mean_norm).powf(2.0 * rho) * dev2
    });
    ProblemParams {
        l1: decl.l1,
        l2: decl.l2,
        rho,
        c_rho,
        big_h0: decl.big_h0,
        h0: decl.h0,
        u0: decl.u0,
        l1_bar,
        a: decl.a,
        b: decl.b,
        gamma,
        beta,
        dim: model.dim(),
        sigma_z,
        m0,
        alpha,
        w_rho0: None,
        c2_star: None,
        generalization: None,
    }
}
