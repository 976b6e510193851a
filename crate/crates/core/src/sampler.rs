//! The SGHMC recursion, single-chain and ensemble runners, and exact
//! references for quadratic potentials.
//!
//! # Seeding
//!
//! Every chain owns independent ChaCha8 streams derived from
//! `(master_seed, chain_id)`: the generator is seeded with `master_seed` and
//! switched to stream `4 * chain_id + purpose`, where `purpose` is 0 for the
//! injected Gaussian noise, 1 for data draws and 2 for the initial state.
//! Results therefore do not depend on thread count or scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

use crate::models::GradientModel;
use crate::stats::{MomentAccumulator, RunningStats};
use crate::wasserstein::{EmpiricalCloud, GaussianMomentsPair, W2Error};

/// States with `|theta|` or `|v|` above this are treated as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

const BATCH: usize = 64;
const WAVE: usize = 16;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("invalid sampler configuration: {0}")]
    Config(String),
    #[error("dimension mismatch: model has {model}, state has {state}")]
    Dimension { model: usize, state: usize },
    #[error("chain {chain_id} diverged at iteration {iteration}")]
    Divergence { chain_id: u64, iteration: u64 },
    #[error("{} of the chains diverged (first: chain {} at iteration {})", failed.len(), failed[0].0, failed[0].1)]
    EnsembleDivergence {
        /// `(chain_id, iteration)` of each failed chain.
        failed: Vec<(u64, u64)>,
        /// Aggregates over the chains that finished.
        partial: Box<EnsembleRun>,
    },
    #[error(transparent)]
    Moments(#[from] W2Error),
}

/// Position and momentum of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
}

impl ChainState {
    pub fn new(theta: Vec<f64>, v: Vec<f64>) -> Result<Self, SamplerError> {
        if theta.is_empty() || theta.len() != v.len() {
            return Err(SamplerError::Config(format!("theta has length {}, v has {}", theta.len(), v.len())));
        }
        if theta.iter().chain(&v).any(|x| !x.is_finite()) {
            return Err(SamplerError::Config("non-finite initial state".into()));
        }
        Ok(Self { theta, v })
    }

    pub fn zeros(d: usize) -> Self {
        Self { theta: vec![0.0; d], v: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta_sq(&self) -> f64 {
        self.theta.iter().map(|x| x * x).sum()
    }

    pub fn v_sq(&self) -> f64 {
        self.v.iter().map(|x| x * x).sum()
    }

    /// `(theta, v)` concatenated.
    pub fn joint(&self) -> Vec<f64> {
        [self.theta.as_slice(), self.v.as_slice()].concat()
    }

    fn diverged(&self) -> bool {
        let limit = DIVERGENCE_THRESHOLD * DIVERGENCE_THRESHOLD;
        let (t, v) = (self.theta_sq(), self.v_sq());
        !(t <= limit && v <= limit)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub eta: f64,
    pub gamma: f64,
    pub beta: f64,
    pub steps: u64,
    pub master_seed: u64,
    pub chain_id: u64,
    pub burn_in: u64,
    pub thin: u64,
    pub noise_enabled: bool,
    /// Certified step-size limit; exceeding it only produces a warning.
    pub eta_max: Option<f64>,
}

impl SamplerConfig {
    /// Defaults: `burn_in = steps / 10`, `thin = max(1, steps / 10^4)`, noise on.
    pub fn new(eta: f64, gamma: f64, beta: f64, steps: u64, master_seed: u64) -> Self {
        Self {
            eta,
            gamma,
            beta,
            steps,
            master_seed,
            chain_id: 0,
            burn_in: steps / 10,
            thin: (steps / 10_000).max(1),
            noise_enabled: true,
            eta_max: None,
        }
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let bad = |m: String| Err(SamplerError::Config(m));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return bad(format!("eta = {} must be positive", self.eta));
        }
        // Zero friction is only meaningful for the deterministic flow.
        let gamma_ok = self.gamma > 0.0 || (self.gamma == 0.0 && !self.noise_enabled);
        if !(gamma_ok && self.gamma.is_finite()) {
            return bad(format!("gamma = {} must be positive (zero allowed only with noise off)", self.gamma));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {} must be positive", self.beta));
        }
        if self.thin == 0 {
            return bad("thin must be at least 1".into());
        }
        if self.burn_in > self.steps {
            return bad(format!("burn_in = {} exceeds steps = {}", self.burn_in, self.steps));
        }
        Ok(())
    }

    fn is_recorded(&self, n: u64) -> bool {
        n >= self.burn_in && (n - self.burn_in).is_multiple_of(self.thin)
    }

    /// Iteration indices kept by the thinning rule.
    pub fn recorded_iterations(&self) -> Vec<u64> {
        (self.burn_in..=self.steps).step_by(self.thin as usize).collect()
    }

    fn step_warnings(&self) -> Vec<String> {
        match self.eta_max {
            Some(m) if self.eta > m => {
                let msg = format!("eta = {} exceeds the certified maximum {m:e}", self.eta);
                log::warn!("{msg}");
                vec![msg]
            }
            _ => Vec::new(),
        }
    }
}

/// Independent generator for `(master_seed, chain_id, purpose)`.
pub fn chain_rng(master_seed: u64, chain_id: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(chain_id.wrapping_mul(4).wrapping_add(purpose));
    rng
}

pub const NOISE_STREAM: u64 = 0;
pub const DATA_STREAM: u64 = 1;
pub const INIT_STREAM: u64 = 2;

/// In-place update; the position moves with the old momentum.
#[inline]
fn step_in_place(theta: &mut [f64], v: &mut [f64], grad: &[f64], noise: &[f64], eta: f64, gamma: f64, scale: f64) {
    for i in 0..theta.len() {
        let v_old = v[i];
        v[i] = v_old - eta * (gamma * v_old + grad[i]) + scale * noise[i];
        theta[i] += eta * v_old;
    }
}

/// One SGHMC step given an evaluated stochastic gradient and a noise vector.
pub fn sghmc_step(state: &ChainState, grad_sample: &[f64], noise: &[f64], cfg: &SamplerConfig) -> Result<ChainState, SamplerError> {
    let d = state.dim();
    if grad_sample.len() != d || noise.len() != d {
        return Err(SamplerError::Dimension { model: grad_sample.len(), state: d });
    }
    let mut next = state.clone();
    let scale = if cfg.noise_enabled { (2.0 * cfg.gamma * cfg.eta / cfg.beta).sqrt() } else { 0.0 };
    step_in_place(&mut next.theta, &mut next.v, grad_sample, noise, cfg.eta, cfg.gamma, scale);
    if next.diverged() {
        return Err(SamplerError::Divergence { chain_id: cfg.chain_id, iteration: 1 });
    }
    Ok(next)
}

/// Runs `cfg.steps` iterations from `state`, calling `record(n, state)` at
/// every retained iteration `n` (including `n = 0` when retained).
fn simulate<M: GradientModel>(
    model: &M,
    cfg: &SamplerConfig,
    chain_id: u64,
    state: &mut ChainState,
    mut record: impl FnMut(u64, &ChainState),
) -> Result<(), SamplerError> {
    let d = model.dim();
    let mut noise_rng = chain_rng(cfg.master_seed, chain_id, NOISE_STREAM);
    let mut data_rng = chain_rng(cfg.master_seed, chain_id, DATA_STREAM);
    let mut x = model.new_data();
    let mut grad = vec![0.0; d];
    let mut noise = vec![0.0; d];
    let scale = if cfg.noise_enabled { (2.0 * cfg.gamma * cfg.eta / cfg.beta).sqrt() } else { 0.0 };
    if cfg.is_recorded(0) {
        record(0, state);
    }
    for n in 1..=cfg.steps {
        model.sample_data(&mut data_rng, &mut x);
        model.stochastic_gradient(&state.theta, &x, &mut grad);
        if cfg.noise_enabled {
            for z in noise.iter_mut() {
                *z = noise_rng.sample(StandardNormal);
            }
        }
        step_in_place(&mut state.theta, &mut state.v, &grad, &noise, cfg.eta, cfg.gamma, scale);
        if state.diverged() {
            return Err(SamplerError::Divergence { chain_id, iteration: n });
        }
        if cfg.is_recorded(n) {
            record(n, state);
        }
    }
    Ok(())
}

/// Output of [`run_chain`].
#[derive(Debug, Clone, PartialEq)]
pub struct ChainRun {
    pub record_iters: Vec<u64>,
    pub trajectory: Vec<ChainState>,
    /// Mean of `|theta|^2` over the recorded states.
    pub theta_sq_mean: f64,
    /// Mean of `|v|^2` over the recorded states.
    pub v_sq_mean: f64,
    pub final_state: ChainState,
    pub warnings: Vec<String>,
}

pub fn run_chain<M: GradientModel>(model: &M, cfg: &SamplerConfig, initial: &ChainState) -> Result<ChainRun, SamplerError> {
    cfg.validate()?;
    if initial.dim() != model.dim() {
        return Err(SamplerError::Dimension { model: model.dim(), state: initial.dim() });
    }
    let warnings = cfg.step_warnings();
    let mut state = initial.clone();
    let mut record_iters = Vec::new();
    let mut trajectory = Vec::new();
    let (mut th, mut vv) = (RunningStats::default(), RunningStats::default());
    simulate(model, cfg, cfg.chain_id, &mut state, |n, s| {
        record_iters.push(n);
        trajectory.push(s.clone());
        th.push(s.theta_sq());
        vv.push(s.v_sq());
    })?;
    Ok(ChainRun { record_iters, trajectory, theta_sq_mean: th.mean, v_sq_mean: vv.mean, final_state: state, warnings })
}

/// Law of the initial state of each ensemble chain.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialDistribution {
    PointMass(ChainState),
    /// Independent coordinates around `mean` with the given standard deviations.
    Gaussian { mean: ChainState, sd_theta: f64, sd_v: f64 },
}

impl InitialDistribution {
    pub fn dim(&self) -> usize {
        match self {
            Self::PointMass(s) => s.dim(),
            Self::Gaussian { mean, .. } => mean.dim(),
        }
    }

    /// Draws the initial state of chain `chain_id` from its dedicated stream.
    pub fn draw(&self, master_seed: u64, chain_id: u64) -> ChainState {
        match self {
            Self::PointMass(s) => s.clone(),
            Self::Gaussian { mean, sd_theta, sd_v } => {
                let mut rng = chain_rng(master_seed, chain_id, INIT_STREAM);
                let mut s = mean.clone();
                for t in s.theta.iter_mut() {
                    *t += sd_theta * rng.sample::<f64, _>(StandardNormal);
                }
                for v in s.v.iter_mut() {
                    *v += sd_v * rng.sample::<f64, _>(StandardNormal);
                }
                s
            }
        }
    }

    /// Joint `(theta, v)` moments of the law.
    pub fn moments(&self) -> GaussianMomentsPair {
        let (mean, var_t, var_v) = match self {
            Self::PointMass(s) => (s, 0.0, 0.0),
            Self::Gaussian { mean, sd_theta, sd_v } => (mean, sd_theta * sd_theta, sd_v * sd_v),
        };
        let d = mean.dim();
        let diag: Vec<f64> = (0..2 * d).map(|i| if i < d { var_t } else { var_v }).collect();
        GaussianMomentsPair {
            mean: DVector::from_vec(mean.joint()),
            cov: DMatrix::from_diagonal(&DVector::from_vec(diag)),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnsembleOptions {
    /// Keep every recorded state of every chain (needed for Lyapunov tracking).
    pub keep_snapshots: bool,
}

/// Recorded states of all surviving chains, chain-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshots {
    pub dim: usize,
    pub n_records: usize,
    pub chain_ids: Vec<u64>,
    data: Vec<f64>,
}

impl Snapshots {
    pub fn n_chains(&self) -> usize {
        self.chain_ids.len()
    }

    /// `(theta, v)` of chain slot `c` at record `r`.
    pub fn state(&self, c: usize, r: usize) -> (&[f64], &[f64]) {
        let w = 2 * self.dim;
        let off = (c * self.n_records + r) * w;
        (&self.data[off..off + self.dim], &self.data[off + self.dim..off + w])
    }
}

/// Cross-chain statistics of per-chain averages over the four quarters of the
/// recorded window.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuarterStats {
    pub theta_sq: [RunningStats; 4],
    pub v_sq: [RunningStats; 4],
    /// Per-chain `(fourth quarter) - (second quarter)` of `|theta|^2`.
    pub theta_sq_growth: RunningStats,
    pub v_sq_growth: RunningStats,
}

impl QuarterStats {
    fn merge(&mut self, o: &Self) {
        for q in 0..4 {
            self.theta_sq[q].merge(&o.theta_sq[q]);
            self.v_sq[q].merge(&o.v_sq[q]);
        }
        self.theta_sq_growth.merge(&o.theta_sq_growth);
        self.v_sq_growth.merge(&o.v_sq_growth);
    }
}

/// Output of [`run_ensemble`].
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleRun {
    /// Chains that finished.
    pub n_chains: usize,
    pub record_iters: Vec<u64>,
    /// Cross-chain statistics of `|theta_k|^2` at each recorded iteration.
    pub theta_sq: Vec<RunningStats>,
    pub v_sq: Vec<RunningStats>,
    /// Joint `(theta, v)` moments pooled over all recorded states of all chains.
    pub pooled: MomentAccumulator,
    pub quarters: QuarterStats,
    /// Final states, ordered by chain id.
    pub terminal: Vec<ChainState>,
    pub snapshots: Option<Snapshots>,
    pub warnings: Vec<String>,
}

impl EnsembleRun {
    /// Terminal `(theta, v)` cloud.
    pub fn terminal_cloud(&self) -> Result<EmpiricalCloud, W2Error> {
        let k = self.terminal.first().map_or(0, |s| 2 * s.dim());
        EmpiricalCloud::new(k, self.terminal.iter().flat_map(ChainState::joint).collect())
    }
}

struct BatchOut {
    theta_sq: Vec<RunningStats>,
    v_sq: Vec<RunningStats>,
    pooled: MomentAccumulator,
    quarters: QuarterStats,
    terminal: Vec<ChainState>,
    ids: Vec<u64>,
    snapshots: Vec<f64>,
    failed: Vec<(u64, u64)>,
}

fn run_batch<M: GradientModel>(
    model: &M,
    cfg: &SamplerConfig,
    init: &InitialDistribution,
    chains: std::ops::Range<u64>,
    n_records: usize,
    opts: EnsembleOptions,
) -> BatchOut {
    let d = model.dim();
    let mut out = BatchOut {
        theta_sq: vec![RunningStats::default(); n_records],
        v_sq: vec![RunningStats::default(); n_records],
        pooled: MomentAccumulator::new(2 * d),
        quarters: QuarterStats::default(),
        terminal: Vec::new(),
        ids: Vec::new(),
        snapshots: Vec::new(),
        failed: Vec::new(),
    };
    let mut th = vec![0.0; n_records];
    let mut vv = vec![0.0; n_records];
    let mut joint = vec![0.0; 2 * d];
    let mut snap = Vec::new();
    for chain in chains {
        let chain_id = cfg.chain_id + chain;
        let mut state = init.draw(cfg.master_seed, chain_id);
        let mut pooled = MomentAccumulator::new(2 * d);
        snap.clear();
        let mut r = 0;
        let res = simulate(model, cfg, chain_id, &mut state, |_, s| {
            th[r] = s.theta_sq();
            vv[r] = s.v_sq();
            joint[..d].copy_from_slice(&s.theta);
            joint[d..].copy_from_slice(&s.v);
            pooled.push(&joint);
            if opts.keep_snapshots {
                snap.extend_from_slice(&joint);
            }
            r += 1;
        });
        match res {
            Err(SamplerError::Divergence { iteration, .. }) => out.failed.push((chain_id, iteration)),
            Err(_) => unreachable!("simulate only reports divergence"),
            Ok(()) => {
                let mut qt = [RunningStats::default(); 4];
                let mut qv = [RunningStats::default(); 4];
                for i in 0..n_records {
                    out.theta_sq[i].push(th[i]);
                    out.v_sq[i].push(vv[i]);
                    let q = i * 4 / n_records;
                    qt[q].push(th[i]);
                    qv[q].push(vv[i]);
                }
                for q in 0..4 {
                    if qt[q].n > 0 {
                        out.quarters.theta_sq[q].push(qt[q].mean);
                        out.quarters.v_sq[q].push(qv[q].mean);
                    }
                }
                if qt[1].n > 0 && qt[3].n > 0 {
                    out.quarters.theta_sq_growth.push(qt[3].mean - qt[1].mean);
                    out.quarters.v_sq_growth.push(qv[3].mean - qv[1].mean);
                }
                out.pooled.merge(&pooled);
                out.terminal.push(state);
                out.ids.push(chain_id);
                out.snapshots.extend_from_slice(&snap);
            }
        }
    }
    out
}

/// Runs `n_chains` independent chains; chain `k` uses id `cfg.chain_id + k`.
///
/// Chains are grouped into fixed batches whose statistics are merged in batch
/// order, so the output is bitwise reproducible under any thread count.
pub fn run_ensemble<M: GradientModel>(
    model: &M,
    cfg: &SamplerConfig,
    n_chains: usize,
    init: &InitialDistribution,
    opts: EnsembleOptions,
) -> Result<EnsembleRun, SamplerError> {
    cfg.validate()?;
    if n_chains == 0 {
        return Err(SamplerError::Config("n_chains must be at least 1".into()));
    }
    if init.dim() != model.dim() {
        return Err(SamplerError::Dimension { model: model.dim(), state: init.dim() });
    }
    let d = model.dim();
    let record_iters = cfg.recorded_iterations();
    let n_records = record_iters.len();
    let mut run = EnsembleRun {
        n_chains: 0,
        record_iters,
        theta_sq: vec![RunningStats::default(); n_records],
        v_sq: vec![RunningStats::default(); n_records],
        pooled: MomentAccumulator::new(2 * d),
        quarters: QuarterStats::default(),
        terminal: Vec::with_capacity(n_chains),
        snapshots: None,
        warnings: cfg.step_warnings(),
    };
    let mut snap_ids = Vec::new();
    let mut snap_data = Vec::new();
    let mut failed = Vec::new();
    let n_batches = n_chains.div_ceil(BATCH);
    for wave in (0..n_batches).collect::<Vec<_>>().chunks(WAVE) {
        let outs: Vec<BatchOut> = wave
            .par_iter()
            .map(|&b| {
                let lo = (b * BATCH) as u64;
                let hi = ((b + 1) * BATCH).min(n_chains) as u64;
                run_batch(model, cfg, init, lo..hi, n_records, opts)
            })
            .collect();
        for o in outs {
            for i in 0..n_records {
                run.theta_sq[i].merge(&o.theta_sq[i]);
                run.v_sq[i].merge(&o.v_sq[i]);
            }
            run.pooled.merge(&o.pooled);
            run.quarters.merge(&o.quarters);
            run.n_chains += o.terminal.len();
            run.terminal.extend(o.terminal);
            snap_ids.extend(o.ids);
            snap_data.extend(o.snapshots);
            failed.extend(o.failed);
        }
    }
    if opts.keep_snapshots {
        run.snapshots = Some(Snapshots { dim: d, n_records, chain_ids: snap_ids, data: snap_data });
    }
    if failed.is_empty() {
        Ok(run)
    } else {
        Err(SamplerError::EnsembleDivergence { failed, partial: Box::new(run) })
    }
}

/// `exp(A t)` for `A = [[0, 1], [-kappa, -gamma]]`, row-major.
pub fn ou_propagator(kappa: f64, gamma: f64, t: f64) -> [[f64; 2]; 2] {
    // exp(At) = e^{st} (C I + S (A - s I)), s = -gamma/2, q^2 = gamma^2/4 - kappa,
    // C = cosh(qt), S = sinh(qt)/q, continued analytically through q^2 = 0.
    let s = -0.5 * gamma;
    let q2 = 0.25 * gamma * gamma - kappa;
    let x = q2 * t * t;
    let (c, sq) = if x.abs() < 1e-3 {
        let c = 1.0 + x / 2.0 + x * x / 24.0 + x * x * x / 720.0 + x.powi(4) / 40320.0;
        let sq = t * (1.0 + x / 6.0 + x * x / 120.0 + x * x * x / 5040.0 + x.powi(4) / 362880.0);
        (c, sq)
    } else if q2 > 0.0 {
        let q = q2.sqrt();
        ((q * t).cosh(), (q * t).sinh() / q)
    } else {
        let w = (-q2).sqrt();
        ((w * t).cos(), (w * t).sin() / w)
    };
    let e = (s * t).exp();
    [
        [e * (c - s * sq), e * sq],
        [-e * kappa * sq, e * (c + (-gamma - s) * sq)],
    ]
}

/// Exact Gaussian moments at time `t` of `d theta = v dt`,
/// `dv = -(gamma v + kappa theta) dt + sqrt(2 gamma / beta) dB`.
///
/// The mean is propagated by `exp(A t)`. The covariance uses the stationary
/// identity `Sigma(t) = Sigma_inf + P (Sigma_0 - Sigma_inf) P^T`, with
/// `P = exp(A t)` acting blockwise and `Sigma_inf = diag(1/(beta kappa), 1/beta)`.
pub fn exact_ou_moments(
    kappa: f64,
    gamma: f64,
    beta: f64,
    t: f64,
    initial: &GaussianMomentsPair,
) -> Result<GaussianMomentsPair, SamplerError> {
    if !(kappa > 0.0 && gamma > 0.0 && beta > 0.0 && t >= 0.0 && t.is_finite()) {
        return Err(SamplerError::Config(format!("kappa = {kappa}, gamma = {gamma}, beta = {beta}, t = {t}")));
    }
    let k = initial.dim();
    if k == 0 || !k.is_multiple_of(2) {
        return Err(SamplerError::Config(format!("joint dimension {k} is not even")));
    }
    let d = k / 2;
    let phi = ou_propagator(kappa, gamma, t);
    let mut p = DMatrix::zeros(k, k);
    for i in 0..d {
        p[(i, i)] = phi[0][0];
        p[(i, d + i)] = phi[0][1];
        p[(d + i, i)] = phi[1][0];
        p[(d + i, d + i)] = phi[1][1];
    }
    let stat = DMatrix::from_diagonal(&DVector::from_fn(k, |i, _| if i < d { 1.0 / (beta * kappa) } else { 1.0 / beta }));
    let mean = &p * &initial.mean;
    let cov = &stat + &p * (&initial.cov - &stat) * p.transpose();
    let cov = (&cov + cov.transpose()) * 0.5;
    Ok(GaussianMomentsPair { mean, cov })
}

/// `n` independent draws from the extended target of `U = kappa |theta|^2 / 2`:
/// `theta ~ N(0, I/(beta kappa))`, `v ~ N(0, I/beta)`.
pub fn sample_extended_quadratic(kappa: f64, beta: f64, dim: usize, n: usize, seed: u64) -> Result<EmpiricalCloud, SamplerError> {
    if !(kappa > 0.0 && beta > 0.0) || n == 0 || dim == 0 {
        return Err(SamplerError::Config(format!("kappa = {kappa}, beta = {beta}, dim = {dim}, n = {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (st, sv) = ((beta * kappa).recip().sqrt(), beta.recip().sqrt());
    let mut data = Vec::with_capacity(n * 2 * dim);
    for _ in 0..n {
        for _ in 0..dim {
            data.push(st * rng.sample::<f64, _>(StandardNormal));
        }
        for _ in 0..dim {
            data.push(sv * rng.sample::<f64, _>(StandardNormal));
        }
    }
    Ok(EmpiricalCloud::new(2 * dim, data)?)
}
