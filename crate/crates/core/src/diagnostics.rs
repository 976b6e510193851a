//! Lyapunov function and statistical checks of the drift and moment
//! inequalities on ensemble output.
//!
//! Expectations are only observable through cross-chain averages, so every
//! inequality is tested against its Monte Carlo standard error at a z
//! threshold, and a series passes when the number of exceedances stays within
//! the binomial false-positive budget of that threshold.

use std::io::Write;
use thiserror::Error;

use crate::models::GradientModel;
use crate::sampler::EnsembleRun;
use crate::stats::{false_positive_budget, RunningStats};

#[derive(Debug, Error)]
pub enum DiagError {
    #[error("ensemble was run without snapshots")]
    NoSnapshots,
    #[error("model has no closed-form potential")]
    NoPotential,
    #[error("series too short: {0} points")]
    TooShort(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// `beta U + (beta/4) gamma^2 (|theta + v/gamma|^2 + |v/gamma|^2 - lambda |theta|^2)`.
pub fn lyapunov_value(theta: &[f64], v: &[f64], beta: f64, gamma: f64, lambda: f64, u: f64) -> f64 {
    let mut quad = 0.0;
    for (t, vi) in theta.iter().zip(v) {
        let w = vi / gamma;
        quad += (t + w) * (t + w) + w * w - lambda * t * t;
    }
    beta * u + 0.25 * beta * gamma * gamma * quad
}

/// Cross-chain moment estimates at each recorded iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub iters: Vec<u64>,
    pub n_chains: usize,
    /// Mean Lyapunov value divided by `beta`.
    pub m2: Vec<f64>,
    pub m2_se: Vec<f64>,
    pub th2: Vec<f64>,
    pub th2_se: Vec<f64>,
    pub v2: Vec<f64>,
    pub v2_se: Vec<f64>,
    /// Mean squared Lyapunov value.
    pub vsq: Vec<f64>,
    pub vsq_se: Vec<f64>,
    /// Covariance of the estimates of `m2` at consecutive records.
    pub m2_lag_cov: Vec<f64>,
}

impl MomentSeries {
    /// A noiseless series carrying only `m2`.
    pub fn exact(iters: Vec<u64>, m2: Vec<f64>) -> Self {
        let n = m2.len();
        Self {
            iters,
            n_chains: 1,
            m2,
            m2_se: vec![0.0; n],
            th2: vec![0.0; n],
            th2_se: vec![0.0; n],
            v2: vec![0.0; n],
            v2_se: vec![0.0; n],
            vsq: vec![0.0; n],
            vsq_se: vec![0.0; n],
            m2_lag_cov: vec![0.0; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.m2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m2.is_empty()
    }

    /// Columns `k, m2, m2_se, th2, th2_se, v2, v2_se, vsq, vsq_se`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DiagError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(MOMENT_SERIES_COLUMNS)?;
        for i in 0..self.len() {
            wr.write_record([
                self.iters[i].to_string(),
                self.m2[i].to_string(),
                self.m2_se[i].to_string(),
                self.th2[i].to_string(),
                self.th2_se[i].to_string(),
                self.v2[i].to_string(),
                self.v2_se[i].to_string(),
                self.vsq[i].to_string(),
                self.vsq_se[i].to_string(),
            ])?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub const MOMENT_SERIES_COLUMNS: [&str; 9] = ["k", "m2", "m2_se", "th2", "th2_se", "v2", "v2_se", "vsq", "vsq_se"];

/// Builds the moment series from the snapshots of an ensemble run.
pub fn track_moments<M: GradientModel>(
    run: &EnsembleRun,
    beta: f64,
    gamma: f64,
    lambda: f64,
    model: &M,
) -> Result<MomentSeries, DiagError> {
    let snaps = run.snapshots.as_ref().ok_or(DiagError::NoSnapshots)?;
    let (nc, nr) = (snaps.n_chains(), snaps.n_records);
    let mut lyap = vec![0.0; nc * nr];
    let mut series = MomentSeries::exact(run.record_iters.clone(), vec![0.0; nr]);
    series.n_chains = nc;
    for r in 0..nr {
        let (mut m2, mut th, mut vv, mut vsq) = Default::default();
        let (m2s, ths, vvs, vsqs): (&mut RunningStats, &mut RunningStats, &mut RunningStats, &mut RunningStats) =
            (&mut m2, &mut th, &mut vv, &mut vsq);
        for c in 0..nc {
            let (t, v) = snaps.state(c, r);
            let u = model.potential(t).ok_or(DiagError::NoPotential)?;
            let val = lyapunov_value(t, v, beta, gamma, lambda, u);
            lyap[c * nr + r] = val;
            m2s.push(val / beta);
            ths.push(t.iter().map(|x| x * x).sum());
            vvs.push(v.iter().map(|x| x * x).sum());
            vsqs.push(val * val);
        }
        series.m2[r] = m2.mean;
        series.m2_se[r] = m2.se();
        series.th2[r] = th.mean;
        series.th2_se[r] = th.se();
        series.v2[r] = vv.mean;
        series.v2_se[r] = vv.se();
        series.vsq[r] = vsq.mean;
        series.vsq_se[r] = vsq.se();
    }
    if nc > 1 {
        for r in 0..nr.saturating_sub(1) {
            let (a, b) = (series.m2[r], series.m2[r + 1]);
            let cov: f64 = (0..nc)
                .map(|c| (lyap[c * nr + r] / beta - a) * (lyap[c * nr + r + 1] / beta - b))
                .sum::<f64>()
                / (nc - 1) as f64;
            series.m2_lag_cov[r] = cov / nc as f64;
        }
    }
    Ok(series)
}

/// Outcome of [`check_drift`].
#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// `m2(k+1) - c m2(k) - slack` over consecutive records.
    pub residuals: Vec<f64>,
    pub se: Vec<f64>,
    pub violations: usize,
    pub allowed: usize,
    /// Largest `residual / se`.
    pub worst_z: f64,
    pub pass: bool,
}

/// Tests `M2(k+1) <= (1 - gamma lambda eta / 2) M2(k) + 2 K3 eta`, iterated
/// over the stride between consecutive records.
///
/// Residual standard errors account for the correlation between consecutive
/// estimates, which come from the same chains.
pub fn check_drift(series: &MomentSeries, gamma: f64, lambda: f64, eta: f64, k3: f64, z: f64) -> Result<DriftReport, DiagError> {
    let n = series.len();
    if n < 2 {
        return Err(DiagError::TooShort(n));
    }
    let rate = 1.0 - gamma * lambda * eta / 2.0;
    let mut residuals = Vec::with_capacity(n - 1);
    let mut ses = Vec::with_capacity(n - 1);
    let mut violations = 0;
    let mut worst_z = f64::NEG_INFINITY;
    for k in 0..n - 1 {
        let stride = (series.iters[k + 1] - series.iters[k]) as i32;
        let c = rate.powi(stride);
        let slack = 2.0 * k3 * eta * (0..stride).map(|j| rate.powi(j)).sum::<f64>();
        let r = series.m2[k + 1] - c * series.m2[k] - slack;
        let var = series.m2_se[k + 1].powi(2) + c * c * series.m2_se[k].powi(2) - 2.0 * c * series.m2_lag_cov[k];
        let se = var.max(0.0).sqrt();
        if r > z * se + 1e-12 * series.m2[k + 1].abs().max(1.0) {
            violations += 1;
        }
        if se > 0.0 {
            worst_z = worst_z.max(r / se);
        }
        residuals.push(r);
        ses.push(se);
    }
    let allowed = false_positive_budget(n - 1, z);
    Ok(DriftReport { residuals, se: ses, violations, allowed, worst_z, pass: violations <= allowed })
}

/// Bounds to compare a series against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentBoundSet {
    pub c_theta: f64,
    pub c_v: f64,
    pub c_zeta: f64,
    /// `E V_0^2 + 2 D / (gamma lambda)`; skipped when absent.
    pub vsq: Option<f64>,
}

/// `E V_0^2 + 2 D / (gamma lambda)`.
pub fn vsq_bound(initial_vsq: f64, d_const: f64, gamma: f64, lambda: f64) -> f64 {
    initial_vsq + 2.0 * d_const / (gamma * lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub name: &'static str,
    pub bound: f64,
    /// `max_k (estimate - bound) / se`; infinite when `se = 0`.
    pub worst_margin: f64,
    pub pass: bool,
}

fn bound_check(name: &'static str, bound: f64, est: &[f64], se: &[f64], z: f64) -> BoundCheck {
    let worst = est
        .iter()
        .zip(se)
        .map(|(&e, &s)| {
            let gap = e - bound;
            if s > 0.0 {
                gap / s
            } else if gap > 0.0 {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        })
        .fold(f64::NEG_INFINITY, f64::max);
    BoundCheck { name, bound, worst_margin: worst, pass: worst <= z }
}

/// Checks `E|theta_k|^2 <= C_theta` and `<= C_zeta`, `E|v_k|^2 <= C_v` and the
/// squared-Lyapunov bound at every record.
pub fn check_moment_bounds(series: &MomentSeries, bounds: &MomentBoundSet, z: f64) -> Vec<BoundCheck> {
    let mut out = vec![
        bound_check("C_theta", bounds.c_theta, &series.th2, &series.th2_se, z),
        bound_check("C_v", bounds.c_v, &series.v2, &series.v2_se, z),
        bound_check("C_zeta", bounds.c_zeta, &series.th2, &series.th2_se, z),
    ];
    match bounds.vsq {
        Some(b) => out.push(bound_check("Vsq", b, &series.vsq, &series.vsq_se, z)),
        None => log::warn!("squared Lyapunov bound skipped"),
    }
    out
}

/// Whether second moments stopped growing: per-chain average over the last
/// quarter of the records minus that over the second quarter.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatnessReport {
    pub theta_second: f64,
    pub theta_last: f64,
    pub theta_growth_se: f64,
    pub v_second: f64,
    pub v_last: f64,
    pub v_growth_se: f64,
    /// Supremum over records of the cross-chain means.
    pub theta_sup: f64,
    pub v_sup: f64,
    pub pass: bool,
}

pub fn check_flatness(run: &EnsembleRun, z: f64) -> FlatnessReport {
    let q = &run.quarters;
    let within = |g: &RunningStats| g.n > 1 && g.mean.abs() <= z * g.se();
    let sup = |s: &[RunningStats]| s.iter().map(|r| r.mean).fold(f64::NEG_INFINITY, f64::max);
    let (theta_sup, v_sup) = (sup(&run.theta_sq), sup(&run.v_sq));
    FlatnessReport {
        theta_second: q.theta_sq[1].mean,
        theta_last: q.theta_sq[3].mean,
        theta_growth_se: q.theta_sq_growth.se(),
        v_second: q.v_sq[1].mean,
        v_last: q.v_sq[3].mean,
        v_growth_se: q.v_sq_growth.se(),
        theta_sup,
        v_sup,
        pass: within(&q.theta_sq_growth) && within(&q.v_sq_growth) && theta_sup.is_finite() && v_sup.is_finite(),
    }
}

/// Standard error of the mean of a correlated series by non-overlapping batch means.
pub fn batch_means_se(values: &[f64], n_batches: usize) -> f64 {
    let size = values.len() / n_batches.max(1);
    if size == 0 || n_batches < 2 {
        return f64::NAN;
    }
    let mut stats = RunningStats::default();
    for b in values.chunks_exact(size).take(n_batches) {
        stats.push(b.iter().sum::<f64>() / size as f64);
    }
    stats.se()
}
