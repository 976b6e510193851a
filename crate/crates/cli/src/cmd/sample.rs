use kinetic_gibbs::constants::{lambda_ac, ConstantsReport};
use kinetic_gibbs::diagnostics::{
    check_drift, check_flatness, check_moment_bounds, lyapunov_value, track_moments, vsq_bound, MomentBoundSet, MomentSeries,
};
use kinetic_gibbs::models::{problem_params, GradientModel};
use kinetic_gibbs::sampler::{run_ensemble, EnsembleOptions, EnsembleRun, InitialDistribution};
use kinetic_gibbs::wasserstein::{fit_gaussian, moments_of, w2_gaussian, GaussianMoments};
use nalgebra::{DMatrix, DVector};

use super::{divergence, rejected, run_or_partial};
use crate::config::Config;
use crate::output::{bool_value, create, out_dir, write_summary, write_terminal};
use crate::setup::{build_model, initial_distribution, problem_params_from, sampler_config, AnyModel, MODEL_KEYS, OUTPUT_KEYS, PARAM_KEYS, SAMPLER_KEYS};
use crate::{with_model, CliError};

pub const MOMENTS_FILE: &str = "moments.csv";
pub const TERMINAL_FILE: &str = "terminal.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

#[derive(Debug, Clone)]
pub struct SampleOutput {
    pub run: EnsembleRun,
    pub series: MomentSeries,
    pub summary: Vec<(String, f64)>,
}

impl SampleOutput {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }
}

/// Extended target `N(0, diag(1/(beta kappa) I, 1/beta I))` of a quadratic model.
pub fn quadratic_target(kappa: f64, beta: f64, d: usize) -> GaussianMoments {
    let diag = DVector::from_fn(2 * d, |i, _| if i < d { 1.0 / (beta * kappa) } else { 1.0 / beta });
    GaussianMoments::new(DVector::zeros(2 * d), DMatrix::from_diagonal(&diag)).expect("diagonal covariance")
}

fn initial_lyapunov_square(model: &AnyModel, init: &InitialDistribution, seed: u64, n: usize, beta: f64, gamma: f64, lambda: f64) -> f64 {
    let total: f64 = (0..n as u64)
        .map(|c| {
            let s = init.draw(seed, c);
            let u = with_model!(model, m => m.potential(&s.theta)).unwrap_or(0.0);
            lyapunov_value(&s.theta, &s.v, beta, gamma, lambda, u).powi(2)
        })
        .sum();
    total / n as f64
}

pub fn cmd_sample(cfg: &Config) -> Result<SampleOutput, CliError> {
    cfg.check_keys("sample", &[MODEL_KEYS, SAMPLER_KEYS, PARAM_KEYS, OUTPUT_KEYS, &["z", "flat_z"]])?;
    let model = build_model(cfg)?;
    let mut sc = sampler_config(cfg)?;
    let n_chains: usize = cfg.get_or("n_chains", 100)?;
    let z: f64 = cfg.get_or("z", 4.0)?;
    let flat_z: f64 = cfg.get_or("flat_z", 3.0)?;
    let init = initial_distribution(cfg, &model, sc.beta)?;
    let params = problem_params_from(cfg, Some(&model), Some((&init, sc.master_seed, n_chains)))?;
    let report = params.as_ref().map(|p| ConstantsReport::evaluate(p, sc.eta)).transpose().map_err(rejected)?;
    if let Some(r) = &report {
        sc.eta_max = Some(r.eta_max.value);
    }
    let lambda = match &report {
        Some(r) => r.lambda,
        None => lambda_ac(&with_model!(&model, m => problem_params(m, sc.gamma, sc.beta, 0.0, 1.0, 1000, 0))).0,
    };
    let dir = out_dir(cfg)?;
    let opts = EnsembleOptions { keep_snapshots: true };
    let (run, failed) = run_or_partial(with_model!(&model, m => run_ensemble(m, &sc, n_chains, &init, opts)))?;

    let series = if run.n_chains > 0 {
        with_model!(&model, m => track_moments(&run, sc.beta, sc.gamma, lambda, m)).map_err(rejected)?
    } else {
        MomentSeries::exact(Vec::new(), Vec::new())
    };
    series
        .write_csv(create(&dir.join(MOMENTS_FILE))?)
        .map_err(|e| CliError::Io(anyhow::anyhow!("writing {MOMENTS_FILE}: {e}")))?;
    write_terminal(&dir.join(TERMINAL_FILE), model.dim(), &run.terminal)?;

    let mut summary: Vec<(String, f64)> = vec![
        ("n_chains".into(), run.n_chains as f64),
        ("diverged_chains".into(), failed.len() as f64),
        ("eta".into(), sc.eta),
        ("steps".into(), sc.steps as f64),
        ("lambda".into(), lambda),
    ];
    if run.n_chains > 0 {
        let flat = check_flatness(&run, flat_z);
        summary.extend([
            ("theta_sq_sup".into(), flat.theta_sup),
            ("v_sq_sup".into(), flat.v_sup),
            ("theta_sq_second_quarter".into(), flat.theta_second),
            ("theta_sq_last_quarter".into(), flat.theta_last),
            ("theta_sq_growth_se".into(), flat.theta_growth_se),
            ("v_sq_second_quarter".into(), flat.v_second),
            ("v_sq_last_quarter".into(), flat.v_last),
            ("v_sq_growth_se".into(), flat.v_growth_se),
            ("flat".into(), bool_value(flat.pass)),
        ]);
        if let AnyModel::Quadratic(q) = &model {
            let target = quadratic_target(q.kappa, sc.beta, q.dim);
            let pooled = w2_gaussian(&moments_of(&run.pooled), &target).map_err(rejected)?;
            let terminal = w2_gaussian(&fit_gaussian(&run.terminal_cloud().map_err(rejected)?), &target).map_err(rejected)?;
            summary.push(("w2_pooled_to_target".into(), pooled));
            summary.push(("w2_terminal_to_target".into(), terminal));
        }
    }
    if let (Some(r), true) = (&report, series.len() >= 2) {
        let drift = check_drift(&series, sc.gamma, r.lambda, sc.eta, r.k.k3, z).map_err(rejected)?;
        summary.extend([
            ("drift_violations".into(), drift.violations as f64),
            ("drift_allowed".into(), drift.allowed as f64),
            ("drift_worst_z".into(), drift.worst_z),
            ("drift_pass".into(), bool_value(drift.pass)),
        ]);
        let vsq0 = initial_lyapunov_square(&model, &init, sc.master_seed, n_chains.max(1), sc.beta, sc.gamma, r.lambda);
        let bounds = MomentBoundSet {
            c_theta: r.moments.theta,
            c_v: r.moments.v,
            c_zeta: r.moments.zeta,
            vsq: Some(vsq_bound(vsq0, r.drift.d_const, sc.gamma, r.lambda)),
        };
        for c in check_moment_bounds(&series, &bounds, z) {
            summary.push((format!("bound_{}", c.name), c.bound));
            summary.push((format!("bound_{}_worst_z", c.name), c.worst_margin));
            summary.push((format!("bound_{}_pass", c.name), bool_value(c.pass)));
        }
    }
    write_summary(&dir.join(SUMMARY_FILE), &summary)?;
    if !failed.is_empty() {
        return Err(divergence(&failed, n_chains));
    }
    Ok(SampleOutput { run, series, summary })
}
