use kinetic_gibbs::constants::{gibbs_gap, optimization_bound, ConstantsReport};
use kinetic_gibbs::models::{problem_params, GradientModel};
use kinetic_gibbs::sampler::{run_ensemble, EnsembleOptions};
use kinetic_gibbs::stats::RunningStats;

use super::{divergence, rejected, run_or_partial};
use crate::config::Config;
use crate::output::{out_dir, write_table};
use crate::setup::{build_model, initial_distribution, problem_params_from, sampler_config, MODEL_KEYS, OUTPUT_KEYS, PARAM_KEYS, SAMPLER_KEYS};
use crate::{with_model, CliError};

pub const OPTIMIZE_FILE: &str = "optimize.csv";
pub const OPTIMIZE_COLUMNS: [&str; 4] = ["k", "subopt", "se", "bound"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeRow {
    pub k: u64,
    pub subopt: f64,
    pub se: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeOutput {
    pub rows: Vec<OptimizeRow>,
    pub u_star: f64,
    /// From the parameter keys when given, otherwise from the model's own constants.
    pub gibbs_gap: f64,
}

impl OptimizeOutput {
    pub fn terminal(&self) -> Option<&OptimizeRow> {
        self.rows.last()
    }
}

pub fn cmd_optimize(cfg: &Config) -> Result<OptimizeOutput, CliError> {
    cfg.check_keys("optimize", &[MODEL_KEYS, SAMPLER_KEYS, PARAM_KEYS, OUTPUT_KEYS])?;
    let model = build_model(cfg)?;
    let sc = sampler_config(cfg)?;
    let n_chains: usize = cfg.get_or("n_chains", 100)?;
    let init = initial_distribution(cfg, &model, sc.beta)?;
    let params = problem_params_from(cfg, Some(&model), Some((&init, sc.master_seed, n_chains)))?;
    let report = params.as_ref().map(|p| ConstantsReport::evaluate(p, sc.eta)).transpose().map_err(rejected)?;
    let gap = match &report {
        Some(r) => r.gibbs_gap,
        None => gibbs_gap(&with_model!(&model, m => problem_params(m, sc.gamma, sc.beta, 0.0, 1.0, 10_000, 0))),
    };
    let u_star = model.u_star();

    let opts = EnsembleOptions { keep_snapshots: true };
    let (run, failed) = run_or_partial(with_model!(&model, m => run_ensemble(m, &sc, n_chains, &init, opts)))?;
    let mut rows = Vec::with_capacity(run.record_iters.len());
    if let Some(snaps) = &run.snapshots {
        for (r, &k) in run.record_iters.iter().enumerate() {
            let mut stats = RunningStats::default();
            for c in 0..snaps.n_chains() {
                let theta = snaps.state(c, r).0;
                let u = with_model!(&model, m => m.potential(theta)).expect("shipped models have a potential");
                stats.push(u - u_star);
            }
            let bound = report.as_ref().map(|rep| optimization_bound(sc.eta, k as f64, rep).total);
            rows.push(OptimizeRow { k, subopt: stats.mean, se: stats.se(), bound });
        }
    }
    write_table(
        &out_dir(cfg)?.join(OPTIMIZE_FILE),
        &OPTIMIZE_COLUMNS,
        rows.iter().map(|r| vec![Some(r.k as f64), Some(r.subopt), Some(r.se), r.bound]),
    )?;
    if let Some(t) = rows.last() {
        println!("terminal suboptimality = {} (se {})", t.subopt, t.se);
    }
    println!("gibbs_gap = {gap}");
    if !failed.is_empty() {
        return Err(divergence(&failed, n_chains));
    }
    Ok(OptimizeOutput { rows, u_star, gibbs_gap: gap })
}
