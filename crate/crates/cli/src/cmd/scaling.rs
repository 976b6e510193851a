use std::io::Write;
use std::path::Path;

use anyhow::Context;
use kinetic_gibbs::sampler::{run_ensemble, sample_extended_quadratic, EnsembleOptions};
use kinetic_gibbs::stats::RunningStats;
use kinetic_gibbs::wasserstein::{fit_gaussian, w2_assignment, w2_gaussian, EmpiricalCloud, GaussianMoments};

use super::{divergence, rejected, run_or_partial};
use crate::cmd::sample::quadratic_target;
use crate::config::{Config, ConfigError};
use crate::output::{create, out_dir, write_table};
use crate::setup::{build_model, initial_distribution, sampler_config, AnyModel, MODEL_KEYS, OUTPUT_KEYS};
use crate::{with_model, CliError};

pub const SCALING_FILE: &str = "scaling.csv";
pub const PLOT_FILE: &str = "scaling_plot.py";
pub const SCALING_COLUMNS: [&str; 4] = ["eta", "w2_moment", "w2_assign", "mc_se"];

const SCALING_KEYS: &[&str] = &[
    "eta_list", "physical_time", "assign_size", "mc_groups", "ref_seed", "reference_file", "gamma", "beta", "seed", "noise", "n_chains",
    "init", "init_theta", "init_v", "init_sd_theta", "init_sd_v",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub eta: f64,
    pub w2_moment: f64,
    pub w2_assign: f64,
    pub mc_se: f64,
}

/// Headered CSV of joint `(theta, v)` draws, as written by `sample`.
fn read_reference(path: &Path) -> Result<EmpiricalCloud, CliError> {
    let bad = |e: &dyn std::fmt::Display| ConfigError::Rejected(format!("reference_file {}: {e}", path.display()));
    let mut rdr = csv::Reader::from_path(path).map_err(|e| bad(&e))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(&e))?;
        rows.push(rec.iter().map(|s| s.trim().parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|e| bad(&e))?);
    }
    Ok(EmpiricalCloud::from_rows(&rows).map_err(|e| bad(&e))?)
}

/// Standard error of `w2` evaluated on the full cloud, from the spread over
/// `groups` contiguous chain groups.
fn group_se(cloud: &EmpiricalCloud, target: &GaussianMoments, groups: usize) -> Result<f64, CliError> {
    let size = cloud.len() / groups;
    if groups < 2 || size < 2 {
        return Ok(f64::NAN);
    }
    let mut stats = RunningStats::default();
    for g in 0..groups {
        let rows: Vec<Vec<f64>> = (g * size..(g + 1) * size).map(|i| cloud.point(i).to_vec()).collect();
        let sub = EmpiricalCloud::from_rows(&rows).map_err(rejected)?;
        stats.push(w2_gaussian(&fit_gaussian(&sub), target).map_err(rejected)?);
    }
    Ok(stats.variance().sqrt() / (groups as f64).sqrt())
}

pub fn cmd_scaling(cfg: &Config) -> Result<Vec<ScalingRow>, CliError> {
    cfg.check_keys("scaling", &[MODEL_KEYS, SCALING_KEYS, OUTPUT_KEYS])?;
    let etas = cfg.list("eta_list")?.ok_or_else(|| ConfigError::Missing("eta_list".into()))?;
    if etas.is_empty() || etas.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(rejected("eta_list must hold positive step sizes"));
    }
    let model = build_model(cfg)?;
    let physical_time: f64 = cfg.get_or("physical_time", 100.0)?;
    let n_chains: usize = cfg.get_or("n_chains", 1000)?;
    let assign_size: usize = cfg.get_or("assign_size", 500)?;
    let groups: usize = cfg.get_or("mc_groups", 10)?;
    let ref_seed: u64 = cfg.get_or("ref_seed", 1)?;

    let mut base_cfg = cfg.clone();
    base_cfg.set("eta", etas[0]);
    base_cfg.set("steps", 1);
    base_cfg.set("burn_in", 0);
    let base = sampler_config(&base_cfg)?;
    let init = initial_distribution(cfg, &model, base.beta)?;
    let d = model.dim();

    let (target, reference) = match (cfg.str("reference_file"), &model) {
        (Some(path), _) => {
            let cloud = read_reference(Path::new(path))?;
            if cloud.dim() != 2 * d {
                return Err(rejected(format!("reference_file has {} columns, expected {}", cloud.dim(), 2 * d)));
            }
            (fit_gaussian(&cloud), cloud)
        }
        (None, AnyModel::Quadratic(q)) => (
            quadratic_target(q.kappa, base.beta, d),
            sample_extended_quadratic(q.kappa, base.beta, d, assign_size.max(1), ref_seed).map_err(rejected)?,
        ),
        (None, _) => return Err(ConfigError::Missing("reference_file".into()).into()),
    };

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &eta in &etas {
        let steps = (physical_time / eta).round().max(1.0) as u64;
        let mut sc = base.clone();
        sc.eta = eta;
        sc.steps = steps;
        sc.burn_in = steps;
        sc.thin = 1;
        let (run, failed) = run_or_partial(with_model!(&model, m => run_ensemble(m, &sc, n_chains, &init, EnsembleOptions::default())))?;
        if !failed.is_empty() {
            log::warn!("eta = {eta}: {} chains diverged; step size skipped", failed.len());
            failures.push((eta, failed));
            continue;
        }
        let cloud = run.terminal_cloud().map_err(rejected)?;
        let w2_moment = w2_gaussian(&fit_gaussian(&cloud), &target).map_err(rejected)?;
        let m = assign_size.min(cloud.len()).min(reference.len());
        let (w2_assign, _) = w2_assignment(&cloud.truncate(m), &reference.truncate(m)).map_err(rejected)?;
        let mc_se = group_se(&cloud, &target, groups)?;
        rows.push(ScalingRow { eta, w2_moment, w2_assign, mc_se });
    }

    let dir = out_dir(cfg)?;
    write_table(
        &dir.join(SCALING_FILE),
        &SCALING_COLUMNS,
        rows.iter().map(|r| vec![Some(r.eta), Some(r.w2_moment), Some(r.w2_assign), Some(r.mc_se)]),
    )?;
    let plot = dir.join(PLOT_FILE);
    create(&plot)?
        .write_all(PLOT_SCRIPT.as_bytes())
        .with_context(|| format!("writing {}", plot.display()))?;
    for r in &rows {
        println!("eta = {}: w2_moment = {:.5} (se {:.5}), w2_assign = {:.5}", r.eta, r.w2_moment, r.mc_se, r.w2_assign);
    }
    if let Some((_, failed)) = failures.first() {
        return Err(divergence(failed, n_chains));
    }
    Ok(rows)
}

const PLOT_SCRIPT: &str = r#"# Log-log plot of the terminal W2 error against the step size.
# Usage: python scaling_plot.py  (reads scaling.csv next to this script)
import csv
import os

import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "scaling.csv")) as f:
    rows = list(csv.DictReader(f))
eta = [float(r["eta"]) for r in rows]
fig, ax = plt.subplots()
ax.errorbar(eta, [float(r["w2_moment"]) for r in rows], yerr=[2 * float(r["mc_se"]) for r in rows], marker="o", label="Gaussian fit")
ax.plot(eta, [float(r["w2_assign"]) for r in rows], marker="s", label="empirical assignment")
ax.set_xscale("log")
ax.set_yscale("log")
ax.set_xlabel("step size")
ax.set_ylabel("W2 to target")
ax.legend()
fig.savefig(os.path.join(here, "scaling.png"), dpi=150)
"#;
