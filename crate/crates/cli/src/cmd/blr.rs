use std::path::Path;

use kinetic_gibbs::models::{
    blr_model, blr_synthetic_data, check_unbiasedness, fit_logistic_mle, BlrDataset, BlrModel, GradientModel, ModelError, UnbiasednessMode,
    UnbiasednessReport,
};
use kinetic_gibbs::sampler::{chain_rng, run_chain, run_ensemble, EnsembleOptions, DATA_STREAM};

use super::{divergence, rejected, run_or_partial};
use crate::config::{Config, ConfigError};
use crate::output::{bool_value, out_dir, write_summary};
use crate::setup::{initial_law, sampler_config, OUTPUT_KEYS, SAMPLER_KEYS};
use crate::CliError;

pub const BLR_FILE: &str = "blr_summary.csv";

const BLR_KEYS: &[&str] = &[
    "batch", "data_file", "test_file", "train_len", "test_len", "theta_true", "data_seed", "mode", "unbiasedness", "unbiasedness_draws",
    "ridge",
];

#[derive(Debug, Clone, PartialEq)]
pub struct BlrOutput {
    pub train_len: usize,
    pub test_len: usize,
    pub posterior_mean: Vec<f64>,
    pub mle: Vec<f64>,
    /// Test accuracy of the posterior-mean classifier.
    pub accuracy: f64,
    pub mle_accuracy: f64,
    pub exhaustive: bool,
    pub unbiasedness: UnbiasednessReport,
    /// `max |H - h|` along chain 0 when the batch is the whole training set.
    pub full_batch_max_deviation: Option<f64>,
}

fn load_dataset(path: &str) -> Result<BlrDataset, CliError> {
    BlrDataset::read_csv_path(Path::new(path)).map_err(|e| ConfigError::Rejected(format!("dataset {path}: {e}")).into())
}

fn unbiasedness(model: &BlrModel, theta: &[f64], cfg: &Config) -> Result<(bool, UnbiasednessReport), CliError> {
    let draws = cfg.get_or("unbiasedness_draws", 10_000)?;
    let mc = UnbiasednessMode::MonteCarlo { draws, seed: cfg.get_or("seed", 0)? };
    let exhaustive = UnbiasednessMode::Exhaustive { with_replacement: true };
    match cfg.str("unbiasedness").unwrap_or("auto") {
        "exhaustive" => Ok((true, check_unbiasedness(model, theta, exhaustive).map_err(rejected)?)),
        "monte_carlo" => Ok((false, check_unbiasedness(model, theta, mc).map_err(rejected)?)),
        "auto" => match check_unbiasedness(model, theta, exhaustive) {
            Ok(r) => Ok((true, r)),
            Err(ModelError::NotEnumerable) => Ok((false, check_unbiasedness(model, theta, mc).map_err(rejected)?)),
            Err(e) => Err(rejected(e)),
        },
        other => Err(rejected(format!("unknown unbiasedness mode `{other}` (auto, exhaustive, monte_carlo)"))),
    }
}

pub fn cmd_blr(cfg: &Config) -> Result<BlrOutput, CliError> {
    cfg.check_keys("blr", &[BLR_KEYS, SAMPLER_KEYS, OUTPUT_KEYS])?;
    let data_seed: u64 = cfg.get_or("data_seed", 0)?;
    let theta_true = cfg.list("theta_true")?;
    let train = match (cfg.str("data_file"), &theta_true) {
        (Some(path), _) => load_dataset(path)?,
        (None, Some(t)) => blr_synthetic_data(cfg.require("train_len")?, t, data_seed).map_err(rejected)?,
        (None, None) => return Err(ConfigError::Missing("data_file".into()).into()),
    };
    let test = match (cfg.str("test_file"), &theta_true) {
        (Some(path), _) => load_dataset(path)?,
        (None, Some(t)) => blr_synthetic_data(cfg.get_or("test_len", 1000)?, t, data_seed.wrapping_add(1)).map_err(rejected)?,
        (None, None) => return Err(ConfigError::Missing("test_file".into()).into()),
    };
    let d = train.dim;
    if test.dim != d || theta_true.as_ref().is_some_and(|t| t.len() != d) {
        return Err(rejected("training data, test data and theta_true disagree on the dimension"));
    }
    let mode = cfg.list("mode")?.unwrap_or_else(|| vec![0.0; d]);
    let batch: usize = cfg.require("batch")?;
    let train_len = train.len();
    let mle = fit_logistic_mle(&train, cfg.get_or("ridge", 1e-8)?);
    let model = blr_model(train, mode, batch).map_err(rejected)?;

    let sc = sampler_config(cfg)?;
    let n_chains: usize = cfg.get_or("n_chains", 4)?;
    let init = initial_law(cfg, d, None, sc.beta)?;
    let (run, failed) = run_or_partial(run_ensemble(&model, &sc, n_chains, &init, EnsembleOptions::default()))?;
    let posterior_mean = run.pooled.mean[..d].to_vec();

    let (exhaustive, report) = unbiasedness(&model, &posterior_mean, cfg)?;
    let full_batch_max_deviation = if batch == train_len && failed.is_empty() {
        let chain = run_chain(&model, &sc, &init.draw(sc.master_seed, sc.chain_id)).map_err(rejected)?;
        let mut rng = chain_rng(sc.master_seed, u64::MAX, DATA_STREAM);
        let mut x = model.new_data();
        let (mut g, mut h) = (vec![0.0; d], vec![0.0; d]);
        let mut worst = 0.0_f64;
        for s in &chain.trajectory {
            model.sample_data(&mut rng, &mut x);
            model.stochastic_gradient(&s.theta, &x, &mut g);
            model.full_gradient(&s.theta, &mut h);
            worst = g.iter().zip(&h).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        }
        Some(worst)
    } else {
        None
    };

    let out = BlrOutput {
        train_len,
        test_len: test.len(),
        accuracy: test.accuracy(&posterior_mean),
        mle_accuracy: test.accuracy(&mle),
        posterior_mean,
        mle,
        exhaustive,
        unbiasedness: report,
        full_batch_max_deviation,
    };
    let mut summary: Vec<(String, f64)> = vec![
        ("train_len".into(), out.train_len as f64),
        ("test_len".into(), out.test_len as f64),
        ("batch".into(), batch as f64),
        ("n_chains".into(), run.n_chains as f64),
        ("accuracy".into(), out.accuracy),
        ("mle_accuracy".into(), out.mle_accuracy),
    ];
    summary.extend(out.posterior_mean.iter().enumerate().map(|(j, v)| (format!("posterior_mean_{}", j + 1), *v)));
    summary.extend(out.mle.iter().enumerate().map(|(j, v)| (format!("mle_{}", j + 1), *v)));
    summary.extend([
        ("unbiasedness_exhaustive".into(), bool_value(out.exhaustive)),
        ("unbiasedness_max_deviation".into(), out.unbiasedness.max_deviation),
        ("unbiasedness_pass".into(), bool_value(out.unbiasedness.pass)),
    ]);
    if let Some(dev) = out.full_batch_max_deviation {
        summary.push(("full_batch_max_deviation".into(), dev));
    }
    write_summary(&out_dir(cfg)?.join(BLR_FILE), &summary)?;
    println!("posterior-mean accuracy = {:.4}, MLE accuracy = {:.4}", out.accuracy, out.mle_accuracy);
    if !failed.is_empty() {
        return Err(divergence(&failed, n_chains));
    }
    Ok(out)
}
