//! Configuration-driven SGHMC experiments.
//!
//! Each subcommand reads a flat `key = value` file, runs one experiment and
//! writes CSV files into `out_dir`. Exit codes: 0 success, 2 configuration
//! error, 3 numerical divergence.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

pub mod cmd;
pub mod config;
pub mod output;
pub mod setup;

pub use cmd::blr::{cmd_blr, BlrOutput};
pub use cmd::constants::cmd_constants;
pub use cmd::optimize::{cmd_optimize, OptimizeOutput, OptimizeRow};
pub use cmd::sample::{cmd_sample, SampleOutput};
pub use cmd::scaling::{cmd_scaling, ScalingRow};
pub use config::{Config, ConfigError};

pub const THREADS_ENV: &str = "KINETIC_GIBBS_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical divergence: {0}")]
    Divergence(String),
    #[error(transparent)]
    Io(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) => 2,
            Self::Divergence(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

const EXIT_CODES: &str = "\
Exit codes: 0 success, 2 configuration error, 3 numerical divergence.
Set KINETIC_GIBBS_THREADS to cap the number of worker threads.";

const COMMON_KEYS: &str = "\
Model keys: model = quadratic | gaussian_location | mixture; dim; kappa (quadratic);
  mu, sd (gaussian_location); mode (mixture). Lists are comma-separated.
Sampler keys: eta, steps (required); gamma = 2; beta = 1; seed = 0; n_chains;
  burn_in = steps/10; thin = max(1, steps/10000); noise = true;
  init = point | gaussian | stationary; init_theta, init_v; init_sd_theta, init_sd_v.
Parameter keys (optional): params = reference | model | explicit, then any of
  l1 l2 rho c_rho big_h0 h0 u0 l1_bar a b sigma_z m0 alpha w_rho0 c2_star
  c_ls l1_prime b1 gen_sample_size param_draws param_seed.
Output: out_dir = . (created if missing).";

const CONSTANTS_HELP: &str = "\
Evaluates every explicit constant for one parameter set.

Keys: params (required) plus the parameter keys; eta (defaults to eta_max);
model keys when params = model; out_dir.

Writes constants.csv with columns
  name,value,log10_value,formula_ref
one row per constant. Values that leave the f64 range saturate and are
flagged in formula_ref; log10_value stays exact. Prints eta_max and the
Gibbs gap.";

const SAMPLE_HELP: &str = "\
Runs an ensemble of SGHMC chains and tracks its moments.

Extra keys: z = 4 (threshold of the drift and bound checks), flat_z = 3
(threshold of the second-quarter versus last-quarter flatness check).

Writes
  moments.csv   k,m2,m2_se,th2,th2_se,v2,v2_se,vsq,vsq_se
                one row per recorded iteration k; m2 is the mean Lyapunov
                value over beta, th2 and v2 the mean squared norms, vsq the
                mean squared Lyapunov value, each with its standard error.
  terminal.csv  theta_1..theta_d,v_1..v_d   one row per chain.
  summary.csv   name,value   flatness, target distance (quadratic) and, when
                parameter keys are given, drift and moment-bound checks.
On divergence the partial CSVs are still written and the exit code is 3.";

const SCALING_HELP: &str = "\
Terminal Wasserstein-2 error against the target as a function of the step size,
at a fixed physical time n * eta.

Keys: eta_list (required), physical_time = 100, n_chains = 1000,
assign_size = 500, mc_groups = 10, ref_seed = 1, reference_file (headered CSV
of target draws, required unless model = quadratic), plus sampler keys other
than eta, steps, burn_in and thin.

Writes
  scaling.csv       eta,w2_moment,w2_assign,mc_se
                    w2_moment: Gaussian W2 between fitted terminal moments and
                    the target; w2_assign: exact empirical W2 between the first
                    assign_size terminal states and as many target draws;
                    mc_se: standard error of w2_moment from chain groups.
  scaling_plot.py   renders log-log error against eta from scaling.csv.
Step sizes whose ensembles diverge are left out and the exit code is 3.";

const OPTIMIZE_HELP: &str = "\
Tracks the expected suboptimality E U(theta_k) - U_star over an ensemble.
U_star is 0 for quadratic and gaussian_location, and found by line search for
mixture.

Writes
  optimize.csv   k,subopt,se,bound
                 bound is the step-size and transient bound plus the Gibbs gap,
                 empty without parameter keys.
Prints the terminal suboptimality and the Gibbs gap.";

const BLR_HELP: &str = "\
Bayesian logistic regression with the two-mode mixture prior.

Keys: batch (required); data_file or (train_len, theta_true); test_file or
test_len = 1000 (drawn from theta_true); data_seed = 0; mode = zeros;
unbiasedness = auto | exhaustive | monte_carlo; unbiasedness_draws = 10000;
ridge = 1e-8; plus sampler keys and out_dir. Dataset CSVs have a header,
columns z_1..z_d,y with y in {0,1}.

Writes
  blr_summary.csv   name,value
      train_len, test_len, batch, accuracy (posterior-mean classifier on the
      test set), mle_accuracy, posterior_mean_j, mle_j, unbiasedness_exhaustive,
      unbiasedness_max_deviation, unbiasedness_pass, and full_batch_max_deviation
      when batch equals the training size.
A malformed dataset file is a configuration error (exit code 2).";

#[derive(Debug, Parser)]
#[command(name = "kinetic-gibbs", version, about = "SGHMC experiments driven by key = value config files", after_help = EXIT_CODES)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// Experiment config file.
    pub config: PathBuf,
    /// Add or replace a config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the explicit constants.
    #[command(long_about = CONSTANTS_HELP, after_help = COMMON_KEYS)]
    Constants(RunArgs),
    /// Run an ensemble and track its moments.
    #[command(long_about = SAMPLE_HELP, after_help = COMMON_KEYS)]
    Sample(RunArgs),
    /// Terminal W2 error against step size.
    #[command(long_about = SCALING_HELP, after_help = COMMON_KEYS)]
    Scaling(RunArgs),
    /// Expected suboptimality along the run.
    #[command(long_about = OPTIMIZE_HELP, after_help = COMMON_KEYS)]
    Optimize(RunArgs),
    /// Logistic regression posterior sampling.
    #[command(long_about = BLR_HELP, after_help = COMMON_KEYS)]
    Blr(RunArgs),
}

fn load(args: &RunArgs) -> Result<Config, CliError> {
    let mut cfg = Config::read(&args.config)?;
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| ConfigError::Rejected(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim());
    }
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Constants(a) => cmd_constants(&load(a)?).map(drop),
        Command::Sample(a) => cmd_sample(&load(a)?).map(drop),
        Command::Scaling(a) => cmd_scaling(&load(a)?).map(drop),
        Command::Optimize(a) => cmd_optimize(&load(a)?).map(drop),
        Command::Blr(a) => cmd_blr(&load(a)?).map(drop),
    }
}

/// Sizes the global thread pool from [`THREADS_ENV`], if set.
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError::Rejected(format!("{THREADS_ENV} = `{v}` is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Io(anyhow::anyhow!("thread pool: {e}")))
}
