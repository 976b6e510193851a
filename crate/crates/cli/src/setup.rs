//! Builds models, sampler settings and problem parameters from a [`Config`].

use kinetic_gibbs::constants::{lambda_ac, GeneralizationInputs, ProblemParams};
use kinetic_gibbs::diagnostics::lyapunov_value;
use kinetic_gibbs::models::{gaussian_location_model, mixture_prior_model, problem_params, GaussianLocation, GradientModel, MixturePrior, Quadratic};
use kinetic_gibbs::sampler::{ChainState, InitialDistribution, SamplerConfig};

use crate::config::{Config, ConfigError};

pub const MODEL_KEYS: &[&str] = &["model", "dim", "kappa", "mu", "sd", "mode"];
pub const SAMPLER_KEYS: &[&str] = &[
    "eta", "gamma", "beta", "steps", "seed", "burn_in", "thin", "noise", "n_chains", "init", "init_theta", "init_v", "init_sd_theta",
    "init_sd_v",
];
pub const PARAM_KEYS: &[&str] = &[
    "params", "l1", "l2", "rho", "c_rho", "big_h0", "h0", "u0", "l1_bar", "a", "b", "gamma", "beta", "dim", "sigma_z", "m0", "alpha",
    "w_rho0", "c2_star", "c_ls", "l1_prime", "b1", "gen_sample_size", "param_draws", "param_seed",
];
pub const OUTPUT_KEYS: &[&str] = &["out_dir"];

/// Models selectable with the `model` key outside the `blr` subcommand.
#[derive(Debug, Clone)]
pub enum AnyModel {
    Quadratic(Quadratic),
    Location(GaussianLocation),
    Mixture(MixturePrior),
}

/// Runs `$body` with `$m` bound to the concrete model.
#[macro_export]
macro_rules! with_model {
    ($model:expr, $m:ident => $body:expr) => {
        match $model {
            $crate::setup::AnyModel::Quadratic($m) => $body,
            $crate::setup::AnyModel::Location($m) => $body,
            $crate::setup::AnyModel::Mixture($m) => $body,
        }
    };
}

impl AnyModel {
    pub fn dim(&self) -> usize {
        with_model!(self, m => m.dim())
    }

    /// Global minimum of the potential, when known.
    pub fn u_star(&self) -> f64 {
        match self {
            Self::Quadratic(_) | Self::Location(_) => 0.0,
            Self::Mixture(m) => m.minimum().1,
        }
    }
}

fn rejected(e: impl std::fmt::Display) -> ConfigError {
    ConfigError::Rejected(e.to_string())
}

pub fn build_model(cfg: &Config) -> Result<AnyModel, ConfigError> {
    let dim: Option<usize> = cfg.get("dim")?;
    let model = match cfg.str("model").ok_or_else(|| ConfigError::Missing("model".into()))? {
        "quadratic" => AnyModel::Quadratic(Quadratic::new(cfg.get_or("kappa", 1.0)?, dim.unwrap_or(1)).map_err(rejected)?),
        "gaussian_location" => {
            let mu = cfg.list("mu")?.unwrap_or_else(|| vec![0.0; dim.unwrap_or(1)]);
            AnyModel::Location(gaussian_location_model(mu, cfg.get_or("sd", 1.0)?).map_err(rejected)?)
        }
        "mixture" => {
            let mode = cfg.list("mode")?.ok_or_else(|| ConfigError::Missing("mode".into()))?;
            AnyModel::Mixture(mixture_prior_model(mode).map_err(rejected)?)
        }
        "blr" => return Err(rejected("model `blr` is run by the blr subcommand")),
        other => return Err(rejected(format!("unknown model `{other}` (quadratic, gaussian_location, mixture)"))),
    };
    if let Some(d) = dim {
        if d != model.dim() {
            return Err(rejected(format!("dim = {d} but the model has dimension {}", model.dim())));
        }
    }
    Ok(model)
}

/// Sampler settings; `eta` and `steps` are required.
pub fn sampler_config(cfg: &Config) -> Result<SamplerConfig, ConfigError> {
    let steps: u64 = cfg.require("steps")?;
    let mut sc = SamplerConfig::new(cfg.require("eta")?, cfg.get_or("gamma", 2.0)?, cfg.get_or("beta", 1.0)?, steps, cfg.get_or("seed", 0)?);
    sc.burn_in = cfg.get_or("burn_in", sc.burn_in)?;
    sc.thin = cfg.get_or("thin", sc.thin)?;
    sc.noise_enabled = cfg.flag("noise", true)?;
    sc.validate().map_err(rejected)?;
    Ok(sc)
}

/// `init = point` (default), `gaussian`, or `stationary` (quadratic only).
pub fn initial_distribution(cfg: &Config, model: &AnyModel, beta: f64) -> Result<InitialDistribution, ConfigError> {
    let kappa = match model {
        AnyModel::Quadratic(q) => Some(q.kappa),
        _ => None,
    };
    initial_law(cfg, model.dim(), kappa, beta)
}

/// Initial law in dimension `d`; `quadratic_kappa` enables `init = stationary`.
pub fn initial_law(cfg: &Config, d: usize, quadratic_kappa: Option<f64>, beta: f64) -> Result<InitialDistribution, ConfigError> {
    let vec_or_zero = |key: &str| -> Result<Vec<f64>, ConfigError> {
        let v = cfg.list(key)?.unwrap_or_else(|| vec![0.0; d]);
        if v.len() != d {
            return Err(rejected(format!("{key} has {} entries, model dimension is {d}", v.len())));
        }
        Ok(v)
    };
    let mean = ChainState::new(vec_or_zero("init_theta")?, vec_or_zero("init_v")?).map_err(rejected)?;
    match cfg.str("init").unwrap_or("point") {
        "point" => Ok(InitialDistribution::PointMass(mean)),
        "gaussian" => Ok(InitialDistribution::Gaussian {
            mean,
            sd_theta: cfg.get_or("init_sd_theta", 1.0)?,
            sd_v: cfg.get_or("init_sd_v", 1.0)?,
        }),
        "stationary" => match quadratic_kappa {
            Some(kappa) => Ok(InitialDistribution::Gaussian {
                mean: ChainState::zeros(d),
                sd_theta: (1.0 / (beta * kappa)).sqrt(),
                sd_v: (1.0 / beta).sqrt(),
            }),
            None => Err(rejected("init = stationary needs model = quadratic")),
        },
        other => Err(rejected(format!("unknown init `{other}` (point, gaussian, stationary)"))),
    }
}

const EXPLICIT_REQUIRED: &[&str] = &["l1", "l2", "rho", "c_rho", "big_h0", "h0", "u0", "l1_bar", "a", "b", "dim", "sigma_z"];

/// Problem parameters when the `params` key is present: `reference` starts
/// from the built-in reference set, `model` estimates them from the model,
/// `explicit` requires every regularity key. Individual keys override in all cases.
///
/// Without an explicit `m0`, the `model` variant estimates the initial
/// Lyapunov moment from draws of the initial law.
pub fn problem_params_from(
    cfg: &Config,
    model: Option<&AnyModel>,
    init: Option<(&InitialDistribution, u64, usize)>,
) -> Result<Option<ProblemParams>, ConfigError> {
    let Some(kind) = cfg.str("params") else { return Ok(None) };
    let gamma = cfg.get_or("gamma", 2.0)?;
    let beta = cfg.get_or("beta", 1.0)?;
    let mut p = match kind {
        "reference" => ProblemParams::reference(),
        "model" => {
            let m = model.ok_or_else(|| rejected("params = model needs a model"))?;
            let draws = cfg.get_or("param_draws", 10_000)?;
            let seed = cfg.get_or("param_seed", 0)?;
            with_model!(m, mm => problem_params(mm, gamma, beta, 0.0, 1.0, draws, seed))
        }
        "explicit" => {
            if let Some(k) = EXPLICIT_REQUIRED.iter().find(|k| !cfg.contains(k)) {
                return Err(ConfigError::Missing(k.to_string()));
            }
            ProblemParams::reference()
        }
        other => return Err(rejected(format!("unknown params `{other}` (reference, model, explicit)"))),
    };
    macro_rules! over {
        ($($field:ident),*) => {$(
            if let Some(v) = cfg.get(stringify!($field))? { p.$field = v; }
        )*};
    }
    over!(l1, l2, rho, c_rho, big_h0, h0, u0, l1_bar, a, b, gamma, beta, dim, sigma_z, m0, alpha);
    if let Some(v) = cfg.get("w_rho0")? {
        p.w_rho0 = Some(v);
    }
    if let Some(v) = cfg.get("c2_star")? {
        p.c2_star = Some(v);
    }
    let gen_keys = ["c_ls", "l1_prime", "b1", "gen_sample_size"];
    let present = gen_keys.iter().filter(|k| cfg.contains(k)).count();
    if present == gen_keys.len() {
        p.generalization = Some(GeneralizationInputs {
            c_ls: cfg.require("c_ls")?,
            l1_prime: cfg.require("l1_prime")?,
            b1: cfg.require("b1")?,
            sample_size: cfg.require("gen_sample_size")?,
        });
    } else if present > 0 {
        let missing = gen_keys.iter().find(|k| !cfg.contains(k)).unwrap();
        return Err(ConfigError::Missing(missing.to_string()));
    }
    if kind == "model" && !cfg.contains("m0") {
        if let (Some(m), Some((init, seed, n))) = (model, init) {
            p.m0 = initial_lyapunov_moment(m, init, seed, n, &p);
        }
    }
    p.validate().map_err(rejected)?;
    Ok(Some(p))
}

/// Mean Lyapunov value over the first `n` initial draws.
fn initial_lyapunov_moment(model: &AnyModel, init: &InitialDistribution, seed: u64, n: usize, p: &ProblemParams) -> f64 {
    let (lambda, _) = lambda_ac(p);
    let n = n.max(1);
    let total: f64 = (0..n as u64)
        .map(|c| {
            let s = init.draw(seed, c);
            let u = with_model!(model, m => m.potential(&s.theta)).unwrap_or(0.0);
            lyapunov_value(&s.theta, &s.v, p.beta, p.gamma, lambda, u)
        })
        .sum();
    total / n as f64
}
