//! Python module `kinetic_gibbs`: models, the ensemble runner, the constants
//! report and the Wasserstein helpers. Vectors and matrices cross the boundary
//! as plain lists.

use std::collections::BTreeMap;

use kinetic_gibbs::constants::{ConstantsReport, ProblemParams};
use kinetic_gibbs::diagnostics::{check_drift, lyapunov_value, track_moments};
use kinetic_gibbs::models::{
    blr_model, gaussian_location_model, mixture_prior_model, BlrDataset, BlrModel, GaussianLocation, GradientModel, MixturePrior, Quadratic,
};
use kinetic_gibbs::sampler::{exact_ou_moments, run_ensemble, ChainState, EnsembleOptions, EnsembleRun, InitialDistribution, SamplerConfig};
use kinetic_gibbs::wasserstein::{fit_gaussian, moments_of, w2_assignment, w2_gaussian, EmpiricalCloud, GaussianMoments};
use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyKeyError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err("matrix must be square"));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn gaussian(mean: Vec<f64>, cov: &[Vec<f64>]) -> PyResult<GaussianMoments> {
    GaussianMoments::new(DVector::from_vec(mean), matrix(cov)?).map_err(value_err)
}

fn cloud(points: &[Vec<f64>]) -> PyResult<EmpiricalCloud> {
    EmpiricalCloud::from_rows(points).map_err(value_err)
}

#[derive(Clone)]
enum Inner {
    Quadratic(Quadratic),
    Location(GaussianLocation),
    Mixture(MixturePrior),
    Blr(BlrModel),
}

macro_rules! dispatch {
    ($inner:expr, $m:ident => $body:expr) => {
        match $inner {
            Inner::Quadratic($m) => $body,
            Inner::Location($m) => $body,
            Inner::Mixture($m) => $body,
            Inner::Blr($m) => $body,
        }
    };
}

/// A potential with a stochastic gradient. Build one with the static constructors.
#[pyclass(name = "Model", module = "kinetic_gibbs", skip_from_py_object)]
#[derive(Clone)]
struct PyModel {
    inner: Inner,
}

#[pymethods]
impl PyModel {
    /// `U = kappa |theta|^2 / 2` with the exact gradient.
    #[staticmethod]
    #[pyo3(signature = (kappa = 1.0, dim = 1))]
    fn quadratic(kappa: f64, dim: usize) -> PyResult<Self> {
        Ok(Self { inner: Inner::Quadratic(Quadratic::new(kappa, dim).map_err(value_err)?) })
    }

    /// `H(theta, x) = theta - x` with `x ~ N(mu, sd^2 I)`.
    #[staticmethod]
    fn gaussian_location(mu: Vec<f64>, sd: f64) -> PyResult<Self> {
        Ok(Self { inner: Inner::Location(gaussian_location_model(mu, sd).map_err(value_err)?) })
    }

    /// Two-mode Gaussian mixture centred at `mode` and `-mode`.
    #[staticmethod]
    fn mixture(mode: Vec<f64>) -> PyResult<Self> {
        Ok(Self { inner: Inner::Mixture(mixture_prior_model(mode).map_err(value_err)?) })
    }

    /// Logistic regression on `features` (one row per example) and 0/1 `labels`
    /// with the mixture prior; `batch` examples per stochastic gradient.
    #[staticmethod]
    fn logistic(features: Vec<Vec<f64>>, labels: Vec<u8>, mode: Vec<f64>, batch: usize) -> PyResult<Self> {
        let dim = features.first().map_or(0, Vec::len);
        if features.iter().any(|r| r.len() != dim) {
            return Err(PyValueError::new_err("feature rows differ in length"));
        }
        let data = BlrDataset::new(dim, features.concat(), labels).map_err(value_err)?;
        Ok(Self { inner: Inner::Blr(blr_model(data, mode, batch).map_err(value_err)?) })
    }

    #[getter]
    fn dim(&self) -> usize {
        dispatch!(&self.inner, m => m.dim())
    }

    fn potential(&self, theta: Vec<f64>) -> PyResult<Option<f64>> {
        self.check(&theta)?;
        Ok(dispatch!(&self.inner, m => m.potential(&theta)))
    }

    /// Full gradient `h(theta)`, or `None` when the model has no closed form.
    fn gradient(&self, theta: Vec<f64>) -> PyResult<Option<Vec<f64>>> {
        self.check(&theta)?;
        let mut out = vec![0.0; theta.len()];
        Ok(dispatch!(&self.inner, m => m.full_gradient(&theta, &mut out)).then_some(out))
    }

    fn __repr__(&self) -> String {
        let kind = match &self.inner {
            Inner::Quadratic(q) => format!("quadratic, kappa={}", q.kappa),
            Inner::Location(g) => format!("gaussian_location, sd={}", g.sd),
            Inner::Mixture(_) => "mixture".to_string(),
            Inner::Blr(b) => format!("logistic, batch={}", b.batch),
        };
        format!("Model({kind}, dim={})", self.dim())
    }
}

impl PyModel {
    fn check(&self, theta: &[f64]) -> PyResult<()> {
        if theta.len() != self.dim() {
            return Err(PyValueError::new_err(format!("theta has {} entries, model dimension is {}", theta.len(), self.dim())));
        }
        Ok(())
    }
}

/// Regularity and sampler parameters feeding the constants report.
#[pyclass(name = "ProblemParams", module = "kinetic_gibbs", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PyProblemParams {
    l1: f64,
    l2: f64,
    rho: f64,
    c_rho: f64,
    big_h0: f64,
    h0: f64,
    u0: f64,
    l1_bar: f64,
    a: f64,
    b: f64,
    gamma: f64,
    beta: f64,
    dim: usize,
    sigma_z: f64,
    m0: f64,
    alpha: f64,
    w_rho0: Option<f64>,
    c2_star: Option<f64>,
}

impl From<ProblemParams> for PyProblemParams {
    fn from(p: ProblemParams) -> Self {
        Self {
            l1: p.l1,
            l2: p.l2,
            rho: p.rho,
            c_rho: p.c_rho,
            big_h0: p.big_h0,
            h0: p.h0,
            u0: p.u0,
            l1_bar: p.l1_bar,
            a: p.a,
            b: p.b,
            gamma: p.gamma,
            beta: p.beta,
            dim: p.dim,
            sigma_z: p.sigma_z,
            m0: p.m0,
            alpha: p.alpha,
            w_rho0: p.w_rho0,
            c2_star: p.c2_star,
        }
    }
}

impl PyProblemParams {
    fn to_core(&self) -> ProblemParams {
        ProblemParams {
            l1: self.l1,
            l2: self.l2,
            rho: self.rho,
            c_rho: self.c_rho,
            big_h0: self.big_h0,
            h0: self.h0,
            u0: self.u0,
            l1_bar: self.l1_bar,
            a: self.a,
            b: self.b,
            gamma: self.gamma,
            beta: self.beta,
            dim: self.dim,
            sigma_z: self.sigma_z,
            m0: self.m0,
            alpha: self.alpha,
            w_rho0: self.w_rho0,
            c2_star: self.c2_star,
            generalization: None,
        }
    }
}

#[pymethods]
impl PyProblemParams {
    /// The built-in reference parameter set.
    #[staticmethod]
    fn reference() -> Self {
        ProblemParams::reference().into()
    }

    /// Parameters estimated from a model by probing and sampling.
    #[staticmethod]
    #[pyo3(signature = (model, gamma = 2.0, beta = 1.0, m0 = 0.0, alpha = 1.0, draws = 10_000, seed = 0))]
    fn from_model(model: &PyModel, gamma: f64, beta: f64, m0: f64, alpha: f64, draws: usize, seed: u64) -> Self {
        dispatch!(&model.inner, m => kinetic_gibbs::models::problem_params(m, gamma, beta, m0, alpha, draws, seed)).into()
    }

    fn validate(&self) -> PyResult<()> {
        self.to_core().validate().map_err(value_err)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.to_core())
    }
}

/// Every explicit constant evaluated at one step size.
#[pyclass(name = "ConstantsReport", module = "kinetic_gibbs", frozen)]
struct PyConstantsReport {
    report: ConstantsReport,
}

#[pymethods]
impl PyConstantsReport {
    #[new]
    fn new(params: &PyProblemParams, eta: f64) -> PyResult<Self> {
        Ok(Self { report: ConstantsReport::evaluate(&params.to_core(), eta).map_err(value_err)? })
    }

    #[getter]
    fn eta_max(&self) -> f64 {
        self.report.eta_max.value
    }

    #[getter]
    fn gibbs_gap(&self) -> f64 {
        self.report.gibbs_gap
    }

    #[getter]
    fn contraction_rate(&self) -> f64 {
        self.report.lambda
    }

    /// `{name: (value, log10_value)}` for every row of the report.
    fn as_dict(&self) -> BTreeMap<&'static str, (f64, f64)> {
        self.report.entries().into_iter().map(|e| (e.name, (e.value, e.log10_value))).collect()
    }

    /// Textual formula of each row.
    fn formulas(&self) -> BTreeMap<&'static str, String> {
        self.report.entries().into_iter().map(|e| (e.name, e.formula)).collect()
    }

    fn __getitem__(&self, name: &str) -> PyResult<f64> {
        self.report.get(name).ok_or_else(|| PyKeyError::new_err(name.to_string()))
    }
}

/// Summary of an ensemble run.
#[pyclass(name = "EnsembleRun", module = "kinetic_gibbs", frozen)]
struct PyEnsembleRun {
    run: EnsembleRun,
    cfg: SamplerConfig,
    model: PyModel,
    /// `(chain id, iteration)` of chains that diverged.
    #[pyo3(get)]
    diverged: Vec<(u64, u64)>,
}

#[pymethods]
impl PyEnsembleRun {
    #[getter]
    fn n_chains(&self) -> usize {
        self.run.n_chains
    }

    #[getter]
    fn record_iters(&self) -> Vec<u64> {
        self.run.record_iters.clone()
    }

    /// Cross-chain mean of `|theta_k|^2` at each recorded iteration.
    #[getter]
    fn theta_sq(&self) -> Vec<f64> {
        self.run.theta_sq.iter().map(|s| s.mean).collect()
    }

    #[getter]
    fn v_sq(&self) -> Vec<f64> {
        self.run.v_sq.iter().map(|s| s.mean).collect()
    }

    /// Final `(theta, v)` of every finished chain, one row per chain.
    #[getter]
    fn terminal(&self) -> Vec<Vec<f64>> {
        self.run.terminal.iter().map(ChainState::joint).collect()
    }

    /// `(mean, cov)` of `(theta, v)` pooled over all recorded states.
    fn pooled_moments(&self) -> (Vec<f64>, Vec<Vec<f64>>) {
        let m = moments_of(&self.run.pooled);
        (m.mean.iter().copied().collect(), rows(&m.cov))
    }

    /// `(mean, cov)` fitted to the terminal states.
    fn terminal_moments(&self) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
        let m = fit_gaussian(&self.run.terminal_cloud().map_err(value_err)?);
        Ok((m.mean.iter().copied().collect(), rows(&m.cov)))
    }

    /// Lyapunov moment `M2` at each record; needs `keep_snapshots=True`.
    fn lyapunov_moments(&self, contraction_rate: f64) -> PyResult<Vec<f64>> {
        let (beta, gamma) = (self.cfg.beta, self.cfg.gamma);
        let series = dispatch!(&self.model.inner, m => track_moments(&self.run, beta, gamma, contraction_rate, m)).map_err(value_err)?;
        Ok(series.m2)
    }

    /// Drift inequality check against the report's constants; returns
    /// `(pass, violations, allowed, worst_z)`.
    #[pyo3(signature = (report, z = 4.0))]
    fn check_drift(&self, report: &PyConstantsReport, z: f64) -> PyResult<(bool, usize, usize, f64)> {
        let r = &report.report;
        let (beta, gamma) = (self.cfg.beta, self.cfg.gamma);
        let series = dispatch!(&self.model.inner, m => track_moments(&self.run, beta, gamma, r.lambda, m)).map_err(value_err)?;
        let d = check_drift(&series, gamma, r.lambda, self.cfg.eta, r.k.k3, z).map_err(value_err)?;
        Ok((d.pass, d.violations, d.allowed, d.worst_z))
    }
}

/// Runs `n_chains` independent SGHMC chains. Chains start at `(init_theta, init_v)`
/// (zeros by default), perturbed by Gaussian noise when `init_sd` is given.
/// Diverged chains are dropped and listed in `EnsembleRun.diverged`.
#[pyfunction]
#[pyo3(signature = (
    model, eta, steps, n_chains, gamma = 2.0, beta = 1.0, seed = 0, burn_in = None, thin = None,
    noise = true, init_theta = None, init_v = None, init_sd = None, keep_snapshots = false
))]
#[allow(clippy::too_many_arguments)]
fn sample(
    py: Python<'_>,
    model: &PyModel,
    eta: f64,
    steps: u64,
    n_chains: usize,
    gamma: f64,
    beta: f64,
    seed: u64,
    burn_in: Option<u64>,
    thin: Option<u64>,
    noise: bool,
    init_theta: Option<Vec<f64>>,
    init_v: Option<Vec<f64>>,
    init_sd: Option<(f64, f64)>,
    keep_snapshots: bool,
) -> PyResult<PyEnsembleRun> {
    let d = model.dim();
    let mut cfg = SamplerConfig::new(eta, gamma, beta, steps, seed);
    cfg.burn_in = burn_in.unwrap_or(cfg.burn_in);
    cfg.thin = thin.unwrap_or(cfg.thin);
    cfg.noise_enabled = noise;
    cfg.validate().map_err(value_err)?;
    let mean = ChainState::new(init_theta.unwrap_or_else(|| vec![0.0; d]), init_v.unwrap_or_else(|| vec![0.0; d])).map_err(value_err)?;
    if mean.dim() != d {
        return Err(PyValueError::new_err(format!("initial state has dimension {}, model has {d}", mean.dim())));
    }
    let init = match init_sd {
        Some((sd_theta, sd_v)) => InitialDistribution::Gaussian { mean, sd_theta, sd_v },
        None => InitialDistribution::PointMass(mean),
    };
    let opts = EnsembleOptions { keep_snapshots };
    let res = py.detach(|| dispatch!(&model.inner, m => run_ensemble(m, &cfg, n_chains, &init, opts)));
    let (run, diverged) = match res {
        Ok(run) => (run, Vec::new()),
        Err(kinetic_gibbs::sampler::SamplerError::EnsembleDivergence { failed, partial }) => (*partial, failed),
        Err(e) => return Err(PyRuntimeError::new_err(e.to_string())),
    };
    Ok(PyEnsembleRun { run, cfg, model: model.clone(), diverged })
}

/// Wasserstein-2 distance between two Gaussians given as `(mean, cov)`.
#[pyfunction]
fn w2_gaussians(mean1: Vec<f64>, cov1: Vec<Vec<f64>>, mean2: Vec<f64>, cov2: Vec<Vec<f64>>) -> PyResult<f64> {
    w2_gaussian(&gaussian(mean1, &cov1)?, &gaussian(mean2, &cov2)?).map_err(value_err)
}

/// Exact W2 between two equal-size point clouds; returns `(w2, assignment)`.
#[pyfunction]
fn w2_empirical(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>) -> PyResult<(f64, Vec<usize>)> {
    w2_assignment(&cloud(&x)?, &cloud(&y)?).map_err(value_err)
}

/// `(mean, cov)` at time `t` of the damped Langevin diffusion on `kappa |theta|^2 / 2`.
#[pyfunction]
fn ou_moments(kappa: f64, gamma: f64, beta: f64, t: f64, mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>)> {
    let out = exact_ou_moments(kappa, gamma, beta, t, &gaussian(mean, &cov)?).map_err(value_err)?;
    Ok((out.mean.iter().copied().collect(), rows(&out.cov)))
}

#[pyfunction]
fn lyapunov(theta: Vec<f64>, v: Vec<f64>, beta: f64, gamma: f64, contraction_rate: f64, potential: f64) -> PyResult<f64> {
    if theta.len() != v.len() {
        return Err(PyValueError::new_err("theta and v differ in length"));
    }
    Ok(lyapunov_value(&theta, &v, beta, gamma, contraction_rate, potential))
}

#[pymodule]
#[pyo3(name = "kinetic_gibbs")]
fn kinetic_gibbs_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyProblemParams>()?;
    m.add_class::<PyConstantsReport>()?;
    m.add_class::<PyEnsembleRun>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(w2_gaussians, m)?)?;
    m.add_function(wrap_pyfunction!(w2_empirical, m)?)?;
    m.add_function(wrap_pyfunction!(ou_moments, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov, m)?)?;
    Ok(())
}
