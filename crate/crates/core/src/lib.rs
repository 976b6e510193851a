//! Stochastic gradient Hamiltonian Monte Carlo (SGHMC) with the machinery to
//! check its non-asymptotic guarantees numerically.
//!
//! - [`sampler`]: the SGHMC kernel, chain and ensemble runners, and exact
//!   references for quadratic potentials.
//! - [`models`]: potentials with stochastic gradients, and probes of their
//!   declared regularity constants.
//! - [`constants`]: closed-form evaluation of every explicit constant.
//! - [`wasserstein`]: Wasserstein-2 distances for Gaussians and empirical clouds.
//! - [`diagnostics`]: Lyapunov tracking and drift/moment inequality checks.

pub mod constants;
pub mod diagnostics;
pub mod models;
pub mod sampler;
pub mod stats;
pub mod wasserstein;

pub use constants::{ConstantsReport, ProblemParams};
pub use models::GradientModel;
pub use sampler::{ChainState, EnsembleRun, SamplerConfig};
pub use wasserstein::{EmpiricalCloud, GaussianMoments};
