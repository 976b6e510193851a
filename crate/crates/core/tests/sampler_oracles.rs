//! The SGHMC kernel and runners against exact and brute-force references.

use kinetic_gibbs::diagnostics::batch_means_se;
use kinetic_gibbs::models::{mixture_prior_model, DeclaredConstants, GradientModel, Quadratic};
use kinetic_gibbs::sampler::{
    chain_rng, exact_ou_moments, run_chain, run_ensemble, sample_extended_quadratic, sghmc_step, ChainState,
    EnsembleOptions, InitialDistribution, SamplerConfig, SamplerError, NOISE_STREAM,
};
use kinetic_gibbs::stats::RunningStats;
use kinetic_gibbs::wasserstein::{fit_gaussian, GaussianMoments};
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

mod support;
use support::brute_force_moments;

/// `U = 0`: the stochastic gradient vanishes identically.
struct Flat(usize);

impl GradientModel for Flat {
    type Data = ();
    fn dim(&self) -> usize {
        self.0
    }
    fn new_data(&self) {}
    fn sample_data<R: Rng + ?Sized>(&self, _: &mut R, _: &mut ()) {}
    fn stochastic_gradient(&self, _: &[f64], _: &(), out: &mut [f64]) {
        out.fill(0.0);
    }
    fn declared(&self) -> DeclaredConstants {
        DeclaredConstants { l1: 0.0, l2: 0.0, rho: 0.0, a: 0.0, b: 0.0, big_h0: 0.0, h0: 0.0, u0: 0.0 }
    }
    fn data_vector(&self, _: &()) -> Vec<f64> {
        Vec::new()
    }
}

fn pair(mean: [f64; 2], cov: [[f64; 2]; 2]) -> GaussianMoments {
    GaussianMoments::new(DVector::from_row_slice(&mean), DMatrix::from_row_slice(2, 2, &[cov[0][0], cov[0][1], cov[1][0], cov[1][1]])).unwrap()
}

#[test]
fn ou_moments_match_brute_force_integration() {
    let starts = [([1.0, 0.0], [[0.0, 0.0], [0.0, 0.0]]), ([-0.5, 2.0], [[0.3, 0.1], [0.1, 0.2]])];
    // Underdamped, critically damped, overdamped.
    for (kappa, gamma, beta) in [(1.0, 2.0, 1.0), (1.0, 0.5, 2.0), (0.5, 3.0, 0.7), (4.0, 4.0, 1.0)] {
        for (mean, cov) in starts {
            for t in [0.1, 0.5, 2.0] {
                let exact = exact_ou_moments(kappa, gamma, beta, t, &pair(mean, cov)).unwrap();
                let (m, s) = brute_force_moments(
                    kappa,
                    gamma,
                    beta,
                    t,
                    Vector2::from(mean),
                    Matrix2::new(cov[0][0], cov[0][1], cov[1][0], cov[1][1]),
                    1e-5,
                );
                for i in 0..2 {
                    assert!((exact.mean[i] - m[i]).abs() < 1e-8, "mean {i}: {} vs {}", exact.mean[i], m[i]);
                    for j in 0..2 {
                        assert!((exact.cov[(i, j)] - s[(i, j)]).abs() < 1e-8, "cov {i}{j}: {} vs {}", exact.cov[(i, j)], s[(i, j)]);
                    }
                }
            }
        }
    }
}

#[test]
fn ou_moments_endpoints() {
    let start = pair([1.0, -2.0], [[0.5, 0.1], [0.1, 0.3]]);
    let same = exact_ou_moments(1.0, 2.0, 1.0, 0.0, &start).unwrap();
    assert!((same.mean.clone() - start.mean.clone()).amax() < 1e-15);
    assert!((same.cov.clone() - start.cov.clone()).amax() < 1e-15);
    let late = exact_ou_moments(1.0, 2.0, 1.0, 100.0, &start).unwrap();
    assert!(late.mean.amax() < 1e-6);
    assert!((late.cov - DMatrix::identity(2, 2)).amax() < 1e-6);
}

#[test]
fn ensemble_tracks_ou_moments() {
    let model = Quadratic::new(1.0, 1).unwrap();
    let init = InitialDistribution::PointMass(ChainState::new(vec![1.0], vec![0.0]).unwrap());
    let eta = 0.01;
    let cfg = SamplerConfig { burn_in: 0, thin: 10, ..SamplerConfig::new(eta, 2.0, 1.0, 200, 11) };
    let run = run_ensemble(&model, &cfg, 200, &init, EnsembleOptions::default()).unwrap();
    for (i, &k) in run.record_iters.iter().enumerate().skip(1) {
        let exact = exact_ou_moments(1.0, 2.0, 1.0, k as f64 * eta, &init.moments()).unwrap();
        let th = exact.cov[(0, 0)] + exact.mean[0].powi(2);
        let vv = exact.cov[(1, 1)] + exact.mean[1].powi(2);
        let (st, sv) = (&run.theta_sq[i], &run.v_sq[i]);
        assert!((st.mean - th).abs() <= 4.0 * st.se(), "k={k}: theta^2 {} vs {th} (se {})", st.mean, st.se());
        assert!((sv.mean - vv).abs() <= 4.0 * sv.se(), "k={k}: v^2 {} vs {vv} (se {})", sv.mean, sv.se());
    }
}

/// Exact stationary covariance of the linear recursion for `U = kappa theta^2/2`,
/// found by iterating `S <- B S B^T + Q` to its fixed point.
fn discrete_stationary_cov(kappa: f64, gamma: f64, beta: f64, eta: f64) -> Matrix2<f64> {
    let b = Matrix2::new(1.0, eta, -eta * kappa, 1.0 - eta * gamma);
    let q = Matrix2::new(0.0, 0.0, 0.0, 2.0 * gamma * eta / beta);
    let mut s = Matrix2::identity();
    for _ in 0..2_000_000 {
        let next = b * s * b.transpose() + q;
        if (next - s).amax() < 1e-15 {
            return next;
        }
        s = next;
    }
    s
}

/// Cross-chain stats of each chain's post-burn-in time average of `theta^2`.
fn per_chain_theta_sq(eta: f64, horizon: f64, chains: u64, seed: u64) -> RunningStats {
    let model = Quadratic::new(1.0, 1).unwrap();
    let steps = (horizon / eta).round() as u64;
    let mut stats = RunningStats::default();
    for c in 0..chains {
        let cfg = SamplerConfig { chain_id: c, burn_in: steps / 10, thin: 1, ..SamplerConfig::new(eta, 2.0, 1.0, steps, seed) };
        stats.push(run_chain(&model, &cfg, &ChainState::zeros(1)).unwrap().theta_sq_mean);
    }
    stats
}

#[test]
fn stationary_bias_shrinks_when_step_halves() {
    let (coarse, fine) = (per_chain_theta_sq(0.2, 2000.0, 128, 5), per_chain_theta_sq(0.1, 2000.0, 128, 6));
    for (eta, s) in [(0.2, &coarse), (0.1, &fine)] {
        let exact = discrete_stationary_cov(1.0, 2.0, 1.0, eta)[(0, 0)];
        assert!((s.mean - exact).abs() <= 4.0 * s.se(), "eta={eta}: {} vs discrete stationary {exact}", s.mean);
    }
    let (b_coarse, b_fine) = ((coarse.mean - 1.0).abs(), (fine.mean - 1.0).abs());
    let mc = (coarse.se().powi(2) * 0.75f64.powi(2) + fine.se().powi(2)).sqrt();
    assert!(b_fine <= 0.75 * b_coarse + 2.0 * mc, "bias {b_fine} at half step vs {b_coarse}");
}

#[test]
fn single_long_chain_has_unit_stationary_variance() {
    let model = Quadratic::new(1.0, 1).unwrap();
    let cfg = SamplerConfig { burn_in: 10_000, thin: 1, ..SamplerConfig::new(0.01, 2.0, 1.0, 100_000, 3) };
    let run = run_chain(&model, &cfg, &ChainState::zeros(1)).unwrap();
    let th: Vec<f64> = run.trajectory.iter().map(|s| s.theta[0]).collect();
    let mean = th.iter().sum::<f64>() / th.len() as f64;
    let sq: Vec<f64> = th.iter().map(|t| (t - mean).powi(2)).collect();
    let var = sq.iter().sum::<f64>() / sq.len() as f64;
    let se = batch_means_se(&sq, 30);
    assert!((var - 1.0).abs() <= 3.0 * se, "variance {var} (se {se})");
}

#[test]
fn noise_has_the_fluctuation_dissipation_scale() {
    // eta gamma = 1 wipes the old momentum, so v' is pure injected noise.
    let (eta, gamma, beta) = (0.25, 4.0, 0.5);
    let cfg = SamplerConfig { burn_in: 0, thin: 1, ..SamplerConfig::new(eta, gamma, beta, 1, 21) };
    let run = run_ensemble(&Flat(1), &cfg, 100_000, &InitialDistribution::PointMass(ChainState::new(vec![0.0], vec![3.0]).unwrap()), EnsembleOptions::default()).unwrap();
    let v = &run.v_sq[1];
    let want = 2.0 * gamma * eta / beta;
    assert!((v.mean - want).abs() <= 4.0 * v.se(), "Var v' = {} vs {want}", v.mean);
}

#[test]
fn runs_are_deterministic_across_thread_counts() {
    let model = mixture_prior_model(vec![1.5, -0.5]).unwrap();
    let init = InitialDistribution::Gaussian { mean: ChainState::zeros(2), sd_theta: 1.0, sd_v: 1.0 };
    let cfg = SamplerConfig::new(0.05, 2.0, 1.0, 500, 99);
    let run_in = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_ensemble(&model, &cfg, 300, &init, EnsembleOptions { keep_snapshots: true }).unwrap())
    };
    let (one, four) = (run_in(1), run_in(4));
    assert_eq!(one, four);
    let c = run_chain(&model, &cfg, &ChainState::zeros(2)).unwrap();
    assert_eq!(c, run_chain(&model, &cfg, &ChainState::zeros(2)).unwrap());
}

#[test]
fn one_chain_ensemble_is_run_chain() {
    let model = mixture_prior_model(vec![1.0]).unwrap();
    let start = ChainState::new(vec![0.3], vec![-0.2]).unwrap();
    let cfg = SamplerConfig { chain_id: 7, ..SamplerConfig::new(0.05, 2.0, 1.0, 2_000, 4) };
    let single = run_chain(&model, &cfg, &start).unwrap();
    let ens = run_ensemble(&model, &cfg, 1, &InitialDistribution::PointMass(start), EnsembleOptions { keep_snapshots: true }).unwrap();
    assert_eq!(ens.terminal, vec![single.final_state.clone()]);
    assert_eq!(ens.record_iters, single.record_iters);
    for (i, s) in single.trajectory.iter().enumerate() {
        assert_eq!(ens.theta_sq[i].mean, s.theta_sq());
        assert_eq!(ens.v_sq[i].mean, s.v_sq());
        let (t, v) = ens.snapshots.as_ref().unwrap().state(0, i);
        assert_eq!((t, v), (&s.theta[..], &s.v[..]));
    }
}

#[test]
fn chains_get_distinct_independent_noise() {
    let draws = |chain| {
        let mut r = chain_rng(5, chain, NOISE_STREAM);
        (0..100_000).map(|_| r.sample::<f64, _>(StandardNormal)).collect::<Vec<f64>>()
    };
    let (a, b) = (draws(0), draws(1));
    assert!(a[..100].iter().zip(&b[..100]).any(|(x, y)| x != y));
    let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / a.len() as f64;
    assert!(corr.abs() < 4.0 / (a.len() as f64).sqrt(), "cross-stream correlation {corr}");
}

#[test]
fn zero_steps_keeps_initial_state() {
    let start = ChainState::new(vec![0.4], vec![1.1]).unwrap();
    let cfg = SamplerConfig::new(0.1, 1.0, 1.0, 0, 0);
    let run = run_chain(&Quadratic::new(1.0, 1).unwrap(), &cfg, &start).unwrap();
    assert_eq!(run.trajectory, vec![start.clone()]);
    assert_eq!(run.theta_sq_mean, 0.16000000000000003);
    assert_eq!(run.final_state, start);
}

#[test]
fn ballistic_chain_moves_linearly() {
    let cfg = SamplerConfig { gamma: 0.0, noise_enabled: false, ..SamplerConfig::new(0.1, 1.0, 1.0, 10, 0) };
    let run = run_chain(&Flat(1), &cfg, &ChainState::new(vec![0.0], vec![1.0]).unwrap()).unwrap();
    assert!((run.final_state.theta[0] - 1.0).abs() < 1e-15);
    assert!(SamplerConfig { gamma: 0.0, ..SamplerConfig::new(0.1, 1.0, 1.0, 10, 0) }.validate().is_err());
}

#[test]
fn divergence_names_the_iteration() {
    let model = Quadratic::new(1.0, 1).unwrap();
    // eta^2 kappa = 25 far beyond stability: the linear map blows up geometrically.
    let cfg = SamplerConfig { noise_enabled: false, ..SamplerConfig::new(5.0, 1.0, 1.0, 1000, 0) };
    let err = run_chain(&model, &cfg, &ChainState::new(vec![1.0], vec![0.0]).unwrap()).unwrap_err();
    let SamplerError::Divergence { iteration, .. } = err else { panic!("{err:?}") };
    assert!(iteration > 1 && iteration < 1000);
    let init = InitialDistribution::PointMass(ChainState::new(vec![1.0], vec![0.0]).unwrap());
    match run_ensemble(&model, &cfg, 3, &init, EnsembleOptions::default()).unwrap_err() {
        SamplerError::EnsembleDivergence { failed, partial } => {
            assert_eq!(failed.iter().map(|f| f.0).collect::<Vec<_>>(), vec![0, 1, 2]);
            assert_eq!(partial.n_chains, 0);
        }
        e => panic!("{e:?}"),
    }
}

#[test]
fn eta_above_certified_maximum_only_warns() {
    let cfg = SamplerConfig { eta_max: Some(7.5e-6), ..SamplerConfig::new(0.01, 2.0, 1.0, 10, 0) };
    let run = run_chain(&Quadratic::new(1.0, 1).unwrap(), &cfg, &ChainState::zeros(1)).unwrap();
    assert_eq!(run.warnings.len(), 1);
}

#[test]
fn extended_target_draws() {
    let (kappa, beta, n) = (2.0, 4.0, 100_000);
    let cloud = sample_extended_quadratic(kappa, beta, 1, n, 17).unwrap();
    assert_eq!(cloud, sample_extended_quadratic(kappa, beta, 1, n, 17).unwrap());
    let g = fit_gaussian(&cloud);
    let nf = n as f64;
    assert!(g.mean[0].abs() < 4.0 / (nf * beta * kappa).sqrt());
    assert!(g.mean[1].abs() < 4.0 / (nf * beta).sqrt());
    let (vt, vv) = (g.cov[(0, 0)], g.cov[(1, 1)]);
    // Var of a sample variance of a Gaussian is 2 s^4 / n.
    assert!((vt - 0.125).abs() < 4.0 * 0.125 * (2.0 / nf).sqrt(), "var theta {vt}");
    assert!((vv - 0.25).abs() < 4.0 * 0.25 * (2.0 / nf).sqrt(), "var v {vv}");
    let corr = g.cov[(0, 1)] / (vt * vv).sqrt();
    assert!(corr.abs() < 4.0 / nf.sqrt());
}

#[test]
fn moments_stay_flat_after_burn_in() {
    let cfg = SamplerConfig { thin: 20, ..SamplerConfig::new(0.05, 2.0, 1.0, 40_000, 8) };
    let init = InitialDistribution::PointMass(ChainState::zeros(1));
    let quad = run_ensemble(&Quadratic::new(1.0, 1).unwrap(), &cfg, 256, &init, EnsembleOptions::default()).unwrap();
    let mix = run_ensemble(&mixture_prior_model(vec![2.0]).unwrap(), &cfg, 256, &init, EnsembleOptions::default()).unwrap();
    for run in [&quad, &mix] {
        let q = &run.quarters;
        for g in [&q.theta_sq_growth, &q.v_sq_growth] {
            assert!(g.mean <= 2.0 * g.se(), "growth {} (se {})", g.mean, g.se());
        }
        assert!(run.theta_sq.iter().chain(&run.v_sq).all(|s| s.mean.is_finite()));
    }
}

proptest! {
    #[test]
    fn position_moves_with_the_old_momentum(
        theta in prop::collection::vec(-1e3f64..1e3, 1..5),
        seed in any::<u64>(),
        eta in 1e-6f64..1.0,
        gamma in 1e-3f64..10.0,
        beta in 1e-2f64..10.0,
    ) {
        let d = theta.len();
        let mut rng = chain_rng(seed, 0, 0);
        let v: Vec<f64> = (0..d).map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let g: Vec<f64> = (0..d).map(|_| 10.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let xi: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let state = ChainState::new(theta.clone(), v.clone()).unwrap();
        let cfg = SamplerConfig::new(eta, gamma, beta, 1, 0);
        let next = sghmc_step(&state, &g, &xi, &cfg).unwrap();
        let scale = (2.0 * gamma * eta / beta).sqrt();
        for i in 0..d {
            prop_assert_eq!(next.theta[i], theta[i] + eta * v[i]);
            prop_assert_eq!(next.v[i], v[i] - eta * (gamma * v[i] + g[i]) + scale * xi[i]);
        }
    }
}
