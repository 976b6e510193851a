//! Lyapunov tracking and inequality checks on real sampler output.

use kinetic_gibbs::constants::{ConstantsReport, ProblemParams};
use kinetic_gibbs::diagnostics::{
    check_drift, check_flatness, check_moment_bounds, lyapunov_value, track_moments, vsq_bound, MomentBoundSet, MOMENT_SERIES_COLUMNS,
};
use kinetic_gibbs::models::{gaussian_location_model, DeclaredConstants, GradientModel, Quadratic};
use kinetic_gibbs::sampler::{exact_ou_moments, run_chain, run_ensemble, ChainState, EnsembleOptions, InitialDistribution, SamplerConfig};
use rand::Rng;

/// Zero potential.
struct Flat(usize);

impl GradientModel for Flat {
    type Data = ();
    fn dim(&self) -> usize {
        self.0
    }
    fn new_data(&self) {}
    fn sample_data<R: Rng + ?Sized>(&self, _rng: &mut R, _out: &mut ()) {}
    fn stochastic_gradient(&self, _theta: &[f64], _x: &(), out: &mut [f64]) {
        out.fill(0.0);
    }
    fn potential(&self, _theta: &[f64]) -> Option<f64> {
        Some(0.0)
    }
    fn declared(&self) -> DeclaredConstants {
        DeclaredConstants { l1: 0.0, l2: 0.0, rho: 0.0, a: 0.0, b: 0.0, big_h0: 0.0, h0: 0.0, u0: 0.0 }
    }
    fn data_vector(&self, _x: &()) -> Vec<f64> {
        Vec::new()
    }
}

fn snapshots() -> EnsembleOptions {
    EnsembleOptions { keep_snapshots: true }
}

#[test]
fn single_deterministic_chain_matches_hand_lyapunov() {
    let model = Quadratic::new(1.5, 2).unwrap();
    let (gamma, beta, lambda) = (2.0, 3.0, 0.2);
    let mut cfg = SamplerConfig::new(0.05, gamma, beta, 200, 1);
    cfg.noise_enabled = false;
    cfg.burn_in = 0;
    cfg.thin = 10;
    let start = ChainState::new(vec![1.0, -0.5], vec![0.3, 0.0]).unwrap();
    let chain = run_chain(&model, &cfg, &start).unwrap();
    let run = run_ensemble(&model, &cfg, 1, &InitialDistribution::PointMass(start), snapshots()).unwrap();
    let series = track_moments(&run, beta, gamma, lambda, &model).unwrap();
    assert_eq!(series.iters, chain.record_iters);
    for (i, s) in chain.trajectory.iter().enumerate() {
        // Written out from the definition rather than through lyapunov_value.
        let u = 0.75 * s.theta_sq();
        let mut quad = 0.0;
        for j in 0..2 {
            let w = s.v[j] / gamma;
            quad += (s.theta[j] + w).powi(2) + w * w - lambda * s.theta[j].powi(2);
        }
        let want = (beta * u + beta * gamma * gamma * quad / 4.0) / beta;
        assert!((series.m2[i] - want).abs() <= 1e-12 * want.abs().max(1.0), "record {i}");
        assert_eq!(series.th2[i], s.theta_sq());
        assert_eq!(series.m2_se[i], 0.0);
    }
}

#[test]
fn ballistic_motion_has_quadratic_second_moment() {
    let mut cfg = SamplerConfig::new(0.01, 0.0, 1.0, 500, 2);
    cfg.noise_enabled = false;
    cfg.burn_in = 0;
    cfg.thin = 50;
    let init = InitialDistribution::PointMass(ChainState::new(vec![1.0, 0.0], vec![0.5, 2.0]).unwrap());
    let run = run_ensemble(&Flat(2), &cfg, 3, &init, EnsembleOptions::default()).unwrap();
    for (k, stats) in run.record_iters.iter().zip(&run.theta_sq) {
        let t = *k as f64 * 0.01;
        let want = (1.0 + 0.5 * t).powi(2) + (2.0 * t).powi(2);
        assert!((stats.mean - want).abs() < 1e-10, "k={k}: {} vs {want}", stats.mean);
    }
}

#[test]
fn quadratic_ensemble_tracks_continuous_moments() {
    let (kappa, gamma, beta, eta) = (1.0, 2.0, 1.0, 1e-3);
    let mut cfg = SamplerConfig::new(eta, gamma, beta, 4000, 3);
    cfg.burn_in = 0;
    cfg.thin = 500;
    let start = ChainState::new(vec![2.0], vec![0.0]).unwrap();
    let init = InitialDistribution::PointMass(start);
    let run = run_ensemble(&Quadratic::new(kappa, 1).unwrap(), &cfg, 4000, &init, snapshots()).unwrap();
    let series = track_moments(&run, beta, gamma, 0.2, &Quadratic::new(kappa, 1).unwrap()).unwrap();
    for (i, &k) in series.iters.iter().enumerate() {
        let exact = exact_ou_moments(kappa, gamma, beta, k as f64 * eta, &init.moments()).unwrap();
        let th2 = exact.cov[(0, 0)] + exact.mean[0].powi(2);
        let v2 = exact.cov[(1, 1)] + exact.mean[1].powi(2);
        // Discretization bias is O(eta); allow it on top of four standard errors.
        assert!((series.th2[i] - th2).abs() <= 4.0 * series.th2_se[i] + 10.0 * eta, "k={k}: {} vs {th2}", series.th2[i]);
        assert!((series.v2[i] - v2).abs() <= 4.0 * series.v2_se[i] + 10.0 * eta, "k={k}: {} vs {v2}", series.v2[i]);
    }
}

/// `H(theta, x) = theta - x` with `x = 0`: within the reference regularity
/// constants (`L1 = 1`, `a = b = 1`, `|h(0)| <= 1`).
fn reference_compatible_run(steps: u64, chains: usize) -> (ConstantsReport, kinetic_gibbs::diagnostics::MomentSeries) {
    let p = ProblemParams::reference();
    let eta = 1e-6;
    let report = ConstantsReport::evaluate(&p, eta).unwrap();
    let model = gaussian_location_model(vec![0.0], 0.0).unwrap();
    let mut cfg = SamplerConfig::new(eta, p.gamma, p.beta, steps, 4);
    cfg.burn_in = 0;
    cfg.thin = 1;
    let init = InitialDistribution::Gaussian { mean: ChainState::zeros(1), sd_theta: 1.0, sd_v: 1.0 };
    let run = run_ensemble(&model, &cfg, chains, &init, snapshots()).unwrap();
    let series = track_moments(&run, p.beta, p.gamma, report.lambda, &model).unwrap();
    (report, series)
}

#[test]
fn drift_holds_on_a_reference_compatible_model() {
    let (report, series) = reference_compatible_run(10_000, 200);
    assert!((report.lambda - 0.2).abs() < 1e-15);
    let drift = check_drift(&series, report.params.gamma, report.lambda, report.eta, report.k.k3, 3.0).unwrap();
    assert_eq!(drift.residuals.len(), 10_000);
    assert!(drift.pass, "{} violations, {} allowed, worst z {}", drift.violations, drift.allowed, drift.worst_z);
}

#[test]
fn moment_bounds_hold_on_a_reference_compatible_model() {
    let (report, series) = reference_compatible_run(2_000, 100);
    let bounds = MomentBoundSet {
        c_theta: report.moments.theta,
        c_v: report.moments.v,
        c_zeta: report.moments.zeta,
        vsq: Some(vsq_bound(series.vsq[0] + 4.0 * series.vsq_se[0], report.drift.d_const, report.params.gamma, report.lambda)),
    };
    let checks = check_moment_bounds(&series, &bounds, 3.0);
    assert_eq!(checks.iter().map(|c| c.name).collect::<Vec<_>>(), ["C_theta", "C_v", "C_zeta", "Vsq"]);
    for c in &checks {
        assert!(c.pass, "{c:?}");
    }
    let sup = series.th2.iter().copied().fold(0.0, f64::max);
    assert!(sup <= report.moments.theta);
    assert!((report.moments.theta - 113.33).abs() < 0.01, "{}", report.moments.theta);
}

#[test]
fn flatness_after_burn_in() {
    let model = Quadratic::new(1.0, 2).unwrap();
    let mut cfg = SamplerConfig::new(0.05, 2.0, 1.0, 20_000, 5);
    cfg.burn_in = 2_000;
    let init = InitialDistribution::PointMass(ChainState::new(vec![3.0, -3.0], vec![0.0, 0.0]).unwrap());
    let run = run_ensemble(&model, &cfg, 64, &init, EnsembleOptions::default()).unwrap();
    let flat = check_flatness(&run, 4.0);
    assert!(flat.pass, "{flat:?}");
}

#[test]
fn lyapunov_is_finite_and_positive_along_a_run() {
    let model = Quadratic::new(1.0, 1).unwrap();
    let cfg = SamplerConfig::new(0.05, 2.0, 1.0, 1000, 6);
    let chain = run_chain(&model, &cfg, &ChainState::zeros(1)).unwrap();
    for s in &chain.trajectory {
        let v = lyapunov_value(&s.theta, &s.v, 1.0, 2.0, 0.2, model.potential(&s.theta).unwrap());
        assert!(v.is_finite() && v >= 0.0);
    }
}

#[test]
fn csv_has_the_documented_columns() {
    let model = Quadratic::new(1.0, 1).unwrap();
    let mut cfg = SamplerConfig::new(0.1, 2.0, 1.0, 20, 7);
    cfg.burn_in = 0;
    cfg.thin = 5;
    let run = run_ensemble(&model, &cfg, 8, &InitialDistribution::PointMass(ChainState::zeros(1)), snapshots()).unwrap();
    let series = track_moments(&run, 1.0, 2.0, 0.2, &model).unwrap();
    let mut buf = Vec::new();
    series.write_csv(&mut buf).unwrap();
    let mut rd = csv::Reader::from_reader(buf.as_slice());
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, MOMENT_SERIES_COLUMNS);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(&rows[2][0], "10");
    for row in &rows {
        for field in row {
            field.parse::<f64>().unwrap();
        }
    }
}

#[test]
fn tracking_requires_snapshots_and_potential() {
    let model = Quadratic::new(1.0, 1).unwrap();
    let cfg = SamplerConfig::new(0.1, 2.0, 1.0, 10, 8);
    let init = InitialDistribution::PointMass(ChainState::zeros(1));
    let run = run_ensemble(&model, &cfg, 2, &init, EnsembleOptions::default()).unwrap();
    assert!(track_moments(&run, 1.0, 2.0, 0.2, &model).is_err());
}
