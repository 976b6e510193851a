//! Ensemble throughput on the 1-d quadratic, in chain-steps per second.
use std::time::Instant;

use kinetic_gibbs::models::Quadratic;
use kinetic_gibbs::sampler::{run_ensemble, ChainState, EnsembleOptions, InitialDistribution};
use kinetic_gibbs::SamplerConfig;

fn main() {
    let model = Quadratic::new(1.0, 1).unwrap();
    let init = InitialDistribution::PointMass(ChainState::zeros(1));
    let (chains, steps) = (2000usize, 5000u64);
    let cfg = SamplerConfig::new(0.05, 2.0, 1.0, steps, 7);
    let t = Instant::now();
    run_ensemble(&model, &cfg, chains, &init, EnsembleOptions::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    println!("{:.3e} chain-steps/s", chains as f64 * steps as f64 / secs);
}
