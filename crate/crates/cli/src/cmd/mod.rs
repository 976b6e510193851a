pub mod blr;
pub mod constants;
pub mod optimize;
pub mod sample;
pub mod scaling;

use kinetic_gibbs::sampler::{EnsembleRun, SamplerError};

use crate::config::ConfigError;
use crate::CliError;

pub(crate) fn rejected(e: impl std::fmt::Display) -> CliError {
    CliError::Config(ConfigError::Rejected(e.to_string()))
}

/// Splits an ensemble result into the (possibly partial) run and the diverged chains.
pub(crate) fn run_or_partial(res: Result<EnsembleRun, SamplerError>) -> Result<(EnsembleRun, Vec<(u64, u64)>), CliError> {
    match res {
        Ok(run) => Ok((run, Vec::new())),
        Err(SamplerError::EnsembleDivergence { failed, partial }) => Ok((*partial, failed)),
        Err(e) => Err(rejected(e)),
    }
}

pub(crate) fn divergence(failed: &[(u64, u64)], total: usize) -> CliError {
    let (chain, iter) = failed[0];
    CliError::Divergence(format!("{} of {total} chains diverged (first: chain {chain} at iteration {iter})", failed.len()))
}
