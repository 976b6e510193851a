//! CSV writers shared by the subcommands.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::Context;
use kinetic_gibbs::sampler::ChainState;

use crate::config::Config;
use crate::CliError;

pub const SUMMARY_COLUMNS: [&str; 2] = ["name", "value"];

/// `out_dir`, created if missing.
pub fn out_dir(cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(cfg.str("out_dir").unwrap_or("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| CliError::Io(anyhow::Error::new(e).context(format!("writing {}", path.display())))
}

/// Writes `(name, value)` rows.
pub fn write_summary(path: &Path, rows: &[(String, f64)]) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(create(path)?);
    wr.write_record(SUMMARY_COLUMNS).map_err(csv_err(path))?;
    for (k, v) in rows {
        wr.write_record([k.clone(), v.to_string()]).map_err(csv_err(path))?;
    }
    wr.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn terminal_header(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("theta_{j}")).chain((1..=d).map(|j| format!("v_{j}"))).collect()
}

/// One row per chain: `theta_1..theta_d, v_1..v_d`.
pub fn write_terminal(path: &Path, d: usize, states: &[ChainState]) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(create(path)?);
    wr.write_record(terminal_header(d)).map_err(csv_err(path))?;
    for s in states {
        wr.write_record(s.joint().iter().map(f64::to_string)).map_err(csv_err(path))?;
    }
    wr.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes rows of numbers; `None` becomes an empty field.
pub fn write_table(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<Option<f64>>>) -> Result<(), CliError> {
    let mut wr = csv::Writer::from_writer(create(path)?);
    wr.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        wr.write_record(row.iter().map(|v| v.map_or_else(String::new, |x| x.to_string()))).map_err(csv_err(path))?;
    }
    wr.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn bool_value(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}
