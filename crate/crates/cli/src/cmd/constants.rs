use kinetic_gibbs::constants::{eta_max, ConstantsReport};

use super::rejected;
use crate::config::{Config, ConfigError};
use crate::output::{create, out_dir};
use crate::setup::{build_model, problem_params_from, MODEL_KEYS, OUTPUT_KEYS, PARAM_KEYS};
use crate::CliError;

pub const CONSTANTS_FILE: &str = "constants.csv";
pub const CONSTANTS_COLUMNS: [&str; 4] = ["name", "value", "log10_value", "formula_ref"];

pub fn cmd_constants(cfg: &Config) -> Result<ConstantsReport, CliError> {
    cfg.check_keys("constants", &[PARAM_KEYS, MODEL_KEYS, OUTPUT_KEYS, &["eta"]])?;
    if !cfg.contains("params") {
        return Err(ConfigError::Missing("params".into()).into());
    }
    let model = if cfg.str("params") == Some("model") { Some(build_model(cfg)?) } else { None };
    let p = problem_params_from(cfg, model.as_ref(), None)?.expect("params key present");
    let eta = match cfg.get("eta")? {
        Some(e) => e,
        None => eta_max(&p).map_err(rejected)?.value.min(1.0),
    };
    let report = ConstantsReport::evaluate(&p, eta).map_err(rejected)?;
    let path = out_dir(cfg)?.join(CONSTANTS_FILE);
    report
        .write_csv(create(&path)?)
        .map_err(|e| CliError::Io(anyhow::Error::new(e).context(format!("writing {}", path.display()))))?;
    println!("eta_max = {:e}", report.eta_max.value);
    println!("gibbs_gap = {}", report.gibbs_gap);
    Ok(report)
}
