//! Experiment configuration files.
//!
//! The file is line-oriented TOML: `key = value` pairs grouped under
//! sections. Missing keys keep their defaults; unknown keys are errors.
//!
//! ```text
//! [experiment]          methods, seeds, base_seed, axis, grid, workers
//! [toy]                 n, d, rho, gamma_sp, gamma_mt, b_sp, b_mt,
//!                       angle_deg, split_fraction, test_n, seed
//! [jse]                 alpha, delta (number or "auto"), max_dim, loop_order,
//!                       transform_mode, group_weighted_tests, estimate_mt_basis
//! [jse.optimizer]       learning_rate, weight_decay, momentum, batch_size,
//!                       max_epochs, early_stop_patience, seed,
//!                       balance_sampling, one_dim_solver
//! [inlp]                alpha, max_rounds, group_weighted
//! [inlp.optimizer]      as above
//! [rlace]               rank, max_iters, stop_accuracy, eval_every
//! [rlace.optimizer]     as above
//! [downstream]          optimizer keys for ERM, GW-ERM and the classifier
//!                       trained after removal
//! ```

use std::path::Path;

use toml::{Table, Value};

use crate::error::{Error, Result};
use crate::eval::ExperimentConfig;

const MODULE_SECTIONS: [&str; 4] = ["jse", "inlp", "rlace", "downstream"];

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses a configuration file on top of [`ExperimentConfig::default`].
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig> {
    parse_onto(text, &ExperimentConfig::default())
}

/// Parses a configuration file on top of `base`.
pub fn parse_onto(text: &str, base: &ExperimentConfig) -> Result<ExperimentConfig> {
    let user: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
    let mut tree = Table::try_from(base).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let mut rearranged = Table::new();
    let mut configs = Table::new();
    for (section, value) in user {
        let Value::Table(body) = value else {
            return Err(Error::InvalidConfig(format!(
                "'{section}' must be a section, found a bare key"
            )));
        };
        match section.as_str() {
            "experiment" => merge(&mut rearranged, body),
            "toy" => {
                rearranged.insert(section, Value::Table(body));
            }
            s if MODULE_SECTIONS.contains(&s) => {
                configs.insert(section, Value::Table(body));
            }
            other => return Err(Error::InvalidConfig(format!("unknown section [{other}]"))),
        }
    }
    if !configs.is_empty() {
        rearranged.insert("configs".into(), Value::Table(configs));
    }
    merge(&mut tree, rearranged);
    let cfg: ExperimentConfig = Value::Table(tree)
        .try_into()
        .map_err(|e: toml::de::Error| Error::InvalidConfig(e.to_string()))?;
    Ok(cfg)
}

pub fn load_experiment_config(path: &Path) -> Result<ExperimentConfig> {
    parse_experiment_config(&std::fs::read_to_string(path)?)
}
