//! Runs a small Monte Carlo experiment described by a JSON configuration.
//!
//! cargo run --example config_experiment [config.json]

use mkv::config::{parse_config, ExperimentConfig};
use mkv::montecarlo::{rmse_bias_table, run_replications};

const DEFAULT: &str = r#"{
  "schema_version": 1,
  "model": "meanfield_ou",
  "N": 40,
  "T": 10,
  "delta_n": 0.05,
  "theta": [0.5, 1.0, 2.0, 0.5, 0.2],
  "mu0": "gaussian:0,1",
  "replications": 10,
  "seed": 5,
  "cells": [
    {"N": 40, "T": 10, "delta_n": 0.05},
    {"N": 80, "T": 10, "delta_n": 0.05}
  ]
}"#;

fn main() -> mkv::Result<()> {
    let cfg = match std::env::args().nth(1) {
        Some(path) => parse_config(path)?,
        None => ExperimentConfig::from_json(DEFAULT)?,
    };
    let mc = cfg.to_mc_config()?;
    let report = rmse_bias_table(&run_replications(&mc)?, &mc.theta_true)?;
    print!("{}", report.to_csv());
    Ok(())
}
