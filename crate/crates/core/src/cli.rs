//! Command-line front end behind the `mkv` binary.
//!
//! Exit codes: 0 on success, 1 on usage or input errors, 2 on numerical
//! failures or violated model assumptions.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::catalog::builtin_model;
use crate::config::parse_config;
use crate::contrast::{minimize_contrast, EstimateOptions, Method};
use crate::error::{Error, Result};
use crate::inference::{estimate_sigma, identifiability_functionals, noninteraction_test, standard_errors};
use crate::model::{InteractionModel, ParamBox, ThetaVector};
use crate::montecarlo::{rejection_rate_table, rmse_bias_table, run_replications, table1, table2, table3, TABLE2_THETA12};
use crate::panel::{ObservationGrid, TrajectoryPanel};
use crate::simulate::{simulate_panel, InitialLaw, SimConfig};

/// Environment variable supplying the default `--seed`.
pub const SEED_ENV: &str = "MKV_SEED";

#[derive(Debug, Parser)]
#[command(name = "mkv", version, about = "Simulate and estimate McKean–Vlasov particle systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a particle panel with the Euler scheme.
    Simulate(SimulateArgs),
    /// Estimate drift and diffusion parameters from a panel.
    Estimate(EstimateArgs),
    /// Test for absence of interaction in a linear-model panel.
    Test(TestArgs),
    /// Monte Carlo tables.
    Mc {
        #[command(subcommand)]
        table: McCommand,
    },
    /// Diagnostics.
    Diagnose {
        #[command(subcommand)]
        what: DiagnoseCommand,
    },
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub model: String,
    /// Comma-separated parameter, drift components first.
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    #[arg(long = "N")]
    pub n: usize,
    #[arg(long = "T")]
    pub t: f64,
    #[arg(long)]
    pub dt_obs: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt_euler: f64,
    /// `dirac:x`, `gaussian:mean,sd` or `uniform:lo,hi`.
    #[arg(long, default_value = "dirac:1", allow_hyphen_values = true)]
    pub mu0: String,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file; `.mkvp` selects the binary format. CSV to stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: String,
    /// Panel file (CSV or MKVP).
    #[arg(long)]
    pub panel: PathBuf,
    /// Bounds `lo..hi`, one per component in parameter order. Defaults to the model's box.
    #[arg(long = "box", allow_hyphen_values = true)]
    pub bounds: Vec<String>,
    #[arg(long, default_value_t = 8)]
    pub starts: usize,
    /// Skip closed-form and profiled shortcuts.
    #[arg(long)]
    pub numeric: bool,
    /// Also report plug-in standard errors.
    #[arg(long)]
    pub se: bool,
    /// Output JSON file; stdout otherwise.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McArgs {
    #[arg(long, default_value_t = 1000)]
    pub replications: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to available parallelism.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum McCommand {
    /// RMSE and bias for the linear model.
    Table1(McArgs),
    /// Rejection rates of the non-interaction test.
    Table2 {
        #[command(flatten)]
        common: McArgs,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// RMSE and bias for the smooth opinion model.
    Table3(McArgs),
    /// RMSE and bias for the experiment described in a JSON config.
    Config {
        path: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum DiagnoseCommand {
    /// Riemann-sum estimates of the identifiability functionals I(θ) and J(θ₂).
    Ij(IjArgs),
}

#[derive(Debug, Args)]
pub struct IjArgs {
    #[arg(long)]
    pub model: String,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: String,
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: String,
    #[arg(long = "N", default_value_t = 1000)]
    pub n: usize,
    #[arg(long = "T", default_value_t = 1.0)]
    pub t: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt_obs: f64,
    #[arg(long, default_value_t = 0.01)]
    pub dt_euler: f64,
    #[arg(long, default_value = "dirac:1", allow_hyphen_values = true)]
    pub mu0: String,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Exit code for a library error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Dimension { .. }
        | Error::ParticleIndex { .. }
        | Error::UnknownModel(_)
        | Error::InvalidArgument(_)
        | Error::Config(_)
        | Error::Format(_)
        | Error::Io(_)
        | Error::Json(_) => 1,
        _ => 2,
    }
}

/// `--seed`, else `$MKV_SEED`, else 0.
pub fn resolve_seed(explicit: Option<u64>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(0),
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("`{t}` is not a number in `{s}`")))
        })
        .collect()
}

fn parse_theta(model: &dyn InteractionModel, s: &str) -> Result<ThetaVector> {
    let theta = ThetaVector::from_flat(&parse_list(s)?, model.p1())?;
    theta.check_dims(model)?;
    Ok(theta)
}

/// Parses `lo..hi` bounds, one per component.
pub fn parse_box(specs: &[String]) -> Result<ParamBox> {
    let mut lower = Vec::with_capacity(specs.len());
    let mut upper = Vec::with_capacity(specs.len());
    for s in specs {
        let (lo, hi) = s
            .split_once("..")
            .ok_or_else(|| Error::InvalidArgument(format!("bound `{s}` is not of the form lo..hi")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("bound `{s}` is not of the form lo..hi")))
        };
        lower.push(parse(lo)?);
        upper.push(parse(hi)?);
    }
    ParamBox::new(lower, upper)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

#[derive(Debug, Serialize)]
struct EstimateOutput {
    model: String,
    theta_hat: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    se: Option<Vec<f64>>,
    contrast: f64,
    method: Method,
    converged: bool,
    on_boundary: bool,
    iterations: usize,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let model = builtin_model(&a.model)?;
    let theta = parse_theta(model.as_ref(), &a.theta)?;
    let seed = resolve_seed(a.seed)?;
    let mu0: InitialLaw = a.mu0.parse()?;
    let cfg = SimConfig::new(a.n, a.t, a.dt_euler, seed, mu0);
    let grid = ObservationGrid::from_horizon(a.t, a.dt_obs)?;
    let panel = simulate_panel(model.as_ref(), &theta, &cfg, &grid)?;
    match &a.out {
        Some(p) if p.extension().is_some_and(|e| e == "mkvp") => panel.write_mkvp(p),
        Some(p) => panel.write_csv(p),
        None => emit(None, &panel.to_csv_string()),
    }
}

fn estimate(a: &EstimateArgs) -> Result<()> {
    let model = builtin_model(&a.model)?;
    let panel = TrajectoryPanel::load(&a.panel)?;
    let bounds = if a.bounds.is_empty() {
        model
            .default_box()
            .ok_or_else(|| Error::InvalidArgument(format!("model `{}` needs --box", a.model)))?
    } else {
        parse_box(&a.bounds)?
    };
    let opts = EstimateOptions {
        starts: a.starts,
        force_numeric: a.numeric,
        ..Default::default()
    };
    let est = minimize_contrast(model.as_ref(), &panel, &bounds, &opts)?;
    if est.on_boundary {
        eprintln!("warning: estimate lies on the boundary of the box");
    }
    let se = if a.se {
        let sig = estimate_sigma(model.as_ref(), &est.theta_hat, &panel)?;
        Some(standard_errors(&sig, panel.n_particles(), panel.delta_n())?)
    } else {
        None
    };
    emit_json(
        a.out.as_deref(),
        &EstimateOutput {
            model: a.model.clone(),
            theta_hat: est.theta_hat.to_flat(),
            se,
            contrast: est.contrast_at_opt,
            method: est.method,
            converged: est.converged,
            on_boundary: est.on_boundary,
            iterations: est.iterations,
        },
    )
}

fn mc(cmd: &McCommand) -> Result<()> {
    match cmd {
        McCommand::Table1(a) | McCommand::Table3(a) => {
            let seed = resolve_seed(a.seed)?;
            let mut cfg = if matches!(cmd, McCommand::Table1(_)) {
                table1(a.replications, seed)
            } else {
                table3(a.replications, seed)
            };
            cfg.workers = a.workers;
            let report = rmse_bias_table(&run_replications(&cfg)?, &cfg.theta_true)?;
            emit(a.out.as_deref(), &report.to_csv())
        }
        McCommand::Table2 { common, alpha } => {
            let mut cfg = table2(common.replications, resolve_seed(common.seed)?);
            cfg.workers = common.workers;
            let report = rejection_rate_table(&cfg, &TABLE2_THETA12, *alpha)?;
            emit(common.out.as_deref(), &report.to_csv())
        }
        McCommand::Config { path, out } => {
            let cfg = parse_config(path)?.to_mc_config()?;
            let report = rmse_bias_table(&run_replications(&cfg)?, &cfg.theta_true)?;
            emit(out.as_deref(), &report.to_csv())
        }
    }
}

fn diagnose_ij(a: &IjArgs) -> Result<()> {
    let model = builtin_model(&a.model)?;
    let theta = parse_theta(model.as_ref(), &a.theta)?;
    let theta0 = parse_theta(model.as_ref(), &a.theta0)?;
    let cfg = SimConfig::new(a.n, a.t, a.dt_euler, resolve_seed(a.seed)?, a.mu0.parse()?);
    let grid = ObservationGrid::from_horizon(a.t, a.dt_obs)?;
    let r = identifiability_functionals(model.as_ref(), &theta, &theta0, &cfg, grid)?;
    emit_json(None, &r)
}

/// Runs a parsed command.
pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Estimate(a) => estimate(a),
        Command::Test(a) => {
            let panel = TrajectoryPanel::load(&a.panel)?;
            emit_json(a.out.as_deref(), &noninteraction_test(&panel, a.alpha)?)
        }
        Command::Mc { table } => mc(table),
        Command::Diagnose {
            what: DiagnoseCommand::Ij(a),
        } => diagnose_ij(a),
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_boxes() {
        assert_eq!(parse_list("0.5, -1,2e-3").unwrap(), vec![0.5, -1.0, 0.002]);
        assert!(parse_list("1,,2").is_err());
        let b = parse_box(&["-5..5".into(), "1e-6..100".into()]).unwrap();
        assert_eq!(b.lower(), &[-5.0, 1e-6]);
        assert_eq!(b.upper(), &[5.0, 100.0]);
        assert!(parse_box(&["1..0".into()]).is_err());
        assert!(parse_box(&["3".into()]).is_err());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(main_with_args(["mkv", "frobnicate"]), 1);
        assert_eq!(main_with_args(["mkv", "--version"]), 0);
        assert_eq!(exit_code(&Error::Degenerate("x".into())), 2);
        assert_eq!(exit_code(&Error::UnknownModel("x".into())), 1);
    }
}
