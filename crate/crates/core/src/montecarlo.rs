//! Replication harness: RMSE/bias tables, rejection rates and normality checks.
//!
//! Replication `r` of every cell is simulated with seed `base_seed + r`, so
//! cells share their Brownian paths and results do not depend on the number
//! of workers.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::catalog::builtin_model;
use crate::contrast::{minimize_contrast, EstimateOptions};
use crate::error::{Error, Result};
use crate::inference::{noninteraction_test, normal_cdf, standard_errors, SigmaEstimate};
use crate::model::{InteractionModel, ParamBox, ThetaVector};
use crate::panel::{ObservationGrid, TrajectoryPanel};
use crate::simulate::{simulate_panel, InitialLaw, SimConfig};

/// One `(N, T, Δ)` design point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(rename = "N")]
    pub n_particles: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub delta_n: f64,
}

impl Cell {
    pub fn new(n_particles: usize, horizon: f64, delta_n: f64) -> Self {
        Self {
            n_particles,
            horizon,
            delta_n,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MCConfig {
    pub replications: usize,
    pub base_seed: u64,
    pub model: String,
    pub theta_true: ThetaVector,
    pub euler_step: f64,
    pub mu0: InitialLaw,
    pub cells: Vec<Cell>,
    /// Estimation box; the model's default box when absent.
    pub bounds: Option<ParamBox>,
    pub starts: usize,
    /// Worker threads; 0 means available parallelism.
    pub workers: usize,
}

impl MCConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be >= 1".into()));
        }
        if self.cells.is_empty() {
            return Err(Error::InvalidArgument("no cells to run".into()));
        }
        self.mu0.validate()
    }

    pub fn seed(&self, replication: usize) -> u64 {
        self.base_seed.wrapping_add(replication as u64)
    }

    fn sim_config(&self, cell: &Cell, replication: usize) -> SimConfig {
        SimConfig::new(
            cell.n_particles,
            cell.horizon,
            self.euler_step,
            self.seed(replication),
            self.mu0,
        )
    }

    fn estimate_options(&self) -> EstimateOptions {
        EstimateOptions {
            starts: self.starts,
            ..Default::default()
        }
    }

    fn resolve_bounds(&self, model: &dyn InteractionModel) -> Result<ParamBox> {
        self.bounds
            .clone()
            .or_else(|| model.default_box())
            .ok_or_else(|| Error::InvalidArgument(format!("model `{}` needs an explicit box", model.name())))
    }
}

/// Outcome of one replication: the flat estimate or why it was discarded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub index: usize,
    pub seed: u64,
    pub theta_hat: Option<Vec<f64>>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellEstimates {
    pub cell: Cell,
    pub replications: Vec<Replication>,
}

impl CellEstimates {
    /// Successful estimates in replication order.
    pub fn estimates(&self) -> Vec<Vec<f64>> {
        self.replications.iter().filter_map(|r| r.theta_hat.clone()).collect()
    }

    pub fn failures(&self) -> usize {
        self.replications.iter().filter(|r| r.theta_hat.is_none()).count()
    }
}

pub fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

/// Runs `job` for replications `0..R` on the pool, collected in index order.
fn par_replications<T, F>(pool: &rayon::ThreadPool, replications: usize, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    pool.install(|| (0..replications).into_par_iter().map(&job).collect())
}

fn one_estimate(
    model: &dyn InteractionModel,
    cfg: &MCConfig,
    cell: &Cell,
    bounds: &ParamBox,
    r: usize,
) -> Result<Vec<f64>> {
    let grid = ObservationGrid::from_horizon(cell.horizon, cell.delta_n)?;
    let panel = simulate_panel(model, &cfg.theta_true, &cfg.sim_config(cell, r), &grid)?;
    let est = minimize_contrast(model, &panel, bounds, &cfg.estimate_options())?;
    if !est.converged {
        return Err(Error::NonConvergence {
            best_theta: est.theta_hat.to_flat(),
            best_value: est.contrast_at_opt,
        });
    }
    Ok(est.theta_hat.to_flat())
}

/// Simulates and estimates every replication of every cell with a catalog model.
pub fn run_replications(cfg: &MCConfig) -> Result<Vec<CellEstimates>> {
    let model = builtin_model(&cfg.model)?;
    run_replications_with(model.as_ref(), cfg)
}

/// [`run_replications`] for an arbitrary model; `cfg.model` is ignored.
pub fn run_replications_with(model: &dyn InteractionModel, cfg: &MCConfig) -> Result<Vec<CellEstimates>> {
    cfg.validate()?;
    cfg.theta_true.check_dims(model)?;
    let bounds = cfg.resolve_bounds(model)?;
    let pool = thread_pool(cfg.workers)?;
    let mut out = Vec::with_capacity(cfg.cells.len());
    for cell in &cfg.cells {
        let replications = par_replications(&pool, cfg.replications, |r| {
            let (theta_hat, failure) = match one_estimate(model, cfg, cell, &bounds, r) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            };
            Replication {
                index: r,
                seed: cfg.seed(r),
                theta_hat,
                failure,
            }
        });
        if replications.iter().all(|r| r.theta_hat.is_none()) {
            return Err(Error::AllReplicationsFailed(cfg.replications));
        }
        out.push(CellEstimates {
            cell: *cell,
            replications,
        });
    }
    Ok(out)
}

/// Sum that does not depend on the order of `values`.
fn ordered_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum()
}

/// `(rmse_k, bias_k)` for each component.
pub fn rmse_bias(estimates: &[Vec<f64>], theta_true: &[f64]) -> Result<Vec<(f64, f64)>> {
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no estimates to aggregate".into()));
    }
    let r = estimates.len() as f64;
    (0..theta_true.len())
        .map(|k| {
            let mut errs = Vec::with_capacity(estimates.len());
            for e in estimates {
                if e.len() != theta_true.len() {
                    return Err(Error::Dimension {
                        what: "estimate",
                        expected: theta_true.len(),
                        got: e.len(),
                    });
                }
                errs.push(e[k] - theta_true[k]);
            }
            let bias = ordered_sum(errs.clone()) / r;
            let mse = ordered_sum(errs.iter().map(|e| e * e).collect()) / r;
            Ok((mse.sqrt(), bias))
        })
        .collect()
}

/// Parameter labels in flat order: `theta11, theta12, …, theta2` (or `theta21, …`).
pub fn component_names(p1: usize, p2: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=p1).map(|k| format!("theta1{k}")).collect();
    if p2 == 1 {
        names.push("theta2".into());
    } else {
        names.extend((1..=p2).map(|k| format!("theta2{k}")));
    }
    names
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub component: String,
    pub rmse: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub cell: Cell,
    pub components: Vec<ComponentStats>,
    pub replications_used: usize,
    pub failures: usize,
}

impl CellReport {
    pub fn component(&self, name: &str) -> Option<&ComponentStats> {
        self.components.iter().find(|c| c.component == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MCReport {
    pub cells: Vec<CellReport>,
}

/// RMSE and bias per cell and component.
pub fn rmse_bias_table(results: &[CellEstimates], theta_true: &ThetaVector) -> Result<MCReport> {
    let names = component_names(theta_true.theta1.len(), theta_true.theta2.len());
    let truth = theta_true.to_flat();
    let cells = results
        .iter()
        .map(|ce| {
            let est = ce.estimates();
            let stats = rmse_bias(&est, &truth)?;
            Ok(CellReport {
                cell: ce.cell,
                components: names
                    .iter()
                    .zip(stats)
                    .map(|(n, (rmse, bias))| ComponentStats {
                        component: n.clone(),
                        rmse,
                        bias,
                    })
                    .collect(),
                replications_used: est.len(),
                failures: ce.failures(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(MCReport { cells })
}

impl MCReport {
    /// CSV with columns `N,T,delta_n,component,rmse,bias,failures`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,T,delta_n,component,rmse,bias,failures\n");
        for c in &self.cells {
            for k in &c.components {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    c.cell.n_particles, c.cell.horizon, c.cell.delta_n, k.component, k.rmse, k.bias, c.failures
                );
            }
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionRow {
    pub theta12: f64,
    pub cell: Cell,
    pub rejections: usize,
    /// Fraction of successful replications that rejected.
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub se: f64,
    pub replications_used: usize,
    pub failures: usize,
}

impl RejectionRow {
    pub fn rate_pct(&self) -> f64 {
        100.0 * self.rejections as f64 / self.replications_used as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub alpha: f64,
    pub rows: Vec<RejectionRow>,
}

impl RejectionReport {
    /// CSV with columns `theta12,N,T,reject_rate_pct,se_pct`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("theta12,N,T,reject_rate_pct,se_pct\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                r.theta12,
                r.cell.n_particles,
                r.cell.horizon,
                r.rate_pct(),
                100.0 * r.se
            );
        }
        s
    }

    pub fn row(&self, theta12: f64, n_particles: usize, horizon: f64) -> Option<&RejectionRow> {
        self.rows
            .iter()
            .find(|r| r.theta12 == theta12 && r.cell.n_particles == n_particles && r.cell.horizon == horizon)
    }
}

/// Rejection rates of the non-interaction test for each `θ₁₂` in the grid and
/// each cell. `cfg.theta_true` supplies `θ₁₁` and `θ₂`; its `θ₁₂` is replaced.
pub fn rejection_rate_table(cfg: &MCConfig, theta12_grid: &[f64], alpha: f64) -> Result<RejectionReport> {
    cfg.validate()?;
    let model = builtin_model(&cfg.model)?;
    if model.closed_form() != crate::model::ClosedForm::LinearModel {
        return Err(Error::InvalidArgument(format!(
            "the non-interaction test needs the linear model, got `{}`",
            cfg.model
        )));
    }
    cfg.theta_true.check_dims(model.as_ref())?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let pool = thread_pool(cfg.workers)?;
    let mut rows = Vec::new();
    for &theta12 in theta12_grid {
        let mut theta = cfg.theta_true.clone();
        theta.theta1[1] = theta12;
        for cell in &cfg.cells {
            let decisions = par_replications(&pool, cfg.replications, |r| -> Option<bool> {
                let grid = ObservationGrid::from_horizon(cell.horizon, cell.delta_n).ok()?;
                let panel = simulate_panel(model.as_ref(), &theta, &cfg.sim_config(cell, r), &grid).ok()?;
                noninteraction_test(&panel, alpha).ok().map(|t| t.reject)
            });
            let used: Vec<bool> = decisions.iter().flatten().copied().collect();
            if used.is_empty() {
                return Err(Error::AllReplicationsFailed(cfg.replications));
            }
            let m = used.len() as f64;
            let rejections = used.iter().filter(|&&d| d).count();
            let rate = rejections as f64 / m;
            rows.push(RejectionRow {
                theta12,
                cell: *cell,
                rejections,
                rate,
                se: (rate * (1.0 - rate) / m).sqrt(),
                replications_used: used.len(),
                failures: cfg.replications - used.len(),
            });
        }
    }
    Ok(RejectionReport { alpha, rows })
}

/// One-sample Kolmogorov–Smirnov statistic against the standard normal.
pub fn ks_statistic(sample: &[f64]) -> f64 {
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter().enumerate().fold(0.0, |d: f64, (i, &x)| {
        let f = normal_cdf(x);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

/// Asymptotic Kolmogorov tail `P(K > λ) = 2 Σ (−1)^{k−1} exp(−2k²λ²)`.
pub fn kolmogorov_p(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// KS test of a sample against `N(0, 1)`.
pub fn ks_test(sample: &[f64]) -> KsResult {
    let statistic = ks_statistic(sample);
    KsResult {
        statistic,
        p_value: kolmogorov_p((sample.len() as f64).sqrt() * statistic),
    }
}

/// Standardises every component of every replication by its own plug-in
/// standard error and tests each component against `N(0, 1)`.
pub fn normality_check(
    estimates: &[Vec<f64>],
    theta_true: &[f64],
    sigmas: &[SigmaEstimate],
    n_particles: usize,
    delta_n: f64,
) -> Result<Vec<KsResult>> {
    if estimates.len() != sigmas.len() {
        return Err(Error::Dimension {
            what: "sigma estimates",
            expected: estimates.len(),
            got: sigmas.len(),
        });
    }
    if estimates.is_empty() {
        return Err(Error::InvalidArgument("no estimates to test".into()));
    }
    let p = theta_true.len();
    let mut z = vec![Vec::with_capacity(estimates.len()); p];
    for (est, sig) in estimates.iter().zip(sigmas) {
        let se = standard_errors(sig, n_particles, delta_n)?;
        for k in 0..p {
            if !(se[k] > 0.0) {
                return Err(Error::InvalidArgument(format!("standard error of component {k} is zero")));
            }
            z[k].push((est[k] - theta_true[k]) / se[k]);
        }
    }
    Ok(z.iter().map(|s| ks_test(s)).collect())
}

/// Linear model, `θ = (0.5, 1, 1)`, `μ₀ = δ₁`, `h = 0.01`; `T ∈ {50, 100}`,
/// `Δ ∈ {0.1, 0.05, 0.01}`, `N ∈ {50, 100}`.
pub fn table1(replications: usize, base_seed: u64) -> MCConfig {
    let mut cells = Vec::new();
    for horizon in [50.0, 100.0] {
        for delta in [0.1, 0.05, 0.01] {
            for n in [50, 100] {
                cells.push(Cell::new(n, horizon, delta));
            }
        }
    }
    MCConfig {
        replications,
        base_seed,
        model: "linear".into(),
        theta_true: ThetaVector::new(vec![0.5, 1.0], vec![1.0]),
        euler_step: 0.01,
        mu0: InitialLaw::Dirac { at: 1.0 },
        cells,
        bounds: None,
        starts: 8,
        workers: 0,
    }
}

/// `θ₁₂` values of the rejection-rate table.
pub const TABLE2_THETA12: [f64; 5] = [0.0, 0.1, 0.25, 0.5, 1.0];

/// Linear model, `θ = (0.5, θ₁₂, 1)`, `Δ = 0.1`, `(N, T) ∈ {50, 100}²`.
pub fn table2(replications: usize, base_seed: u64) -> MCConfig {
    let cells = [(50, 50.0), (100, 50.0), (50, 100.0), (100, 100.0)]
        .into_iter()
        .map(|(n, t)| Cell::new(n, t, 0.1))
        .collect();
    MCConfig {
        cells,
        ..table1(replications, base_seed)
    }
}

/// Smooth opinion model, `θ = (−0.5, 2, 0.04)`, `μ₀ = N(0, 1)`, `Δ = 0.1`, `(N, T) ∈ {50, 100}²`.
pub fn table3(replications: usize, base_seed: u64) -> MCConfig {
    MCConfig {
        model: "opinion_smooth".into(),
        theta_true: ThetaVector::new(vec![-0.5, 2.0], vec![0.04]),
        mu0: InitialLaw::Gaussian { mean: 0.0, sd: 1.0 },
        ..table2(replications, base_seed)
    }
}

pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Linear closed-form estimate of a panel together with the plug-in Σ̂ at
/// the estimate, as consumed by [`normality_check`].
pub fn linear_estimate_with_sigma(panel: &TrajectoryPanel) -> Result<(Vec<f64>, SigmaEstimate)> {
    let e = crate::contrast::closed_form_linear(panel)?;
    let sig = crate::inference::estimate_sigma(&crate::catalog::Linear, &e.theta_hat, panel)?;
    Ok((e.theta_hat.to_flat(), sig))
}

/// Simulates `cfg.replications` linear panels in the first cell and returns
/// the closed-form estimates with their plug-in Σ̂, skipping failures.
pub fn linear_clt_replications(cfg: &MCConfig) -> Result<(Vec<Vec<f64>>, Vec<SigmaEstimate>)> {
    cfg.validate()?;
    let model = crate::catalog::Linear;
    let cell = cfg.cells[0];
    let grid = ObservationGrid::from_horizon(cell.horizon, cell.delta_n)?;
    let pool = thread_pool(cfg.workers)?;
    let rows = par_replications(&pool, cfg.replications, |r| {
        simulate_panel(&model, &cfg.theta_true, &cfg.sim_config(&cell, r), &grid)
            .and_then(|p| linear_estimate_with_sigma(&p))
            .ok()
    });
    let (est, sig): (Vec<_>, Vec<_>) = rows.into_iter().flatten().unzip();
    if est.is_empty() {
        return Err(Error::AllReplicationsFailed(cfg.replications));
    }
    Ok((est, sig))
}
