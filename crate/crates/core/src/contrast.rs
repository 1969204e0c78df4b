//! Gaussian quasi-likelihood contrast for discretely observed particle systems.
//!
//! For a panel observed at `t_j = jΔ` the contrast is
//!
//! ```text
//! S(θ) = Σ_i Σ_j (ΔX^i_j − Δ b(θ₁, X^i_{j−1}, μ_{j−1}))² / (Δ c(θ₂, X^i_{j−1}, μ_{j−1}))
//!        + log c(θ₂, X^i_{j−1}, μ_{j−1}),         c = a²,
//! ```
//!
//! and the estimator is its minimiser over the parameter box.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    diffusion_sq_gradients, drift_gradients, ClosedForm, InteractionModel, ParamBox, ThetaVector,
};
use crate::optim::{multistart, multistart_points, NelderMeadOptions};
use crate::panel::TrajectoryPanel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ClosedForm,
    NelderMead,
    Profiled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateResult {
    pub theta_hat: ThetaVector,
    pub contrast_at_opt: f64,
    pub method: Method,
    pub iterations: usize,
    pub converged: bool,
    pub starts_used: usize,
    /// Some component of `theta_hat` lies on the box boundary.
    pub on_boundary: bool,
    /// Smallest contrast among the multi-start initial points (numeric paths only).
    pub best_start_contrast: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EstimateOptions {
    /// Number of multi-start points: box centre plus Halton points.
    pub starts: usize,
    /// Skip closed-form and profiled shortcuts.
    pub force_numeric: bool,
    pub nelder_mead: NelderMeadOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            force_numeric: false,
            nelder_mead: NelderMeadOptions::default(),
        }
    }
}

/// Reusable per-column buffers.
struct Scratch {
    b: Vec<f64>,
    a: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            b: vec![0.0; n],
            a: vec![0.0; n],
        }
    }
}

fn non_positive(model: &dyn InteractionModel, theta2: &[f64], i: usize, c: f64) -> Error {
    Error::NonPositiveDiffusion {
        model: model.name().to_string(),
        particle: i,
        theta2: theta2.to_vec(),
        value: c,
    }
}

fn contrast_with(
    model: &dyn InteractionModel,
    theta: &ThetaVector,
    panel: &TrajectoryPanel,
    s: &mut Scratch,
) -> Result<f64> {
    let delta = panel.delta_n();
    let mut total = 0.0;
    for j in 1..=panel.n_intervals() {
        let prev = panel.column(j - 1);
        let next = panel.column(j);
        model.drift_all(&theta.theta1, prev, &mut s.b);
        model.diffusion_all(&theta.theta2, prev, &mut s.a);
        let mut col = 0.0;
        for i in 0..prev.len() {
            let c = s.a[i] * s.a[i];
            if !(c > 0.0 && c.is_finite()) {
                return Err(non_positive(model, &theta.theta2, i, c));
            }
            if !s.b[i].is_finite() {
                return Err(Error::ModelEvaluation {
                    model: model.name().to_string(),
                    particle: i,
                    theta: theta.to_flat(),
                });
            }
            let r = next[i] - prev[i] - delta * s.b[i];
            col += r * r / (delta * c) + c.ln();
        }
        total += col;
    }
    Ok(total)
}

/// `S(θ)` on the panel.
pub fn contrast_value(
    model: &dyn InteractionModel,
    theta: &ThetaVector,
    panel: &TrajectoryPanel,
) -> Result<f64> {
    theta.check_dims(model)?;
    contrast_with(model, theta, panel, &mut Scratch::new(panel.n_particles()))
}

/// `∇θ S(θ)`, ordered `(θ₁, θ₂)`. Uses the model's analytic coefficient
/// gradients when available and central differences of the coefficients otherwise.
pub fn contrast_gradient(
    model: &dyn InteractionModel,
    theta: &ThetaVector,
    panel: &TrajectoryPanel,
) -> Result<Vec<f64>> {
    theta.check_dims(model)?;
    if !model.differentiable() {
        return Err(Error::GradientUnavailable(model.name().to_string()));
    }
    let (p1, p2) = (model.p1(), model.p2());
    let n = panel.n_particles();
    let delta = panel.delta_n();
    let mut s = Scratch::new(n);
    let mut gb = vec![0.0; n * p1];
    let mut gc = vec![0.0; n * p2];
    let mut grad = vec![0.0; p1 + p2];
    for j in 1..=panel.n_intervals() {
        let prev = panel.column(j - 1);
        let next = panel.column(j);
        model.drift_all(&theta.theta1, prev, &mut s.b);
        model.diffusion_all(&theta.theta2, prev, &mut s.a);
        drift_gradients(model, &theta.theta1, prev, &mut gb);
        diffusion_sq_gradients(model, &theta.theta2, prev, &mut gc);
        for i in 0..n {
            let c = s.a[i] * s.a[i];
            if !(c > 0.0 && c.is_finite()) {
                return Err(non_positive(model, &theta.theta2, i, c));
            }
            let r = next[i] - prev[i] - delta * s.b[i];
            for k in 0..p1 {
                grad[k] -= 2.0 * r * gb[i * p1 + k] / c;
            }
            for k in 0..p2 {
                let dc = gc[i * p2 + k];
                grad[p1 + k] += dc / c - r * r * dc / (delta * c * c);
            }
        }
    }
    Ok(grad)
}

/// Cross-sectional sums behind the explicit linear-model estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSums {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

/// `A = (1/N)ΣΣ (X − X̄)ΔX`, `B = (1/N)ΣΣ X ΔX`, `C = (Δ/N)ΣΣ (X − X̄)²`, `D = (Δ/N)ΣΣ X²`,
/// all evaluated at the left end of each interval.
pub fn linear_sums(panel: &TrajectoryPanel) -> LinearSums {
    let n = panel.n_particles() as f64;
    let delta = panel.delta_n();
    let (mut a, mut b, mut c, mut d) = (0.0, 0.0, 0.0, 0.0);
    for j in 1..=panel.n_intervals() {
        let prev = panel.column(j - 1);
        let next = panel.column(j);
        let mean = prev.iter().sum::<f64>() / n;
        for (x, y) in prev.iter().zip(next) {
            let dx = y - x;
            let dev = x - mean;
            a += dev * dx;
            b += x * dx;
            c += dev * dev;
            d += x * x;
        }
    }
    LinearSums {
        a: a / n,
        b: b / n,
        c: c * delta / n,
        d: d * delta / n,
    }
}

fn check_linear_sums(s: &LinearSums) -> Result<()> {
    let tol = 1e-12 * (1.0 + s.d.abs());
    if s.c.abs() < tol {
        return Err(Error::Degenerate(format!(
            "C = {} vanishes: particles do not deviate from their mean",
            s.c
        )));
    }
    if (s.d - s.c).abs() < tol {
        return Err(Error::Degenerate(format!(
            "D - C = {} vanishes: the cross-sectional mean stays at zero",
            s.d - s.c
        )));
    }
    Ok(())
}

/// Explicit minimiser of the contrast for the linear model
/// `b = −(θ₁₁ x + θ₁₂ (x − x̄))`, `c = θ₂`.
pub fn closed_form_linear(panel: &TrajectoryPanel) -> Result<EstimateResult> {
    let s = linear_sums(panel);
    check_linear_sums(&s)?;
    let t11 = (s.a - s.b) / (s.d - s.c);
    let t12 = (s.a * s.d - s.b * s.c) / (s.c * s.c - s.c * s.d);

    let n = panel.n_particles() as f64;
    let delta = panel.delta_n();
    let mut rss = 0.0;
    for j in 1..=panel.n_intervals() {
        let prev = panel.column(j - 1);
        let next = panel.column(j);
        let mean = prev.iter().sum::<f64>() / n;
        for (x, y) in prev.iter().zip(next) {
            let r = y - x + delta * (t11 * x + t12 * (x - mean));
            rss += r * r;
        }
    }
    let t2 = rss / (n * panel.horizon());
    let theta_hat = ThetaVector::new(vec![t11, t12], vec![t2]);
    let contrast_at_opt = if t2 > 0.0 {
        contrast_value(&crate::catalog::Linear, &theta_hat, panel)?
    } else {
        f64::NEG_INFINITY
    };
    Ok(EstimateResult {
        theta_hat,
        contrast_at_opt,
        method: Method::ClosedForm,
        iterations: 0,
        converged: true,
        starts_used: 0,
        on_boundary: false,
        best_start_contrast: None,
    })
}

/// Per-panel quantities for profiling a multiplicative θ₂ out of the contrast.
struct Profile<'a> {
    model: &'a dyn InteractionModel,
    panel: &'a TrajectoryPanel,
    /// `c₀ = c(θ₂ = 1)`, time-major like the panel.
    c0: Vec<f64>,
    /// `Σ log c₀`.
    log_c0: f64,
    scratch: Vec<f64>,
}

impl<'a> Profile<'a> {
    fn new(model: &'a dyn InteractionModel, panel: &'a TrajectoryPanel) -> Result<Self> {
        if model.closed_form() != ClosedForm::MultiplicativeTheta2 || model.p2() != 1 {
            return Err(Error::InvalidArgument(format!(
                "model `{}` does not declare a scalar multiplicative θ₂",
                model.name()
            )));
        }
        let n = panel.n_particles();
        let steps = panel.n_intervals();
        let mut c0 = vec![0.0; n * steps];
        let mut log_c0 = 0.0;
        for j in 0..steps {
            let out = &mut c0[j * n..(j + 1) * n];
            model.diffusion_all(&[1.0], panel.column(j), out);
            for (i, v) in out.iter_mut().enumerate() {
                *v *= *v;
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(non_positive(model, &[1.0], i, *v));
                }
                log_c0 += v.ln();
            }
        }
        Ok(Self {
            model,
            panel,
            c0,
            log_c0,
            scratch: vec![0.0; n],
        })
    }

    /// `Σ (ΔX − Δ b(θ₁))² / c₀`.
    fn weighted_rss(&mut self, theta1: &[f64]) -> Result<f64> {
        let n = self.panel.n_particles();
        let delta = self.panel.delta_n();
        let mut total = 0.0;
        for j in 1..=self.panel.n_intervals() {
            let prev = self.panel.column(j - 1);
            let next = self.panel.column(j);
            self.model.drift_all(theta1, prev, &mut self.scratch);
            let c0 = &self.c0[(j - 1) * n..j * n];
            let mut col = 0.0;
            for i in 0..n {
                let r = next[i] - prev[i] - delta * self.scratch[i];
                col += r * r / c0[i];
            }
            total += col;
        }
        if total.is_finite() {
            Ok(total)
        } else {
            Err(Error::ModelEvaluation {
                model: self.model.name().to_string(),
                particle: 0,
                theta: theta1.to_vec(),
            })
        }
    }

    /// For drifts proportional to `θ₁[k]`, the weighted RSS is a quadratic in
    /// `θ₁[k]`; returns its minimiser over `[lo, hi]` and the RSS there.
    fn scaled_rss(&mut self, theta1: &mut [f64], k: usize, lo: f64, hi: f64) -> Result<(f64, f64)> {
        let n = self.panel.n_particles();
        let delta = self.panel.delta_n();
        theta1[k] = 1.0;
        let (mut syy, mut syg, mut sgg) = (0.0, 0.0, 0.0);
        for j in 1..=self.panel.n_intervals() {
            let prev = self.panel.column(j - 1);
            let next = self.panel.column(j);
            self.model.drift_all(theta1, prev, &mut self.scratch);
            let c0 = &self.c0[(j - 1) * n..j * n];
            for i in 0..n {
                let y = next[i] - prev[i];
                let g = delta * self.scratch[i];
                syy += y * y / c0[i];
                syg += y * g / c0[i];
                sgg += g * g / c0[i];
            }
        }
        let t = if sgg > 0.0 {
            (syg / sgg).clamp(lo, hi)
        } else {
            0.5 * (lo + hi)
        };
        let rss = (syy - 2.0 * t * syg + t * t * sgg).max(0.0);
        if rss.is_finite() {
            Ok((t, rss))
        } else {
            Err(Error::ModelEvaluation {
                model: self.model.name().to_string(),
                particle: 0,
                theta: theta1.to_vec(),
            })
        }
    }

    fn theta2_hat(&mut self, theta1: &[f64]) -> Result<f64> {
        let n = self.panel.n_particles() as f64;
        Ok(self.weighted_rss(theta1)? / (n * self.panel.horizon()))
    }

    /// Contrast at `(θ₁, θ₂)` for multiplicative models, from the weighted RSS.
    fn contrast_at(&self, rss: f64, theta2: f64) -> f64 {
        let count = (self.panel.n_particles() * self.panel.n_intervals()) as f64;
        rss / (self.panel.delta_n() * theta2) + count * theta2.ln() + self.log_c0
    }
}

/// `θ̂₂(θ₁) = (1/(NT)) ΣΣ (ΔX − Δ b(θ₁))² / c₀` for models with `c = θ₂ · c₀`.
pub fn profile_theta2(
    model: &dyn InteractionModel,
    panel: &TrajectoryPanel,
    theta1: &[f64],
) -> Result<Vec<f64>> {
    if theta1.len() != model.p1() {
        return Err(Error::Dimension {
            what: "theta1",
            expected: model.p1(),
            got: theta1.len(),
        });
    }
    let mut prof = Profile::new(model, panel)?;
    Ok(vec![prof.theta2_hat(theta1)?])
}

fn check_box(model: &dyn InteractionModel, bounds: &ParamBox) -> Result<()> {
    let p = model.p1() + model.p2();
    if bounds.dim() != p {
        return Err(Error::Dimension {
            what: "parameter box",
            expected: p,
            got: bounds.dim(),
        });
    }
    Ok(())
}

/// Minimises the contrast over `bounds`.
///
/// Linear models take the explicit estimator when it lands inside the box,
/// models with a multiplicative scalar θ₂ are profiled and searched over θ₁
/// only, and everything else runs multi-start Nelder–Mead on the full box.
pub fn minimize_contrast(
    model: &dyn InteractionModel,
    panel: &TrajectoryPanel,
    bounds: &ParamBox,
    opts: &EstimateOptions,
) -> Result<EstimateResult> {
    check_box(model, bounds)?;
    if !opts.force_numeric {
        match model.closed_form() {
            ClosedForm::LinearModel => {
                let est = closed_form_linear(panel)?;
                if bounds.contains(&est.theta_hat.to_flat()) {
                    let on_boundary = bounds.on_boundary(&est.theta_hat.to_flat());
                    return Ok(EstimateResult { on_boundary, ..est });
                }
            }
            ClosedForm::MultiplicativeTheta2 if model.p2() == 1 => {
                return minimize_profiled(model, panel, bounds, opts);
            }
            _ => {}
        }
    }
    minimize_numeric(model, panel, bounds, opts)
}

fn minimize_numeric(
    model: &dyn InteractionModel,
    panel: &TrajectoryPanel,
    bounds: &ParamBox,
    opts: &EstimateOptions,
) -> Result<EstimateResult> {
    let p1 = model.p1();
    let mut scratch = Scratch::new(panel.n_particles());
    let objective = |x: &[f64]| {
        let theta = ThetaVector::new(x[..p1].to_vec(), x[p1..].to_vec());
        contrast_with(model, &theta, panel, &mut scratch).unwrap_or(f64::INFINITY)
    };
    let starts = multistart_points(bounds, opts.starts.max(1));
    let out = multistart(objective, &starts, bounds, &opts.nelder_mead);
    let mut x = out.best.x.clone();
    bounds.clamp(&mut x);
    if !out.any_converged || !out.best.value.is_finite() {
        return Err(Error::NonConvergence {
            best_theta: x,
            best_value: out.best.value,
        });
    }
    Ok(EstimateResult {
        on_boundary: bounds.on_boundary(&x),
        theta_hat: ThetaVector::from_flat(&x, p1)?,
        contrast_at_opt: out.best.value,
        method: Method::NelderMead,
        iterations: out.iterations,
        converged: out.best.converged,
        starts_used: out.starts_used,
        best_start_contrast: Some(out.best_start_value),
    })
}

fn minimize_profiled(
    model: &dyn InteractionModel,
    panel: &TrajectoryPanel,
    bounds: &ParamBox,
    opts: &EstimateOptions,
) -> Result<EstimateResult> {
    let p1 = model.p1();
    let (lo2, hi2) = (bounds.lower()[p1], bounds.upper()[p1]);
    let mut prof = Profile::new(model, panel)?;
    let horizon_n = panel.n_particles() as f64 * panel.horizon();
    let scale = model.drift_scale_component().filter(|&k| k < p1);

    // indices of θ₁ searched numerically
    let free: Vec<usize> = (0..p1).filter(|&k| Some(k) != scale).collect();
    let free_box = ParamBox::new(
        free.iter().map(|&k| bounds.lower()[k]).collect(),
        free.iter().map(|&k| bounds.upper()[k]).collect(),
    );

    // (contrast, θ₁, θ₂) at the profiled optimum for fixed free components
    let mut profiled = |x: &[f64]| -> Option<(f64, Vec<f64>, f64)> {
        let mut theta1 = vec![0.0; p1];
        for (&k, &v) in free.iter().zip(x) {
            theta1[k] = v;
        }
        let rss = match scale {
            Some(k) => {
                let (t, rss) = prof
                    .scaled_rss(&mut theta1, k, bounds.lower()[k], bounds.upper()[k])
                    .ok()?;
                theta1[k] = t;
                rss
            }
            None => prof.weighted_rss(&theta1).ok()?,
        };
        let t2 = (rss / horizon_n).clamp(lo2, hi2);
        Some((prof.contrast_at(rss, t2), theta1, t2))
    };

    let (value, theta1, theta2, iterations, converged, starts_used, best_start) = match free_box {
        Ok(free_box) => {
            let starts = multistart_points(&free_box, opts.starts.max(1));
            let out = multistart(
                |x: &[f64]| profiled(x).map_or(f64::INFINITY, |r| r.0),
                &starts,
                &free_box,
                &opts.nelder_mead,
            );
            let mut x = out.best.x.clone();
            free_box.clamp(&mut x);
            match profiled(&x) {
                Some((v, t1, t2)) if v.is_finite() && out.any_converged => (
                    v,
                    t1,
                    t2,
                    out.iterations,
                    out.best.converged,
                    out.starts_used,
                    Some(out.best_start_value),
                ),
                _ => {
                    return Err(Error::NonConvergence {
                        best_theta: x,
                        best_value: out.best.value,
                    })
                }
            }
        }
        // nothing left to search
        Err(_) => match profiled(&[]) {
            Some((v, t1, t2)) if v.is_finite() => (v, t1, t2, 0, true, 0, None),
            _ => {
                return Err(Error::NonConvergence {
                    best_theta: vec![],
                    best_value: f64::INFINITY,
                })
            }
        },
    };
    let flat: Vec<f64> = theta1.iter().copied().chain([theta2]).collect();
    Ok(EstimateResult {
        on_boundary: bounds.on_boundary(&flat),
        theta_hat: ThetaVector::new(theta1, vec![theta2]),
        contrast_at_opt: value,
        method: Method::Profiled,
        iterations,
        converged,
        starts_used,
        best_start_contrast: best_start,
    })
}
