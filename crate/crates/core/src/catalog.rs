//! Built-in interacting particle models.
//!
//! | name                | drift `b(θ₁, x_i, μ)`                                   | diffusion `a(θ₂, x_i, μ)`      |
//! |---------------------|---------------------------------------------------------|--------------------------------|
//! | `kuramoto`          | `-θ₁ · mean_j sin(x_i - x_j)`                            | `θ₂`                           |
//! | `opinion_indicator` | `-mean_j θ₁₁ 1[0,θ₁₂](|x_i - x_j|) (x_i - x_j)`          | `θ₂`                           |
//! | `pearson_meanfield` | `θ₁₁ + θ₁₂ mean_j x_j - θ₁₃ x_i`                         | `θ₂ √(1 + x_i²)`               |
//! | `meanfield_ou`      | `θ₁₁ + θ₁₂ mean_j x_j - θ₁₃ x_i`                         | `θ₂₁ + θ₂₂ √(mean_j x_j²)`     |
//! | `linear`            | `-(θ₁₁ x_i + θ₁₂ (x_i - mean_j x_j))`                    | `√θ₂`                          |
//! | `opinion_smooth`    | `-mean_j φ_θ₁(|x_i - x_j|) (x_i - x_j)` (mollified bump) | `√θ₂`                          |

use crate::error::{Error, Result};
use crate::model::{ClosedForm, InteractionModel, KernelDiffusion, ParamBox};

pub const MODEL_NAMES: [&str; 6] = [
    "kuramoto",
    "opinion_indicator",
    "pearson_meanfield",
    "meanfield_ou",
    "linear",
    "opinion_smooth",
];

/// Looks up a catalog model by name. The indicator model accepts a
/// mollification width as `opinion_indicator:<width>`.
pub fn builtin_model(name: &str) -> Result<Box<dyn InteractionModel>> {
    if let Some(width) = name.strip_prefix("opinion_indicator:") {
        return match width.trim().parse::<f64>() {
            Ok(w) if w >= 0.0 && w.is_finite() => Ok(Box::new(OpinionIndicator::with_width(w))),
            _ => Err(Error::UnknownModel(name.to_string())),
        };
    }
    Ok(match name {
        "kuramoto" => Box::new(Kuramoto),
        "opinion_indicator" => Box::new(OpinionIndicator::default()),
        "pearson_meanfield" => Box::new(PearsonMeanField),
        "meanfield_ou" => Box::new(MeanFieldOu),
        "linear" => Box::new(Linear),
        "opinion_smooth" => Box::new(OpinionSmooth),
        other => return Err(Error::UnknownModel(other.to_string())),
    })
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn mean_sq(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64
}

fn fill_constant(out: &mut [f64], v: f64) {
    out.iter_mut().for_each(|o| *o = v);
}

/// Synchronisation of oscillators through sine coupling.
#[derive(Debug, Clone, Copy, Default)]
pub struct Kuramoto;

impl Kuramoto {
    /// `(mean cos x_j, mean sin x_j)`.
    fn order(particles: &[f64]) -> (f64, f64) {
        let n = particles.len() as f64;
        let (c, s) = particles
            .iter()
            .fold((0.0, 0.0), |(c, s), x| (c + x.cos(), s + x.sin()));
        (c / n, s / n)
    }

    // mean_j sin(x - x_j) = sin x · C - cos x · S
    fn mean_sine(x: f64, order: (f64, f64)) -> f64 {
        x.sin() * order.0 - x.cos() * order.1
    }
}

impl InteractionModel for Kuramoto {
    fn name(&self) -> &str {
        "kuramoto"
    }
    fn p1(&self) -> usize {
        1
    }
    fn p2(&self) -> usize {
        1
    }
    fn drift(&self, theta1: &[f64], i: usize, particles: &[f64]) -> f64 {
        -theta1[0] * Self::mean_sine(particles[i], Self::order(particles))
    }
    fn drift_all(&self, theta1: &[f64], particles: &[f64], out: &mut [f64]) {
        let order = Self::order(particles);
        for (o, &x) in out.iter_mut().zip(particles) {
            *o = -theta1[0] * Self::mean_sine(x, order);
        }
    }
    fn diffusion(&self, theta2: &[f64], _i: usize, _particles: &[f64]) -> f64 {
        theta2[0]
    }
    fn diffusion_all(&self, theta2: &[f64], _particles: &[f64], out: &mut [f64]) {
        fill_constant(out, theta2[0]);
    }
    fn has_analytic_grads(&self) -> bool {
        true
    }
    fn grad_drift_theta1(&self, _t: &[f64], i: usize, particles: &[f64], out: &mut [f64]) -> bool {
        out[0] = -Self::mean_sine(particles[i], Self::order(particles));
        true
    }
    fn grad_drift_all(&self, _t: &[f64], particles: &[f64], out: &mut [f64]) -> bool {
        let order = Self::order(particles);
        for (o, &x) in out.iter_mut().zip(particles) {
            *o = -Self::mean_sine(x, order);
        }
        true
    }
    fn grad_diffusion_theta2(&self, _t: &[f64], _i: usize, _p: &[f64], out: &mut [f64]) -> bool {
        out[0] = 1.0;
        true
    }
    fn kernel_diffusion(&self, theta2: &[f64]) -> Option<KernelDiffusion> {
        let s = theta2[0];
        Some(KernelDiffusion::new(move |_, _| s, |_, _| 0.0))
    }
    fn default_box(&self) -> Option<ParamBox> {
        ParamBox::new(vec![-10.0, 1e-3], vec![10.0, 10.0]).ok()
    }
}

/// Bounded-confidence opinion dynamics with an indicator influence function
/// `φ(r) = θ₁₁ · 1[0, θ₁₂](r)`.
///
/// With `width > 0` the indicator is replaced by the logistic step
/// `1 / (1 + exp((r - θ₁₂) / width))`, which is smooth in θ₁₂.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpinionIndicator {
    pub width: f64,
}

impl OpinionIndicator {
    pub fn with_width(width: f64) -> Self {
        assert!(width >= 0.0, "mollification width must be non-negative");
        Self { width }
    }

    fn step(&self, r: f64, radius: f64) -> f64 {
        if self.width == 0.0 {
            if r <= radius {
                1.0
            } else {
                0.0
            }
        } else {
            1.0 / (1.0 + ((r - radius) / self.width).exp())
        }
    }
}

impl InteractionModel for OpinionIndicator {
    fn name(&self) -> &str {
        "opinion_indicator"
    }
    fn p1(&self) -> usize {
        2
    }
    fn p2(&self) -> usize {
        1
    }
    fn drift(&self, theta1: &[f64], i: usize, particles: &[f64]) -> f64 {
        let xi = particles[i];
        let s: f64 = particles
            .iter()
            .map(|&xj| {
                let d = xi - xj;
                self.step(d.abs(), theta1[1]) * d
            })
            .sum();
        -theta1[0] * s / particles.len() as f64
    }
    fn diffusion(&self, theta2: &[f64], _i: usize, _particles: &[f64]) -> f64 {
        theta2[0]
    }
    fn diffusion_all(&self, theta2: &[f64], _particles: &[f64], out: &mut [f64]) {
        fill_constant(out, theta2[0]);
    }
    fn differentiable(&self) -> bool {
        self.width > 0.0
    }

    fn kernel_diffusion(&self, theta2: &[f64]) -> Option<KernelDiffusion> {
        let s = theta2[0];
        Some(KernelDiffusion::new(move |_, _| s, |_, _| 0.0))
    }
    fn default_box(&self) -> Option<ParamBox> {
        ParamBox::new(vec![0.0, 0.01, 1e-3], vec![10.0, 5.0, 10.0]).ok()
    }
}

/// Mean-reverting drift with a Pearson-type diffusion `θ₂ √(1 + x²)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PearsonMeanField;

fn affine_drift(theta1: &[f64], x: f64, m: f64) -> f64 {
    theta1[0] + theta1[1] * m - theta1[2] * x
}

impl InteractionModel for PearsonMeanField {
    fn name(&self) -> &str {
        "pearson_meanfield"
    }
    fn p1(&self) -> usize {
        3
    }
    fn p2(&self) -> usize {
        1
    }
    fn drift(&self, theta1: &[f64], i: usize, particles: &[f64]) -> f64 {
        affine_drift(theta1, particles[i], mean(particles))
    }
    fn drift_all(&self, theta1: &[f64], particles: &[f64], out: &mut [f64]) {
        let m = mean(particles);
        for (o, &x) in out.iter_mut().zip(particles) {
            *o = affine_drift(theta1, x, m);
        }
    }
    fn diffusion(&self, theta2: &[f64], i: usize, particles: &[f64]) -> f64 {
        let x = particles[i];
        theta2[0] * (1.0 + x * x).sqrt()
    }
    fn has_analytic_grads(&self) -> bool {
        true
    }
    fn grad_drift_theta1(&self, _t: &[f64], i: usize, particles: &[f64], out: &mut [f64]) -> bool {
        out.copy_from_slice(&[1.0, mean(particles), -particles[i]]);
        true
    }
    fn grad_drift_all(&self, _t: &[f64], particles: &[f64], out: &mut [f64]) -> bool {
        let m = mean(particles);
        for (row, &x) in out.chunks_exact_mut(3).zip(particles) {
            row.copy_from_slice(&[1.0, m, -x]);
        }
        true
    }
    fn grad_diffusion_theta2(&self, _t: &[f64], i: usize, particles: &[f64], out: &mut [f64]) -> bool {
        let x = particles[i];
        out[0] = (1.0 + x * x).sqrt();
        true
    }
    fn kernel_diffusion(&self, theta2: &[f64]) -> Option<KernelDiffusion> {
        let s = theta2[0];
        Some(KernelDiffusion::new(
            move |x, _| s * (1.0 + x * x).sqrt(),
            |_, _| 0.0,
        ))
    }
    fn default_box(&self) -> Option<ParamBox> {
        ParamBox::new(vec![-10.0, -10.0, -10.0, 1e-3], vec![10.0, 10.0, 10.0, 10.0]).ok()
    }
}

/// Affine mean-field drift with diffusion `θ₂₁ + θ₂₂ √(mean x²)`; its mean-field
/// limit is a time-inhomogeneous Ornstein–Uhlenbeck process.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanFieldOu;

impl InteractionModel for MeanFieldOu {
    fn name(&self) -> &str {
        "meanfield_ou"
    }
    fn p1(&self) -> usize {
        3
    }
    fn p2(&self) -> usize {
        2
    }
    fn drift(&self, theta1: &[f64], i: usize, particles: &[f64]) -> f64 {
        affine_drift(theta1, particles[i], mean(particles))
    }
    fn drift_all(&self, theta1: &[f64], particles: &[f64], out: &mut [f64]) {
        let m = mean(particles);
        for (o, &x) in out.iter_mut().zip(particles) {
            *o = affine_drift(theta1, x, m);
        }
    }
    fn diffusion(&self, theta2: &[f64], _i: usize, particles: &[f64]) -> f64 {
        theta2[0] + theta2[1] * mean_sq(particles).sqrt()
    }
    fn diffusion_all(&self, theta2: &[f64], particles: &[f64], out: &mut [f64]) {
        fill_constant(out, theta2[0] + theta2[1] * mean_sq(particles).sqrt());
    }
    fn has_analytic_grads(&self) -> bool {
        true
    }
    fn grad_drift_theta1(&self, _t: &[f64], i: usize, particles: &[f64], out: &mut [f64]) -> bool {
        out.copy_from_slice(&[1.0, mean(particles), -particles[i]]);
        true
    }
    fn grad_drift_all(&self, _t: &[f64], particles: &[f64], out: &mut [f64]) -> bool {
        let m = mean(particles);
        for (row, &x) in out.chunks_exact_mut(3).zip(particles) {
            row.copy_from_slice(&[1.0, m, -x]);
        }
        true
    }
    fn grad_diffusion_theta2(&self, _t: &[f64], _i: usize, particles: &[f64], out: &mut [f64]) -> bool {
        out.copy_from_slice(&[1.0, mean_sq(particles).sqrt()]);
        true
    }
    fn kernel_diffusion(&self, theta2: &[f64]) -> Option<KernelDiffusion> {
        let (s0, s1) = (theta2[0], theta2[1]);
        Some(KernelDiffusion::new(
            move |_, y| s0 + s1 * y.sqrt(),
            |_, y| y * y,
        ))
    }
    fn default_box(&self) -> Option<ParamBox> {
        ParamBox::new(
            vec![-10.0, -10.0, -10.0, 1e-3, 0.0],
            vec![10.0, 10.0, 10.0, 10.0, 10.0],
        )
        .ok()
    }
}

/// Linear interacting system: attraction to zero at rate θ₁₁ and to the
/// empirical mean at rate θ₁₂, squared diffusion θ₂.
#[derive(Debug, Clone, Copy, Default)]
pub struct Linear;

impl InteractionModel for Linear {
    fn name(&self) -> &str {
        "linear"
    }
    fn p1(&self) -> usize {
        2
    }
    fn p2(&self) -> usize {
        1
    }
    fn drift(&self, theta1: &[f64], i: usize, particles: &[f64]) -> f64 {
        let x = particles[i];
        -(theta1[0] * x + theta1[1] * (x - mean(particles)))
    }
    fn drift_all(&self, theta1: &[f64], particles: &[f64], out: &mut [f64]) {
        let m = mean(particles);
        for (o, &x) in out.iter_mut().zip(particles) {
            *o = -(theta1[0] * x + theta1[1] * (x - m));
        }
    }
    fn diffusion(&self, theta2: &[f64], _i: usize, _particles: &[f64]) -> f64 {
        theta2[0].sqrt()
    }
    fn diffusion_all(&self, theta2: &[f64], _particles: &[f64], out: &mut [f64]) {
        fill_constant(out, theta2[0].sqrt());
    }
    fn has_analytic_grads(&self) -> bool {
        true
    }
    fn grad_drift_theta1(&self, _t: &[f64], i: usize, particles: &[f64], out: &mut [f64]) -> bool {
        let x = particles[i];
        out.copy_from_slice(&[-x, -(x - mean(particles))]);
        true
    }
    fn grad_drift_all(&self, _t: &[f64], particles: &[f64], out: &mut [f64]) -> bool {
        let m = mean(particles);
        for (row, &x) in out.chunks_exact_mut(2).zip(particles) {
            row.copy_from_slice(&[-x, -(x - m)]);
        }
        true
    }
    fn grad_diffusion_theta2(&self, theta2: &[f64], _i: usize, _p: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.5 / theta2[0].sqrt();
        true
    }
    fn closed_form(&self) -> ClosedForm {
        ClosedForm::LinearModel
    }
    fn kernel_diffusion(&self, theta2: &[f64]) -> Option<KernelDiffusion> {
        let s = theta2[0].sqrt();
        Some(KernelDiffusion::new(move |_, _| s, |_, _| 0.0))
    }
    fn default_box(&self) -> Option<ParamBox> {
        ParamBox::new(vec![-5.0, -5.0, 1e-6], vec![5.0, 5.0, 100.0]).ok()
    }
}

/// Opinion dynamics with the mollified influence function
/// `φ(r) = θ₁₂ exp(-0.01 / (1 - (r - θ₁₁)²)) 1[θ₁₁ - 1, θ₁₁ + 1](r)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct OpinionSmooth;

/// Bump `exp(-0.01 / (1 - u²))` on `|u| < 1`, zero elsewhere (its continuous extension).
#[inline]
fn bump(u: f64) -> f64 {
    let s = 1.0 - u * u;
    if s <= 0.0 {
        0.0
    } else {
        (-0.01 / s).exp()
    }
}

/// Derivative of the bump with respect to its centre `θ₁₁`, i.e. `-d/du bump(u)`.
#[inline]
fn bump_dcentre(u: f64) -> f64 {
    let s = 1.0 - u * u;
    if s <= 0.0 {
        return 0.0;
    }
    let e = (-0.01 / s).exp();
    if e == 0.0 {
        0.0
    } else {
        e * 0.02 * u / (s * s)
    }
}

impl OpinionSmooth {
    /// `mean_j bump(|x_i - x_j| - θ₁₁) (x_i - x_j)` for every `i`, using pair
    /// symmetry and sorting so that only pairs inside the support are visited.
    fn interaction(centre: f64, particles: &[f64], out: &mut [f64], kernel: fn(f64) -> f64) {
        out.iter_mut().for_each(|o| *o = 0.0);
        let n = particles.len();
        let mut order: Vec<(f64, usize)> = particles.iter().copied().zip(0..n).collect();
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        let reach = centre + 1.0;
        for (pos, &(xa, a)) in order.iter().enumerate() {
            for &(xb, b) in &order[pos + 1..] {
                let r = xb - xa;
                if r >= reach {
                    break;
                }
                let u = r - centre;
                if u > -1.0 {
                    let f = kernel(u) * r;
                    out[a] -= f;
                    out[b] += f;
                }
            }
        }
        let inv = 1.0 / n as f64;
        out.iter_mut().for_each(|o| *o *= inv);
    }

    fn interaction_one(centre: f64, i: usize, particles: &[f64], kernel: fn(f64) -> f64) -> f64 {
        let xi = particles[i];
        let s: f64 = particles
            .iter()
            .map(|&xj| {
                let d = xi - xj;
                let u = d.abs() - centre;
                if u.abs() < 1.0 {
                    kernel(u) * d
                } else {
                    0.0
                }
            })
            .sum();
        s / particles.len() as f64
    }
}

impl InteractionModel for OpinionSmooth {
    fn name(&self) -> &str {
        "opinion_smooth"
    }
    fn p1(&self) -> usize {
        2
    }
    fn p2(&self) -> usize {
        1
    }
    fn drift(&self, theta1: &[f64], i: usize, particles: &[f64]) -> f64 {
        -theta1[1] * Self::interaction_one(theta1[0], i, particles, bump)
    }
    fn drift_all(&self, theta1: &[f64], particles: &[f64], out: &mut [f64]) {
        Self::interaction(theta1[0], particles, out, bump);
        out.iter_mut().for_each(|o| *o *= -theta1[1]);
    }
    fn diffusion(&self, theta2: &[f64], _i: usize, _particles: &[f64]) -> f64 {
        theta2[0].sqrt()
    }
    fn diffusion_all(&self, theta2: &[f64], _particles: &[f64], out: &mut [f64]) {
        fill_constant(out, theta2[0].sqrt());
    }
    fn has_analytic_grads(&self) -> bool {
        true
    }
    fn grad_drift_theta1(&self, theta1: &[f64], i: usize, particles: &[f64], out: &mut [f64]) -> bool {
        out[0] = -theta1[1] * Self::interaction_one(theta1[0], i, particles, bump_dcentre);
        out[1] = -Self::interaction_one(theta1[0], i, particles, bump);
        true
    }
    fn grad_drift_all(&self, theta1: &[f64], particles: &[f64], out: &mut [f64]) -> bool {
        let n = particles.len();
        let mut dc = vec![0.0; n];
        let mut g = vec![0.0; n];
        Self::interaction(theta1[0], particles, &mut dc, bump_dcentre);
        Self::interaction(theta1[0], particles, &mut g, bump);
        for (i, row) in out.chunks_exact_mut(2).enumerate() {
            row[0] = -theta1[1] * dc[i];
            row[1] = -g[i];
        }
        true
    }
    fn grad_diffusion_theta2(&self, theta2: &[f64], _i: usize, _p: &[f64], out: &mut [f64]) -> bool {
        out[0] = 0.5 / theta2[0].sqrt();
        true
    }
    fn drift_scale_component(&self) -> Option<usize> {
        Some(1)
    }
    fn closed_form(&self) -> ClosedForm {
        ClosedForm::MultiplicativeTheta2
    }
    fn kernel_diffusion(&self, theta2: &[f64]) -> Option<KernelDiffusion> {
        let s = theta2[0].sqrt();
        Some(KernelDiffusion::new(move |_, _| s, |_, _| 0.0))
    }
    fn default_box(&self) -> Option<ParamBox> {
        ParamBox::new(vec![-0.99, 0.01, 1e-6], vec![1.0, 10.0, 10.0]).ok()
    }
}
