//! Coefficient-evaluation contract for interacting particle models.
//!
//! A model supplies the drift `b(θ₁, x, μ)` and the diffusion `a(θ₂, x, μ)`
//! of the particle system. The empirical measure `μ` is passed as the full
//! particle vector, so evaluators compute whatever moments or kernel means
//! they need directly from the atoms.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Drift (`theta1`, length `p1`) and diffusion (`theta2`, length `p2`) parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaVector {
    pub theta1: Vec<f64>,
    pub theta2: Vec<f64>,
}

impl ThetaVector {
    pub fn new(theta1: Vec<f64>, theta2: Vec<f64>) -> Self {
        Self { theta1, theta2 }
    }

    /// Splits a flat `(θ₁, θ₂)` vector after the first `p1` entries.
    pub fn from_flat(flat: &[f64], p1: usize) -> Result<Self> {
        if flat.len() <= p1 || p1 == 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot split {} parameters into p1 = {p1} drift and at least one diffusion component",
                flat.len()
            )));
        }
        Ok(Self {
            theta1: flat[..p1].to_vec(),
            theta2: flat[p1..].to_vec(),
        })
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = self.theta1.clone();
        v.extend_from_slice(&self.theta2);
        v
    }

    pub fn len(&self) -> usize {
        self.theta1.len() + self.theta2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks the lengths against a model.
    pub fn check_dims(&self, model: &dyn InteractionModel) -> Result<()> {
        if self.theta1.len() != model.p1() {
            return Err(Error::Dimension {
                what: "theta1",
                expected: model.p1(),
                got: self.theta1.len(),
            });
        }
        if self.theta2.len() != model.p2() {
            return Err(Error::Dimension {
                what: "theta2",
                expected: model.p2(),
                got: self.theta2.len(),
            });
        }
        Ok(())
    }
}

impl fmt::Display for ThetaVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.to_flat().iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(", "))
    }
}

/// Compact box `Θ = Θ₁ × Θ₂` over the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                what: "box upper bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument("empty parameter box".into()));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidArgument(format!(
                    "box component {k}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (lo, hi))| lo <= t && t <= hi)
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (t, (lo, hi)) in theta.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *t = t.clamp(*lo, *hi);
        }
    }

    /// True when some component sits exactly on a face of the box.
    pub fn on_boundary(&self, theta: &[f64]) -> bool {
        theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .any(|(t, (lo, hi))| t <= lo || t >= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    /// Maps a point of the unit cube into the box.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(u, (lo, hi))| lo + u * (hi - lo))
            .collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .collect()
    }

    /// Restricts the box to the first `k` components.
    pub fn head(&self, k: usize) -> Result<Self> {
        Self::new(self.lower[..k].to_vec(), self.upper[..k].to_vec())
    }
}

/// Which closed-form shortcuts the estimator may take for a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    None,
    /// Drift linear in θ₁ and `c = θ₂`: explicit estimator.
    LinearModel,
    /// `c(θ₂, x, μ) = θ₂ · c₀(x, μ)` with scalar θ₂, which can be profiled out.
    MultiplicativeTheta2,
}

pub type BinaryFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Diffusion written as `a(x, μ) = ã(x, ∫K(x, y) μ(dy))` at a fixed θ₂.
#[derive(Clone)]
pub struct KernelDiffusion {
    pub a_tilde: BinaryFn,
    pub kernel: BinaryFn,
}

impl KernelDiffusion {
    pub fn new(
        a_tilde: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        kernel: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            a_tilde: Arc::new(a_tilde),
            kernel: Arc::new(kernel),
        }
    }

    /// Evaluates `ã(x_i, meanⱼ K(x_i, x_j))`.
    pub fn compose(&self, i: usize, particles: &[f64]) -> f64 {
        let x = particles[i];
        let y = crate::measure::kernel_mean(particles, |a, b| (self.kernel)(a, b), x)
            .unwrap_or(f64::NAN);
        (self.a_tilde)(x, y)
    }
}

impl fmt::Debug for KernelDiffusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("KernelDiffusion { .. }")
    }
}

/// An interacting particle model in one space dimension.
///
/// `particles` is always the full particle vector at the current time, so
/// it doubles as the empirical measure. Implementations must be pure.
pub trait InteractionModel: Send + Sync {
    fn name(&self) -> &str;

    /// Number of drift parameters.
    fn p1(&self) -> usize;

    /// Number of diffusion parameters.
    fn p2(&self) -> usize;

    /// `b(θ₁, x_i, μ)`.
    fn drift(&self, theta1: &[f64], i: usize, particles: &[f64]) -> f64;

    /// `a(θ₂, x_i, μ)`, not squared.
    fn diffusion(&self, theta2: &[f64], i: usize, particles: &[f64]) -> f64;

    /// Drift for every particle at once. Override when the interaction can
    /// be evaluated faster than `N` independent calls.
    fn drift_all(&self, theta1: &[f64], particles: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.drift(theta1, i, particles);
        }
    }

    fn diffusion_all(&self, theta2: &[f64], particles: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.diffusion(theta2, i, particles);
        }
    }

    fn has_analytic_grads(&self) -> bool {
        false
    }

    /// Whether the coefficients are differentiable in θ at all. Models with
    /// discontinuous kernels return `false` and only support contrast values.
    fn differentiable(&self) -> bool {
        true
    }

    /// Writes `∇θ₁ b` into `out` (length `p1`); returns `false` if not provided.
    fn grad_drift_theta1(
        &self,
        _theta1: &[f64],
        _i: usize,
        _particles: &[f64],
        _out: &mut [f64],
    ) -> bool {
        false
    }

    /// Writes `∇θ₂ a` into `out` (length `p2`); returns `false` if not provided.
    fn grad_diffusion_theta2(
        &self,
        _theta2: &[f64],
        _i: usize,
        _particles: &[f64],
        _out: &mut [f64],
    ) -> bool {
        false
    }

    /// `∇θ₁ b` for every particle, row-major `N × p1`.
    fn grad_drift_all(&self, theta1: &[f64], particles: &[f64], out: &mut [f64]) -> bool {
        let p1 = self.p1();
        for i in 0..particles.len() {
            if !self.grad_drift_theta1(theta1, i, particles, &mut out[i * p1..(i + 1) * p1]) {
                return false;
            }
        }
        true
    }

    fn closed_form(&self) -> ClosedForm {
        ClosedForm::None
    }

    /// Index `k` such that `b(θ₁) = θ₁[k] · g(θ₁ without k)`, if the drift is
    /// proportional to one of its parameters. Lets the estimator profile that
    /// component out exactly.
    fn drift_scale_component(&self) -> Option<usize> {
        None
    }

    /// Kernel-convolution form of the diffusion at `theta2`, if the model has one.
    fn kernel_diffusion(&self, _theta2: &[f64]) -> Option<KernelDiffusion> {
        None
    }

    /// A reasonable estimation box for the model.
    fn default_box(&self) -> Option<ParamBox> {
        None
    }
}

impl fmt::Debug for dyn InteractionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "InteractionModel({}, p1={}, p2={})", self.name(), self.p1(), self.p2())
    }
}

fn check_call(
    theta: &[f64],
    expected: usize,
    what: &'static str,
    i: usize,
    particles: &[f64],
) -> Result<()> {
    if theta.len() != expected {
        return Err(Error::Dimension {
            what,
            expected,
            got: theta.len(),
        });
    }
    if i >= particles.len() {
        return Err(Error::ParticleIndex {
            index: i,
            n: particles.len(),
        });
    }
    Ok(())
}

/// Checked drift evaluation.
pub fn eval_drift(
    model: &dyn InteractionModel,
    theta1: &[f64],
    i: usize,
    particles: &[f64],
) -> Result<f64> {
    check_call(theta1, model.p1(), "theta1", i, particles)?;
    let b = model.drift(theta1, i, particles);
    if b.is_finite() {
        Ok(b)
    } else {
        Err(Error::ModelEvaluation {
            model: model.name().to_string(),
            particle: i,
            theta: theta1.to_vec(),
        })
    }
}

/// Checked diffusion evaluation; the result must be finite and strictly positive.
pub fn eval_diffusion(
    model: &dyn InteractionModel,
    theta2: &[f64],
    i: usize,
    particles: &[f64],
) -> Result<f64> {
    check_call(theta2, model.p2(), "theta2", i, particles)?;
    let a = model.diffusion(theta2, i, particles);
    if a.is_finite() && a > 0.0 {
        Ok(a)
    } else {
        Err(Error::NonPositiveDiffusion {
            model: model.name().to_string(),
            particle: i,
            theta2: theta2.to_vec(),
            value: a,
        })
    }
}

/// Central finite-difference step for component value `t`.
pub fn fd_step(t: f64) -> f64 {
    1e-6 * (1.0 + t.abs())
}

/// `∇θ₁ b` for every particle (row-major `N × p1`), analytic when the model
/// provides it and central differences otherwise.
pub fn drift_gradients(
    model: &dyn InteractionModel,
    theta1: &[f64],
    particles: &[f64],
    out: &mut [f64],
) {
    if model.has_analytic_grads() && model.grad_drift_all(theta1, particles, out) {
        return;
    }
    let n = particles.len();
    let p1 = theta1.len();
    let mut tp = theta1.to_vec();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for k in 0..p1 {
        let h = fd_step(theta1[k]);
        tp[k] = theta1[k] + h;
        model.drift_all(&tp, particles, &mut plus);
        tp[k] = theta1[k] - h;
        model.drift_all(&tp, particles, &mut minus);
        tp[k] = theta1[k];
        for i in 0..n {
            out[i * p1 + k] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
}

/// `∇θ₂ c` with `c = a²` for every particle (row-major `N × p2`).
pub fn diffusion_sq_gradients(
    model: &dyn InteractionModel,
    theta2: &[f64],
    particles: &[f64],
    out: &mut [f64],
) {
    let n = particles.len();
    let p2 = theta2.len();
    let mut grad_a = vec![0.0; p2];
    if model.has_analytic_grads() {
        let mut ok = true;
        for i in 0..n {
            if !model.grad_diffusion_theta2(theta2, i, particles, &mut grad_a) {
                ok = false;
                break;
            }
            let a = model.diffusion(theta2, i, particles);
            for k in 0..p2 {
                out[i * p2 + k] = 2.0 * a * grad_a[k];
            }
        }
        if ok {
            return;
        }
    }
    let mut tp = theta2.to_vec();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for k in 0..p2 {
        let h = fd_step(theta2[k]);
        tp[k] = theta2[k] + h;
        model.diffusion_all(&tp, particles, &mut plus);
        tp[k] = theta2[k] - h;
        model.diffusion_all(&tp, particles, &mut minus);
        tp[k] = theta2[k];
        for i in 0..n {
            out[i * p2 + k] = (plus[i] * plus[i] - minus[i] * minus[i]) / (2.0 * h);
        }
    }
}

type CoefficientFn = Arc<dyn Fn(&[f64], usize, &[f64]) -> f64 + Send + Sync>;

/// Builds a model from closures, for custom or test dynamics.
pub struct FnModel {
    name: String,
    p1: usize,
    p2: usize,
    drift: CoefficientFn,
    diffusion: CoefficientFn,
    closed_form: ClosedForm,
}

impl FnModel {
    pub fn new(
        name: impl Into<String>,
        p1: usize,
        p2: usize,
        drift: impl Fn(&[f64], usize, &[f64]) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], usize, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            p1,
            p2,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            closed_form: ClosedForm::None,
        }
    }

    /// Declares `c = θ₂ · c₀` so θ₂ can be profiled.
    pub fn multiplicative_theta2(mut self) -> Self {
        self.closed_form = ClosedForm::MultiplicativeTheta2;
        self
    }
}

impl InteractionModel for FnModel {
    fn name(&self) -> &str {
        &self.name
    }
    fn p1(&self) -> usize {
        self.p1
    }
    fn p2(&self) -> usize {
        self.p2
    }
    fn drift(&self, theta1: &[f64], i: usize, particles: &[f64]) -> f64 {
        (self.drift)(theta1, i, particles)
    }
    fn diffusion(&self, theta2: &[f64], i: usize, particles: &[f64]) -> f64 {
        (self.diffusion)(theta2, i, particles)
    }
    fn closed_form(&self) -> ClosedForm {
        self.closed_form
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_flat_round_trip() {
        let t = ThetaVector::from_flat(&[0.5, 1.0, 1.0], 2).unwrap();
        assert_eq!(t.theta1, vec![0.5, 1.0]);
        assert_eq!(t.theta2, vec![1.0]);
        assert_eq!(t.to_flat(), vec![0.5, 1.0, 1.0]);
        assert!(ThetaVector::from_flat(&[0.5, 1.0], 2).is_err());
    }

    #[test]
    fn box_validation_and_geometry() {
        assert!(ParamBox::new(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(ParamBox::new(vec![0.0], vec![1.0, 2.0]).is_err());
        let b = ParamBox::new(vec![-1.0, 0.0], vec![1.0, 2.0]).unwrap();
        assert_eq!(b.center(), vec![0.0, 1.0]);
        assert!(b.contains(&[0.5, 2.0]));
        assert!(!b.contains(&[1.5, 1.0]));
        assert!(b.on_boundary(&[0.5, 2.0]));
        let mut t = [3.0, -4.0];
        b.clamp(&mut t);
        assert_eq!(t, [1.0, 0.0]);
        assert_eq!(b.from_unit(&[0.25, 0.5]), vec![-0.5, 1.0]);
    }

    #[test]
    fn checked_evaluation_errors() {
        let m = FnModel::new("bad", 1, 1, |_, _, _| f64::NAN, |t, _, _| t[0]);
        assert!(matches!(
            eval_drift(&m, &[1.0], 0, &[0.0]),
            Err(Error::ModelEvaluation { .. })
        ));
        assert!(matches!(
            eval_drift(&m, &[1.0, 2.0], 0, &[0.0]),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            eval_drift(&m, &[1.0], 3, &[0.0]),
            Err(Error::ParticleIndex { .. })
        ));
        assert!(matches!(
            eval_diffusion(&m, &[0.0], 0, &[0.0]),
            Err(Error::NonPositiveDiffusion { .. })
        ));
        assert_eq!(eval_diffusion(&m, &[2.0], 0, &[0.0]).unwrap(), 2.0);
    }

    #[test]
    fn finite_difference_fallback() {
        let m = FnModel::new(
            "quad",
            1,
            1,
            |t, i, x| t[0] * t[0] * x[i],
            |t, _, _| t[0].sqrt(),
        );
        let mut g = [0.0; 2];
        drift_gradients(&m, &[1.5], &[1.0, 2.0], &mut g);
        assert!((g[0] - 3.0).abs() < 1e-6);
        assert!((g[1] - 6.0).abs() < 1e-6);
        let mut gc = [0.0; 2];
        diffusion_sq_gradients(&m, &[0.7], &[1.0, 2.0], &mut gc);
        assert!((gc[0] - 1.0).abs() < 1e-8);
    }
}
