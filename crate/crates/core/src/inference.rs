//! Asymptotic covariance, standard errors, the non-interaction test and
//! the identifiability functionals.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::contrast::closed_form_linear;
use crate::contrast::linear_sums;
use crate::error::{Error, Result};
use crate::model::{diffusion_sq_gradients, drift_gradients, InteractionModel, ThetaVector};
use crate::panel::{ObservationGrid, TrajectoryPanel};
use crate::simulate::{simulate_panel, SimConfig};

/// Largest condition number accepted when inverting a Σ block.
pub const MAX_CONDITION: f64 = 1e12;

/// Levels always reported by [`noninteraction_test`] in addition to the requested one.
pub const REPORTED_LEVELS: [f64; 3] = [0.01, 0.05, 0.10];

/// Plug-in estimate of the block-diagonal asymptotic information `diag(Σ₁, Σ₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaEstimate {
    pub sigma1: Vec<Vec<f64>>,
    pub sigma2: Vec<Vec<f64>>,
    /// Parameter at which the blocks were evaluated.
    pub theta: ThetaVector,
}

fn to_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let p = rows.len();
    DMatrix::from_fn(p, p, |r, c| rows[r][c])
}

fn symmetrized(m: Vec<f64>, p: usize) -> Vec<Vec<f64>> {
    (0..p)
        .map(|r| (0..p).map(|c| 0.5 * (m[r * p + c] + m[c * p + r])).collect())
        .collect()
}

/// Eigenvalues of a symmetric block, ascending.
pub fn eigenvalues(block: &[Vec<f64>]) -> Vec<f64> {
    let mut ev: Vec<f64> = SymmetricEigen::new(to_matrix(block)).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `Σ̂₁ = (2Δ/N) ΣΣ ∇b ∇bᵀ / c`, `Σ̂₂ = (Δ/N) ΣΣ ∇c ∇cᵀ / c²`, both at the
/// left end of each observation interval.
pub fn estimate_sigma(
    model: &dyn InteractionModel,
    theta: &ThetaVector,
    panel: &TrajectoryPanel,
) -> Result<SigmaEstimate> {
    theta.check_dims(model)?;
    if !model.differentiable() {
        return Err(Error::GradientUnavailable(model.name().to_string()));
    }
    let (p1, p2) = (model.p1(), model.p2());
    let n = panel.n_particles();
    let delta = panel.delta_n();
    let mut a = vec![0.0; n];
    let mut gb = vec![0.0; n * p1];
    let mut gc = vec![0.0; n * p2];
    let mut s1 = vec![0.0; p1 * p1];
    let mut s2 = vec![0.0; p2 * p2];
    for j in 0..panel.n_intervals() {
        let x = panel.column(j);
        model.diffusion_all(&theta.theta2, x, &mut a);
        drift_gradients(model, &theta.theta1, x, &mut gb);
        diffusion_sq_gradients(model, &theta.theta2, x, &mut gc);
        for i in 0..n {
            let c = a[i] * a[i];
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::NonPositiveDiffusion {
                    model: model.name().to_string(),
                    particle: i,
                    theta2: theta.theta2.clone(),
                    value: c,
                });
            }
            let g = &gb[i * p1..(i + 1) * p1];
            for k in 0..p1 {
                for l in 0..p1 {
                    s1[k * p1 + l] += g[k] * g[l] / c;
                }
            }
            let g = &gc[i * p2..(i + 1) * p2];
            for k in 0..p2 {
                for l in 0..p2 {
                    s2[k * p2 + l] += g[k] * g[l] / (c * c);
                }
            }
        }
    }
    let scale = delta / n as f64;
    s1.iter_mut().for_each(|v| *v *= 2.0 * scale);
    s2.iter_mut().for_each(|v| *v *= scale);
    Ok(SigmaEstimate {
        sigma1: symmetrized(s1, p1),
        sigma2: symmetrized(s2, p2),
        theta: theta.clone(),
    })
}

/// Diagonal of the inverse of a symmetric positive definite block.
fn inverse_diagonal(block: &[Vec<f64>], name: &'static str) -> Result<Vec<f64>> {
    let eig = SymmetricEigen::new(to_matrix(block));
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let lmin = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if lmin > 0.0 { lmax / lmin } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::SingularSigma { block: name, condition });
    }
    let p = block.len();
    Ok((0..p)
        .map(|k| {
            (0..p)
                .map(|m| eig.eigenvectors[(k, m)].powi(2) / eig.eigenvalues[m])
                .sum()
        })
        .collect())
}

/// `√(2 (Σ̂₁⁻¹)_kk / N)` for drift components followed by
/// `√(2 (Σ̂₂⁻¹)_kk Δ / N)` for diffusion components.
pub fn standard_errors(sig: &SigmaEstimate, n_particles: usize, delta_n: f64) -> Result<Vec<f64>> {
    if n_particles == 0 || !(delta_n > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "standard errors need N ≥ 1 and Δ > 0, got N = {n_particles}, Δ = {delta_n}"
        )));
    }
    let n = n_particles as f64;
    let d1 = inverse_diagonal(&sig.sigma1, "sigma1")?;
    let d2 = inverse_diagonal(&sig.sigma2, "sigma2")?;
    Ok(d1
        .iter()
        .map(|v| (2.0 * v / n).sqrt())
        .chain(d2.iter().map(|v| (2.0 * v * delta_n / n).sqrt()))
        .collect())
}

/// Standard normal distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile by bisection, accurate to 1e-12.
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let (mut lo, mut hi) = (-40.0_f64, 40.0_f64);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Two-sided p-value `2(1 − Φ(|z|))`.
pub fn two_sided_p(z: f64) -> f64 {
    libm::erfc(z.abs() / std::f64::consts::SQRT_2).min(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub theta_hat: ThetaVector,
    pub z: f64,
    pub v: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Decision at each reported level, keyed by the level.
    pub reject_at: BTreeMap<String, bool>,
}

/// Critical value `z_{α/2}`.
pub fn critical_value(alpha: f64) -> f64 {
    normal_quantile(1.0 - alpha / 2.0)
}

/// Wald test of `θ₁₂ = 0` in the linear model: `V = θ̂₂ D / ((D − C) C)`,
/// `Z = θ̂₁₂ √(N / V)`, rejecting when `|Z| > z_{α/2}`.
pub fn noninteraction_test(panel: &TrajectoryPanel, alpha: f64) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let est = closed_form_linear(panel)?;
    let s = linear_sums(panel);
    let theta2 = est.theta_hat.theta2[0];
    let theta12 = est.theta_hat.theta1[1];
    let v = theta2 * s.d / ((s.d - s.c) * s.c);
    if !(v > 0.0 && v.is_finite()) {
        return Err(Error::Degenerate(format!("variance estimate V = {v} is not positive")));
    }
    let z = theta12 * (panel.n_particles() as f64 / v).sqrt();
    let mut reject_at = BTreeMap::new();
    for level in REPORTED_LEVELS.iter().copied().chain([alpha]) {
        reject_at.insert(format!("{level}"), z.abs() > critical_value(level));
    }
    Ok(TestReport {
        theta_hat: est.theta_hat,
        z,
        v,
        p_value: two_sided_p(z),
        alpha,
        reject: z.abs() > critical_value(alpha),
        reject_at,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Identifiability {
    pub i: f64,
    pub j: f64,
}

/// `I(θ)` and `J(θ₂)` as Riemann sums `(Δ/N) ΣΣ` over a panel drawn at `θ₀`.
pub fn identifiability_on_panel(
    model: &dyn InteractionModel,
    theta: &ThetaVector,
    theta0: &ThetaVector,
    panel: &TrajectoryPanel,
) -> Result<Identifiability> {
    theta.check_dims(model)?;
    theta0.check_dims(model)?;
    let n = panel.n_particles();
    let (mut b, mut b0, mut a, mut a0) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut i_sum, mut j_sum) = (0.0, 0.0);
    for j in 0..panel.n_intervals() {
        let x = panel.column(j);
        model.drift_all(&theta.theta1, x, &mut b);
        model.drift_all(&theta0.theta1, x, &mut b0);
        model.diffusion_all(&theta.theta2, x, &mut a);
        model.diffusion_all(&theta0.theta2, x, &mut a0);
        for k in 0..n {
            let c = a[k] * a[k];
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::NonPositiveDiffusion {
                    model: model.name().to_string(),
                    particle: k,
                    theta2: theta.theta2.clone(),
                    value: c,
                });
            }
            i_sum += (b[k] - b0[k]).powi(2) / c;
            j_sum += a0[k] * a0[k] / c + c.ln();
        }
    }
    let scale = panel.delta_n() / n as f64;
    Ok(Identifiability {
        i: i_sum * scale,
        j: j_sum * scale,
    })
}

/// Simulates one panel at `θ₀` and evaluates [`identifiability_on_panel`] on it.
pub fn identifiability_functionals(
    model: &dyn InteractionModel,
    theta: &ThetaVector,
    theta0: &ThetaVector,
    cfg: &SimConfig,
    grid: ObservationGrid,
) -> Result<Identifiability> {
    let panel = simulate_panel(model, theta0, cfg, &grid)?;
    identifiability_on_panel(model, theta, theta0, &panel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::Linear;
    use crate::model::FnModel;
    use crate::simulate::InitialLaw;

    fn panel() -> TrajectoryPanel {
        let grid = ObservationGrid::new(4, 0.25).unwrap();
        TrajectoryPanel::from_paths(
            &[
                vec![0.0, 0.3, 0.1, -0.2, 0.4],
                vec![1.0, 0.8, 1.1, 0.9, 1.3],
                vec![-0.5, -0.4, -0.9, -0.6, -0.2],
            ],
            grid,
        )
        .unwrap()
    }

    fn shift_model() -> FnModel {
        // ∂b/∂θ₁ = 1, c = θ₂
        FnModel::new("shift", 1, 1, |t, _, _| t[0], |t, _, _| t[0].sqrt())
    }

    #[test]
    fn constant_integrands() {
        let t2 = 1.7;
        let sig = estimate_sigma(&shift_model(), &ThetaVector::new(vec![0.3], vec![1.0]), &panel()).unwrap();
        assert!((sig.sigma1[0][0] - 2.0).abs() < 1e-9);
        let sig = estimate_sigma(&shift_model(), &ThetaVector::new(vec![0.3], vec![t2]), &panel()).unwrap();
        assert!((sig.sigma2[0][0] - 1.0 / (t2 * t2)).abs() < 1e-8);
    }

    #[test]
    fn scalar_standard_errors() {
        let t2: f64 = 1.3;
        let horizon = 5.0;
        let sig = SigmaEstimate {
            sigma1: vec![vec![2.0]],
            sigma2: vec![vec![horizon / (t2 * t2)]],
            theta: ThetaVector::new(vec![0.0], vec![t2]),
        };
        let se = standard_errors(&sig, 100, 0.1).unwrap();
        assert!((se[0] - 0.1).abs() < 1e-15);
        assert!((se[1] - (2.0 * t2 * t2 * 0.1 / (horizon * 100.0)).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn singular_block_is_rejected() {
        let sig = SigmaEstimate {
            sigma1: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            sigma2: vec![vec![1.0]],
            theta: ThetaVector::new(vec![0.0, 0.0], vec![1.0]),
        };
        assert!(matches!(
            standard_errors(&sig, 10, 0.1),
            Err(Error::SingularSigma { block: "sigma1", .. })
        ));
    }

    #[test]
    fn two_by_two_inverse() {
        let sig = SigmaEstimate {
            sigma1: vec![vec![4.0, 1.0], vec![1.0, 3.0]],
            sigma2: vec![vec![1.0]],
            theta: ThetaVector::new(vec![0.0, 0.0], vec![1.0]),
        };
        // inverse diagonal: 3/11, 4/11
        let se = standard_errors(&sig, 2, 0.5).unwrap();
        assert!((se[0] - (3.0_f64 / 11.0).sqrt()).abs() < 1e-14);
        assert!((se[1] - (4.0_f64 / 11.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn normal_functions() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        assert!((critical_value(0.05) - 1.959963984540054).abs() < 1e-11);
        assert!((normal_quantile(0.5)).abs() < 1e-12);
        assert_eq!(two_sided_p(0.0), 1.0);
        assert!((two_sided_p(1.959963984540054) - 0.05).abs() < 1e-14);
    }

    #[test]
    fn test_report_contents() {
        let grid = ObservationGrid::new(50, 0.1).unwrap();
        let cfg = SimConfig::new(20, 5.0, 0.01, 3, InitialLaw::Dirac { at: 1.0 });
        let p = simulate_panel(&Linear, &ThetaVector::new(vec![0.5, 1.0], vec![1.0]), &cfg, &grid).unwrap();
        let r = noninteraction_test(&p, 0.05).unwrap();
        assert!((r.p_value - two_sided_p(r.z)).abs() < 1e-15);
        assert_eq!(r.reject, r.z.abs() > critical_value(0.05));
        assert_eq!(r.reject_at.len(), 3);
        assert_eq!(r.reject_at["0.05"], r.reject);
        assert!(noninteraction_test(&p, 1.0).is_err());
    }

    #[test]
    fn constant_diffusion_j() {
        let model = FnModel::new("scale", 1, 1, |_, _, _| 0.0, |t, _, _| t[0].sqrt());
        let grid = ObservationGrid::new(10, 0.1).unwrap();
        let cfg = SimConfig::new(5, 1.0, 0.01, 1, InitialLaw::Dirac { at: 0.0 });
        let th0 = ThetaVector::new(vec![0.0], vec![1.0]);
        let r = identifiability_functionals(&model, &ThetaVector::new(vec![0.0], vec![2.0]), &th0, &cfg, grid)
            .unwrap();
        assert_eq!(r.i, 0.0);
        assert!((r.j - (0.5 + 2.0_f64.ln())).abs() < 1e-12);
    }
}
