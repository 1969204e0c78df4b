//! Empirical-measure utilities over particle clouds.
//!
//! The empirical measure `(1/N) Σ δ_{x_i}` is never built as an object: every
//! routine here works directly on the atom positions.

use crate::error::{Error, Result};

/// Accumulations at or above this length switch to pairwise summation.
pub const PAIRWISE_THRESHOLD: usize = 10_000;

const PAIRWISE_BLOCK: usize = 128;

/// Positions of `N` particles at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState {
    positions: Vec<f64>,
    /// Model time of the snapshot (metadata only).
    pub time: f64,
}

impl ParticleState {
    pub fn new(positions: Vec<f64>) -> Result<Self> {
        Self::at_time(positions, 0.0)
    }

    pub fn at_time(positions: Vec<f64>, time: f64) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidArgument(
                "particle state needs at least one particle".into(),
            ));
        }
        if let Some(k) = positions.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "particle {k} has non-finite position {}",
                positions[k]
            )));
        }
        Ok(Self { positions, time })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn moment(&self, p: u32) -> f64 {
        moment(&self.positions, p)
    }

    pub fn w2_to_dirac0(&self) -> f64 {
        w2_to_dirac0(&self.positions)
    }
}

impl AsRef<[f64]> for ParticleState {
    fn as_ref(&self) -> &[f64] {
        &self.positions
    }
}

/// Sum with pairwise reduction for long inputs; plain left-to-right otherwise.
pub fn stable_sum(xs: &[f64]) -> f64 {
    if xs.len() < PAIRWISE_THRESHOLD {
        xs.iter().sum()
    } else {
        pairwise(xs)
    }
}

fn pairwise(xs: &[f64]) -> f64 {
    if xs.len() <= PAIRWISE_BLOCK {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise(&xs[..mid]) + pairwise(&xs[mid..])
    }
}

fn mean_of(n: usize, f: impl Fn(usize) -> f64) -> f64 {
    if n < PAIRWISE_THRESHOLD {
        (0..n).map(f).sum::<f64>() / n as f64
    } else {
        let terms: Vec<f64> = (0..n).map(f).collect();
        pairwise(&terms) / n as f64
    }
}

/// `(1/N) Σ x_i^p`.
pub fn moment(positions: &[f64], p: u32) -> f64 {
    assert!(p >= 1, "moment order must be at least 1");
    let p = p as i32;
    mean_of(positions.len(), |i| positions[i].powi(p))
}

/// `∫ K(x, y) μ(dy)` for the empirical measure of `positions`.
pub fn kernel_mean<K>(positions: &[f64], kernel: K, x: f64) -> Result<f64>
where
    K: Fn(f64, f64) -> f64,
{
    let value = mean_of(positions.len(), |j| kernel(x, positions[j]));
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::InvalidArgument(format!(
            "kernel mean at x = {x} is not finite"
        )))
    }
}

/// Wasserstein-2 distance between two equal-size, equal-weight clouds.
///
/// In one dimension the monotone (sorted) coupling is optimal. Squared
/// costs are summed in ascending order, so the result does not depend on
/// the argument order or on how either cloud is labelled.
pub fn w2_empirical(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            what: "w2_empirical cloud size",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let mut a_sorted = a.to_vec();
    a_sorted.sort_by(f64::total_cmp);
    let mut b_sorted = b.to_vec();
    b_sorted.sort_by(f64::total_cmp);

    let mut costs: Vec<f64> = a_sorted.iter().zip(&b_sorted).map(|(x, y)| (x - y) * (x - y)).collect();
    costs.sort_by(f64::total_cmp);
    Ok((stable_sum(&costs) / a.len() as f64).sqrt())
}

pub fn w2_to_dirac0(positions: &[f64]) -> f64 {
    moment(positions, 2).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn moments_of_small_clouds() {
        assert_eq!(moment(&[1.0, 3.0], 1), 2.0);
        assert_eq!(moment(&[1.0, 3.0], 2), 5.0);
        let c = 1.7;
        for p in 1..5 {
            assert!((moment(&[c; 7], p) - c.powi(p as i32)).abs() < 1e-12);
        }
    }

    #[test]
    fn kernel_means() {
        let xs = [1.0, 3.0];
        for x in [-2.0, 0.0, 5.0] {
            assert_eq!(kernel_mean(&xs, |_, y| y, x).unwrap(), 2.0);
        }
        assert_eq!(
            kernel_mean(&xs, |x, y| (x - y) * (x - y), 0.0).unwrap(),
            5.0
        );
        let v = kernel_mean(&[0.0, PI], |x, y| (x - y).sin(), 0.0).unwrap();
        assert!(v.abs() < 1e-15);
        assert!(kernel_mean(&xs, |_, _| f64::NAN, 0.0).is_err());
    }

    #[test]
    fn w2_examples() {
        let a = [0.3, -1.0, 2.5];
        assert_eq!(w2_empirical(&a, &a).unwrap(), 0.0);
        let w = w2_empirical(&[0.0, 1.0], &[0.0, 3.0]).unwrap();
        assert!((w - 2f64.sqrt()).abs() < 1e-15);
        let shifted: Vec<f64> = a.iter().map(|x| x - 0.75).collect();
        assert!((w2_empirical(&a, &shifted).unwrap() - 0.75).abs() < 1e-15);
        assert!(w2_empirical(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn w2_to_point_mass() {
        assert_eq!(w2_to_dirac0(&[0.0; 4]), 0.0);
        assert_eq!(w2_to_dirac0(&[1.0, 3.0]), 5f64.sqrt());
        assert_eq!(w2_to_dirac0(&[-2.0, 2.0]), 2.0);
    }

    #[test]
    fn pairwise_sum_matches_on_long_inputs() {
        let xs: Vec<f64> = (0..50_000).map(|k| 0.1 + (k % 7) as f64).collect();
        let exact: f64 = (0..50_000).map(|k| (k % 7) as f64).sum::<f64>() + 5000.0;
        assert!((stable_sum(&xs) - exact).abs() < 1e-8);
    }

    #[test]
    fn state_rejects_bad_input() {
        assert!(ParticleState::new(vec![]).is_err());
        assert!(ParticleState::new(vec![1.0, f64::INFINITY]).is_err());
        let s = ParticleState::new(vec![1.0, 3.0]).unwrap();
        assert_eq!(s.moment(2), 5.0);
    }
}
