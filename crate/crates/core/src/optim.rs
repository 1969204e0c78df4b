//! Box-constrained Nelder–Mead with multi-start support.
//!
//! Trial points are projected onto the box before evaluation. A run stops
//! when the simplex diameter (largest vertex distance from the best vertex)
//! drops below `xtol · (1 + ‖best‖)` or the iteration budget is spent.

use crate::model::ParamBox;

#[derive(Debug, Clone)]
pub struct NelderMeadOptions {
    /// Relative simplex-diameter tolerance.
    pub xtol: f64,
    /// Iteration budget per dimension.
    pub max_iter_per_dim: usize,
    /// Initial simplex edge as a fraction of each box width.
    pub initial_step: f64,
    /// Maximum number of restarts from the terminal point.
    pub restarts: usize,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            xtol: 1e-8,
            max_iter_per_dim: 500,
            initial_step: 0.1,
            restarts: 2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Total order used everywhere: lower value first, NaN treated as +∞, ties by lexicographic x.
fn better(fa: f64, xa: &[f64], fb: f64, xb: &[f64]) -> bool {
    let fa = if fa.is_nan() { f64::INFINITY } else { fa };
    let fb = if fb.is_nan() { f64::INFINITY } else { fb };
    match fa.total_cmp(&fb) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => {
            for (a, b) in xa.iter().zip(xb) {
                match a.total_cmp(b) {
                    std::cmp::Ordering::Less => return true,
                    std::cmp::Ordering::Greater => return false,
                    _ => {}
                }
            }
            false
        }
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// One Nelder–Mead run from `x0` (projected onto the box).
fn run_once<F>(
    f: &mut F,
    x0: &[f64],
    bounds: &ParamBox,
    steps: &[f64],
    opts: &NelderMeadOptions,
) -> NelderMeadOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let d = x0.len();
    let max_iter = opts.max_iter_per_dim * d;
    let mut evaluations = 0usize;
    let mut eval = |x: &mut Vec<f64>, f: &mut F| {
        bounds.clamp(x);
        evaluations += 1;
        sanitize(f(x))
    };

    let mut start = x0.to_vec();
    let f0 = eval(&mut start, f);
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), f0)];
    for k in 0..d {
        let mut v = start.clone();
        let up = v[k] + steps[k];
        v[k] = if up <= bounds.upper()[k] { up } else { v[k] - steps[k] };
        let fv = eval(&mut v, f);
        simplex.push((v, fv));
    }

    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iterations = 0usize;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| {
            if better(a.1, &a.0, b.1, &b.0) {
                std::cmp::Ordering::Less
            } else if better(b.1, &b.0, a.1, &a.0) {
                std::cmp::Ordering::Greater
            } else {
                std::cmp::Ordering::Equal
            }
        });
        let best = &simplex[0].0;
        let diameter = simplex[1..]
            .iter()
            .map(|(v, _)| dist(v, best))
            .fold(0.0, f64::max);
        if diameter < opts.xtol * (1.0 + norm(best)) {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; d];
        for (v, _) in &simplex[..d] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / d as f64;
            }
        }
        let worst = simplex[d].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };

        let mut xr = along(alpha);
        let fr = eval(&mut xr, f);
        if fr < simplex[0].1 {
            let mut xe = along(gamma);
            let fe = eval(&mut xe, f);
            simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[d - 1].1 {
            simplex[d] = (xr, fr);
            continue;
        }
        let (mut xc, fc) = if fr < worst.1 {
            let mut xc = along(alpha * rho);
            let fc = eval(&mut xc, f);
            (xc, fc)
        } else {
            let mut xc = along(-rho);
            let fc = eval(&mut xc, f);
            (xc, fc)
        };
        if fc < worst.1.min(fr) {
            simplex[d] = (std::mem::take(&mut xc), fc);
            continue;
        }
        let best = simplex[0].0.clone();
        for (v, fv) in simplex.iter_mut().skip(1) {
            let mut s: Vec<f64> = best
                .iter()
                .zip(v.iter())
                .map(|(b, x)| b + sigma * (x - b))
                .collect();
            *fv = eval(&mut s, f);
            *v = s;
        }
    }
    let (x, value) = simplex.swap_remove(0);
    NelderMeadOutcome {
        x,
        value,
        iterations,
        evaluations,
        converged,
    }
}

/// Restarts from the terminal point of `out` with successively smaller
/// simplexes while that keeps improving the objective.
fn polish<F>(f: &mut F, mut out: NelderMeadOutcome, bounds: &ParamBox, opts: &NelderMeadOptions) -> NelderMeadOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let steps = initial_steps(bounds, opts);
    for r in 0..opts.restarts {
        let scale = 0.1f64.powi(r as i32 + 1);
        let small: Vec<f64> = steps.iter().map(|s| s * scale).collect();
        let again = run_once(f, &out.x.clone(), bounds, &small, opts);
        let improved = better(again.value, &again.x, out.value, &out.x);
        let iterations = out.iterations + again.iterations;
        let evaluations = out.evaluations + again.evaluations;
        if improved {
            out = NelderMeadOutcome {
                iterations,
                evaluations,
                ..again
            };
        } else {
            out.iterations = iterations;
            out.evaluations = evaluations;
            out.converged = out.converged && again.converged;
            break;
        }
    }
    out
}

fn initial_steps(bounds: &ParamBox, opts: &NelderMeadOptions) -> Vec<f64> {
    bounds.widths().iter().map(|w| w * opts.initial_step).collect()
}

/// Minimises `f` over the box from `x0`, restarting from the terminal point
/// with a fresh simplex while that keeps improving the objective.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], bounds: &ParamBox, opts: &NelderMeadOptions) -> NelderMeadOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let out = run_once(&mut f, x0, bounds, &initial_steps(bounds, opts), opts);
    polish(&mut f, out, bounds, opts)
}

/// Radical inverse of `k` in `base`.
fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while k > 0 {
        r += (k % base) as f64 * f;
        k /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

/// Box centre followed by `count - 1` Halton points mapped into the box.
pub fn multistart_points(bounds: &ParamBox, count: usize) -> Vec<Vec<f64>> {
    let d = bounds.dim();
    assert!(d <= PRIMES.len(), "too many dimensions for the Halton sequence");
    let mut pts = Vec::with_capacity(count);
    if count == 0 {
        return pts;
    }
    pts.push(bounds.center());
    for k in 1..count as u64 {
        let unit: Vec<f64> = PRIMES[..d].iter().map(|&b| radical_inverse(k, b)).collect();
        pts.push(bounds.from_unit(&unit));
    }
    pts
}

/// Result of a multi-start search.
#[derive(Debug, Clone)]
pub struct MultiStartOutcome {
    pub best: NelderMeadOutcome,
    /// Smallest objective value among the starting points.
    pub best_start_value: f64,
    pub starts_used: usize,
    pub iterations: usize,
    pub any_converged: bool,
}

pub fn multistart<F>(mut f: F, starts: &[Vec<f64>], bounds: &ParamBox, opts: &NelderMeadOptions) -> MultiStartOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(!starts.is_empty(), "need at least one start");
    let mut best: Option<NelderMeadOutcome> = None;
    let mut best_start_value = f64::INFINITY;
    let mut iterations = 0;
    let mut any_converged = false;
    let steps = initial_steps(bounds, opts);
    for s in starts {
        let mut s = s.clone();
        bounds.clamp(&mut s);
        best_start_value = best_start_value.min(sanitize(f(&s)));
        let out = run_once(&mut f, &s, bounds, &steps, opts);
        iterations += out.iterations;
        any_converged |= out.converged;
        let replace = match &best {
            None => true,
            Some(b) => better(out.value, &out.x, b.value, &b.x),
        };
        if replace {
            best = Some(out);
        }
    }
    // restarts only for the winning run
    let best = best.unwrap();
    let before = best.iterations;
    let best = polish(&mut f, best, bounds, opts);
    iterations += best.iterations - before;
    any_converged |= best.converged;
    MultiStartOutcome {
        best,
        best_start_value,
        starts_used: starts.len(),
        iterations,
        any_converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn finds_rosenbrock_minimum() {
        let b = ParamBox::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        let out = nelder_mead(rosenbrock, &[-1.2, 1.0], &b, &NelderMeadOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6, "{:?}", out.x);
    }

    #[test]
    fn respects_bounds() {
        let b = ParamBox::new(vec![2.0, -1.0], vec![3.0, 1.0]).unwrap();
        let out = nelder_mead(|x| x[0] * x[0] + x[1] * x[1], &[2.5, 0.5], &b, &NelderMeadOptions::default());
        assert!((out.x[0] - 2.0).abs() < 1e-9);
        assert!(out.x[1].abs() < 1e-6);
        assert!(b.contains(&out.x));
    }

    #[test]
    fn constant_offset_leaves_argmin() {
        let b = ParamBox::new(vec![-5.0, -5.0, -5.0], vec![5.0, 5.0, 5.0]).unwrap();
        let f = |x: &[f64]| (x[0] - 1.0).powi(2) + 2.0 * (x[1] + 0.5).powi(2) + (x[2] - x[0]).powi(2);
        let o = NelderMeadOptions::default();
        let a = nelder_mead(f, &[0.0; 3], &b, &o);
        let c = nelder_mead(|x| f(x) + 1234.5, &[0.0; 3], &b, &o);
        for (p, q) in a.x.iter().zip(&c.x) {
            assert!((p - q).abs() < 1e-6, "{:?} vs {:?}", a.x, c.x);
        }
        for (p, q) in c.x.iter().zip([1.0, -0.5, 1.0]) {
            assert!((p - q).abs() < 1e-6);
        }
    }

    #[test]
    fn halton_starts_fill_the_box() {
        let b = ParamBox::new(vec![0.0, 10.0], vec![1.0, 20.0]).unwrap();
        let pts = multistart_points(&b, 8);
        assert_eq!(pts.len(), 8);
        assert_eq!(pts[0], vec![0.5, 15.0]);
        assert_eq!(pts[1][0], 0.5);
        assert!((pts[1][1] - (10.0 + 10.0 / 3.0)).abs() < 1e-12);
        assert!(pts.iter().all(|p| b.contains(p)));
    }

    #[test]
    fn multistart_escapes_local_minimum() {
        // double well with the deeper well at x = 2
        let f = |x: &[f64]| (x[0] * x[0] - 4.0).powi(2) - x[0] + x[1] * x[1];
        let b = ParamBox::new(vec![-3.0, -1.0], vec![3.0, 1.0]).unwrap();
        let out = multistart(f, &multistart_points(&b, 8), &b, &NelderMeadOptions::default());
        assert!(out.best.x[0] > 1.9);
        assert!(out.best.value <= out.best_start_value);
    }
}
