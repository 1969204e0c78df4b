//! End-to-end acceptance checks. Each test prints one `PASS`/`FAIL` line.
//!
//! The lines go to stderr even when test output is captured.

use mkv::catalog::{builtin_model, Kuramoto, Linear, MeanFieldOu, OpinionSmooth, PearsonMeanField};
use mkv::contrast::{closed_form_linear, contrast_gradient, contrast_value, minimize_contrast, EstimateOptions};
use mkv::inference::{
    eigenvalues, estimate_sigma, identifiability_on_panel, standard_errors, SigmaEstimate,
};
use mkv::measure::w2_empirical;
use mkv::model::{FnModel, InteractionModel, ParamBox, ThetaVector};
use mkv::montecarlo::{
    linear_clt_replications, normality_check, rejection_rate_table, rmse_bias_table, run_replications, table1,
    table2, table3, Cell, MCReport,
};
use mkv::panel::{ObservationGrid, TrajectoryPanel};
use mkv::simulate::{coupling_error, simulate_coupled_independent, simulate_panel, InitialLaw, SimConfig};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 1;

/// Written to the stderr handle directly so the line survives output capture.
fn verdict(name: &str, pass: bool, detail: &str) {
    let line = format!("{} {name}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{name}: {detail}");
}

fn stat(report: &MCReport, cell: usize, component: &str) -> (f64, f64) {
    let c = report.cells[cell].component(component).unwrap();
    (c.rmse, c.bias)
}

fn within(v: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&v)
}

#[test]
fn linear_rmse_cell() {
    let mut cfg = table1(300, SEED);
    cfg.cells = vec![Cell::new(50, 50.0, 0.1)];
    let report = rmse_bias_table(&run_replications(&cfg).unwrap(), &cfg.theta_true).unwrap();
    let (r11, _) = stat(&report, 0, "theta11");
    let (r12, _) = stat(&report, 0, "theta12");
    let (_, b2) = stat(&report, 0, "theta2");
    let pass = within(r11, 0.07, 0.13) && within(r12, 0.11, 0.19) && within(b2, -0.15, -0.09);
    verdict(
        "linear model (N=50, T=50, delta=0.1), 300 replications",
        pass,
        &format!(
            "rmse theta11 = {r11:.4} in [0.07, 0.13], rmse theta12 = {r12:.4} in [0.11, 0.19], \
             bias theta2 = {b2:.4} in [-0.15, -0.09], failures = {}",
            report.cells[0].failures
        ),
    );
}

#[test]
fn linear_diffusion_rmse_shrinks_with_delta() {
    let mut cfg = table1(300, SEED);
    cfg.cells = vec![Cell::new(50, 50.0, 0.1), Cell::new(50, 50.0, 0.01)];
    let report = rmse_bias_table(&run_replications(&cfg).unwrap(), &cfg.theta_true).unwrap();
    let (coarse, _) = stat(&report, 0, "theta2");
    let (fine, _) = stat(&report, 1, "theta2");
    verdict(
        "diffusion RMSE at delta=0.01 vs 0.1, shared seeds",
        fine < 0.02 && fine < coarse,
        &format!("rmse theta2 = {fine:.5} (< 0.02) vs {coarse:.5}"),
    );
}

#[test]
fn noninteraction_rejection_rates() {
    let cfg = table2(200, SEED);
    let rep = rejection_rate_table(&cfg, &[0.0, 0.5, 1.0], 0.05).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for cell in &cfg.cells {
        let r = rep.row(0.0, cell.n_particles, cell.horizon).unwrap().rate_pct();
        pass &= within(r, 2.0, 8.0);
        detail.push(format!("null ({}, {}) {r:.1}%", cell.n_particles, cell.horizon));
    }
    let r = rep.row(0.5, 50, 50.0).unwrap().rate_pct();
    pass &= r >= 90.0;
    detail.push(format!("theta12=0.5 (50, 50) {r:.1}%"));
    for cell in &cfg.cells {
        let r = rep.row(1.0, cell.n_particles, cell.horizon).unwrap().rate_pct();
        pass &= r >= 99.0;
        detail.push(format!("theta12=1 ({}, {}) {r:.1}%", cell.n_particles, cell.horizon));
    }
    let mut monotone = true;
    for cell in &cfg.cells {
        let rows: Vec<_> = [0.0, 0.5, 1.0]
            .iter()
            .map(|&t| rep.row(t, cell.n_particles, cell.horizon).unwrap())
            .collect();
        for w in rows.windows(2) {
            monotone &= w[1].rate >= w[0].rate - 2.0 * w[0].se.max(w[1].se);
        }
    }
    detail.push(format!("monotone in theta12 within 2 se: {monotone}"));
    pass &= monotone;
    verdict("non-interaction test rejection rates, 200 replications", pass, &detail.join(", "));
}

#[test]
fn opinion_rmse_cell() {
    let mut cfg = table3(200, SEED);
    cfg.cells.truncate(1);
    let started = std::time::Instant::now();
    let report = rmse_bias_table(&run_replications(&cfg).unwrap(), &cfg.theta_true).unwrap();
    let (r11, _) = stat(&report, 0, "theta11");
    let (_, b12) = stat(&report, 0, "theta12");
    let (_, b2) = stat(&report, 0, "theta2");
    let pass = within(r11, 0.02, 0.05) && within(b12, -0.20, -0.08) && within(b2, -0.006, 0.0);
    verdict(
        "opinion model (N=50, T=50, delta=0.1), 200 replications",
        pass,
        &format!(
            "rmse theta11 = {r11:.4} in [0.02, 0.05], bias theta12 = {b12:.4} in [-0.20, -0.08], \
             bias theta2 = {b2:.5} in [-0.006, 0], failures = {}, {:.0?}",
            report.cells[0].failures,
            started.elapsed()
        ),
    );
}

#[test]
fn closed_form_and_numeric_agree() {
    let theta = ThetaVector::new(vec![0.5, 1.0], vec![1.0]);
    let grid = ObservationGrid::from_horizon(20.0, 0.1).unwrap();
    let bounds = Linear.default_box().unwrap();
    let numeric = EstimateOptions {
        force_numeric: true,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for seed in 0..20 {
        let cfg = SimConfig::new(30, 20.0, 0.01, 100 + seed, InitialLaw::Gaussian { mean: 1.0, sd: 0.5 });
        let panel = simulate_panel(&Linear, &theta, &cfg, &grid).unwrap();
        let cf = closed_form_linear(&panel).unwrap().theta_hat.to_flat();
        let nm = minimize_contrast(&Linear, &panel, &bounds, &numeric).unwrap().theta_hat.to_flat();
        for (a, b) in cf.iter().zip(&nm) {
            worst = worst.max((a - b).abs());
        }
    }
    verdict(
        "closed form vs Nelder-Mead on 20 linear panels",
        worst < 1e-6,
        &format!("max componentwise difference {worst:.2e} (< 1e-6)"),
    );
}

/// Fourth-order central difference of the contrast along component `k`.
fn fd_component(model: &dyn InteractionModel, theta: &[f64], panel: &TrajectoryPanel, k: usize) -> f64 {
    let h = 1e-4 * (1.0 + theta[k].abs());
    let f = |d: f64| {
        let mut t = theta.to_vec();
        t[k] += d;
        contrast_value(model, &ThetaVector::from_flat(&t, model.p1()).unwrap(), panel).unwrap()
    };
    (8.0 * (f(h) - f(-h)) - (f(2.0 * h) - f(-2.0 * h))) / (12.0 * h)
}

#[test]
fn gradient_matches_finite_differences() {
    let models: Vec<(Box<dyn InteractionModel>, Vec<f64>)> = vec![
        (Box::new(Kuramoto), vec![1.0, 0.5]),
        (Box::new(PearsonMeanField), vec![0.2, 0.5, 1.0, 0.3]),
        (Box::new(MeanFieldOu), vec![0.2, 0.5, 1.0, 0.4, 0.3]),
        (Box::new(Linear), vec![0.5, 1.0, 1.0]),
        (Box::new(OpinionSmooth), vec![-0.5, 2.0, 0.04]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for (model, truth) in &models {
        let p1 = model.p1();
        let grid = ObservationGrid::new(10, 0.1).unwrap();
        let cfg = SimConfig::new(8, 1.0, 0.01, 7, InitialLaw::Gaussian { mean: 0.0, sd: 0.5 });
        let panel = simulate_panel(model.as_ref(), &ThetaVector::from_flat(truth, p1).unwrap(), &cfg, &grid).unwrap();
        for _ in 0..10 {
            // perturb away from the data-generating value
            let theta: Vec<f64> = truth
                .iter()
                .enumerate()
                .map(|(k, &t)| {
                    let u: f64 = rng.random_range(0.2..0.6);
                    if k >= p1 {
                        t * (1.0 + u)
                    } else {
                        t + u * (1.0 + t.abs())
                    }
                })
                .collect();
            let tv = ThetaVector::from_flat(&theta, p1).unwrap();
            let g = contrast_gradient(model.as_ref(), &tv, &panel).unwrap();
            for (k, gk) in g.iter().enumerate() {
                let fd = fd_component(model.as_ref(), &theta, &panel, k);
                let scale = gk.abs().max(fd.abs()).max(1e-8);
                worst = worst.max((gk - fd).abs() / scale);
            }
            pairs += 1;
        }
    }
    verdict(
        "analytic contrast gradient vs finite differences",
        worst < 1e-6,
        &format!("{pairs} (model, theta) pairs, max relative error {worst:.2e} (< 1e-6)"),
    );
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

#[test]
fn w2_matches_exhaustive_matching() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let perms: Vec<Vec<Vec<usize>>> = (0..=6).map(permutations).collect();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=6);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let brute = perms[n]
            .iter()
            .map(|p| {
                let mut costs: Vec<f64> = (0..n).map(|i| (a[i] - b[p[i]]).powi(2)).collect();
                costs.sort_by(f64::total_cmp);
                (costs.iter().sum::<f64>() / n as f64).sqrt()
            })
            .fold(f64::INFINITY, f64::min);
        if w2_empirical(&a, &b).unwrap() != brute {
            mismatches += 1;
        }
    }
    verdict(
        "W2 equals exhaustive optimal matching",
        mismatches == 0,
        &format!("1000 random clouds with N <= 6, {mismatches} mismatches"),
    );
}

#[test]
fn asymptotic_normality_of_linear_estimator() {
    let cell = Cell::new(200, 10.0, 0.01);
    let mut cfg = table1(300, SEED);
    cfg.cells = vec![cell];
    let (est, sig) = linear_clt_replications(&cfg).unwrap();
    let ks = normality_check(&est, &cfg.theta_true.to_flat(), &sig, cell.n_particles, cell.delta_n).unwrap();
    let (p11, p2) = (ks[0].p_value, ks[2].p_value);

    // exact rate laws of the standard errors
    let s = &sig[0];
    let base = standard_errors(s, 100, 0.1).unwrap();
    let more = standard_errors(s, 400, 0.1).unwrap();
    let finer = standard_errors(s, 100, 0.025).unwrap();
    let rates = (0..2).all(|k| more[k] == base[k] / 2.0) && finer[2] == base[2] / 2.0 && finer[0] == base[0];

    verdict(
        "standardised linear estimates are N(0, 1) (N=200, T=10, delta=0.01, 300 replications)",
        p11 > 0.01 && p2 > 0.01 && rates && est.len() == 300,
        &format!(
            "KS p theta11 = {p11:.4}, KS p theta2 = {p2:.4} (> 0.01), se scaling exact = {rates}, \
             replications used = {}",
            est.len()
        ),
    );
}

#[test]
fn propagation_of_chaos_trend() {
    let theta = ThetaVector::new(vec![0.5, 1.0], vec![1.0]);
    let grid = ObservationGrid::from_horizon(5.0, 0.1).unwrap();
    let pool = 5000;
    let seeds = 0..50u64;
    let mut means = Vec::new();
    for n in [50, 100, 200] {
        let total: f64 = seeds
            .clone()
            .map(|seed| {
                let cfg = SimConfig::new(n, 5.0, 0.01, seed, InitialLaw::Dirac { at: 1.0 });
                let (x, y) = simulate_coupled_independent(&Linear, &theta, &cfg, &grid, pool).unwrap();
                coupling_error(&x, &y).unwrap()
            })
            .sum();
        means.push(total / seeds.clone().count() as f64);
    }
    verdict(
        "coupled distance to mean-field copies decreases in N",
        means[0] > means[1] && means[1] > means[2],
        &format!(
            "mean (X_T - Xbar_T)^2 over 50 seeds: N=50 {:.5}, N=100 {:.5}, N=200 {:.5}",
            means[0], means[1], means[2]
        ),
    );
}

/// Constant-diffusion model `b ≡ 0`, `c = θ₂`.
fn scale_model() -> FnModel {
    FnModel::new("scale", 1, 1, |_, _, _| 0.0, |t, _, _| t[0].sqrt())
}

#[test]
fn invariant_suite() {
    let mut failures = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    // W2 metric axioms
    for _ in 0..200 {
        let n = rng.random_range(1..=20);
        let mut cloud = || (0..n).map(|_| rng.random_range(-5.0..5.0)).collect::<Vec<f64>>();
        let (a, b, c) = (cloud(), cloud(), cloud());
        let ab = w2_empirical(&a, &b).unwrap();
        let ok = w2_empirical(&a, &a).unwrap() == 0.0
            && ab == w2_empirical(&b, &a).unwrap()
            && ab <= w2_empirical(&a, &c).unwrap() + w2_empirical(&c, &b).unwrap() + 1e-12;
        if !ok {
            failures.push("W2 metric axioms");
            break;
        }
    }

    // rmse² ≥ bias² on a small Monte Carlo report
    let mut cfg = table1(20, SEED);
    cfg.cells = vec![Cell::new(10, 5.0, 0.1)];
    let rep = rmse_bias_table(&run_replications(&cfg).unwrap(), &cfg.theta_true).unwrap();
    if rep.cells[0].components.iter().any(|c| c.rmse * c.rmse - c.bias * c.bias < -1e-12) {
        failures.push("rmse^2 >= bias^2");
    }

    // determinism: identical CSV bytes for identical seeds
    let theta = ThetaVector::new(vec![0.5, 1.0], vec![1.0]);
    let grid = ObservationGrid::from_horizon(1.0, 0.5).unwrap();
    let sim = SimConfig::new(4, 1.0, 0.01, 7, InitialLaw::Dirac { at: 1.0 });
    let a = simulate_panel(&Linear, &theta, &sim, &grid).unwrap().to_csv_string();
    let b = simulate_panel(&Linear, &theta, &sim, &grid).unwrap().to_csv_string();
    if a != b {
        failures.push("simulation determinism");
    }

    // Σ̂ symmetry and PSD at random in-box parameters for every differentiable catalog model
    let small = ObservationGrid::new(10, 0.1).unwrap();
    for name in mkv::catalog::MODEL_NAMES {
        let model = builtin_model(name).unwrap();
        if !model.differentiable() {
            continue;
        }
        let bounds: ParamBox = model.default_box().unwrap();
        for _ in 0..5 {
            let unit: Vec<f64> = (0..bounds.dim()).map(|_| rng.random_range(0.1..0.9)).collect();
            let th = ThetaVector::from_flat(&bounds.from_unit(&unit), model.p1()).unwrap();
            let cfg = SimConfig::new(6, 1.0, 0.01, 3, InitialLaw::Gaussian { mean: 0.0, sd: 1.0 });
            let Ok(panel) = simulate_panel(model.as_ref(), &th, &cfg, &small) else {
                continue;
            };
            let sig: SigmaEstimate = estimate_sigma(model.as_ref(), &th, &panel).unwrap();
            let sym = |m: &Vec<Vec<f64>>| (0..m.len()).all(|r| (0..m.len()).all(|c| m[r][c] == m[c][r]));
            let psd = |m: &Vec<Vec<f64>>| eigenvalues(m)[0] >= -1e-10;
            if !(sym(&sig.sigma1) && sym(&sig.sigma2) && psd(&sig.sigma1) && psd(&sig.sigma2)) {
                failures.push("sigma symmetric and PSD");
            }
        }
    }

    // I(θ₀) = 0, I ≥ 0 and J minimised at θ₀,₂ for the constant-diffusion model
    let model = scale_model();
    let theta0 = ThetaVector::new(vec![0.0], vec![1.0]);
    let sim = SimConfig::new(50, 1.0, 0.01, 11, InitialLaw::Dirac { at: 0.0 });
    let panel = simulate_panel(&model, &theta0, &sim, &ObservationGrid::new(100, 0.01).unwrap()).unwrap();
    let at0 = identifiability_on_panel(&model, &theta0, &theta0, &panel).unwrap();
    if at0.i != 0.0 {
        failures.push("I(theta0) = 0");
    }
    for k in 1..=40 {
        let t2 = 0.05 * k as f64;
        let lin = identifiability_on_panel(&Linear, &ThetaVector::new(vec![0.3, -0.2], vec![t2]), &theta, &panel)
            .unwrap();
        let r = identifiability_on_panel(&model, &ThetaVector::new(vec![0.0], vec![t2]), &theta0, &panel).unwrap();
        if r.j < at0.j - 1e-12 || lin.i < 0.0 {
            failures.push("J minimised at theta0_2, I >= 0");
            break;
        }
    }

    verdict(
        "invariants: W2 metric, rmse^2 >= bias^2, determinism, sigma PSD, I and J",
        failures.is_empty(),
        &if failures.is_empty() {
            "all hold".to_string()
        } else {
            format!("violated: {}", failures.join(", "))
        },
    );
}
