//! Closed-form estimation of the linear model with plug-in standard errors,
//! checked against the numeric minimizer.
//!
//! cargo run --example linear_estimation [N] [T] [delta] [seed]

use mkv::catalog::Linear;
use mkv::contrast::{minimize_contrast, EstimateOptions};
use mkv::inference::{estimate_sigma, standard_errors};
use mkv::{InitialLaw, InteractionModel, ObservationGrid, SimConfig, ThetaVector};

fn arg<T: std::str::FromStr>(k: usize, default: T) -> T {
    std::env::args().nth(k).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> mkv::Result<()> {
    let (n, horizon, delta, seed) = (arg(1, 100usize), arg(2, 20.0), arg(3, 0.01), arg(4, 7u64));
    let theta = ThetaVector::new(vec![0.5, 1.0], vec![1.0]);
    let cfg = SimConfig::new(n, horizon, 0.01_f64.min(delta), seed, InitialLaw::Dirac { at: 1.0 });
    let panel = mkv::simulate_panel(&Linear, &theta, &cfg, &ObservationGrid::from_horizon(horizon, delta)?)?;

    let bounds = Linear.default_box().expect("box");
    let cf = minimize_contrast(&Linear, &panel, &bounds, &EstimateOptions::default())?;
    let numeric = EstimateOptions { force_numeric: true, ..Default::default() };
    let nm = minimize_contrast(&Linear, &panel, &bounds, &numeric)?;

    let sig = estimate_sigma(&Linear, &cf.theta_hat, &panel)?;
    let se = standard_errors(&sig, n, delta)?;

    println!("{:<8} {:>10} {:>10} {:>10} {:>12}", "", "truth", "closed", "se", "nelder-mead");
    for (k, name) in ["theta11", "theta12", "theta2"].iter().enumerate() {
        println!(
            "{name:<8} {:>10.4} {:>10.4} {:>10.4} {:>12.4}",
            theta.to_flat()[k],
            cf.theta_hat.to_flat()[k],
            se[k],
            nm.theta_hat.to_flat()[k]
        );
    }
    println!("contrast {:.6} (closed form) vs {:.6} (numeric, {} iterations)", cf.contrast_at_opt, nm.contrast_at_opt, nm.iterations);
    Ok(())
}
