//! Simulates the smooth opinion-dynamics model and recovers its parameters
//! with the profiled contrast.
//!
//! cargo run --example opinion_dynamics [seed]

use std::time::Instant;

use mkv::catalog::OpinionSmooth;
use mkv::contrast::{minimize_contrast, EstimateOptions};
use mkv::{InitialLaw, InteractionModel, ObservationGrid, SimConfig, ThetaVector};

fn main() -> mkv::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let model = OpinionSmooth;
    let theta = ThetaVector::new(vec![-0.5, 2.0], vec![0.04]);
    let cfg = SimConfig::new(50, 50.0, 0.01, seed, InitialLaw::Gaussian { mean: 0.0, sd: 1.0 });
    let grid = ObservationGrid::from_horizon(50.0, 0.1)?;

    let t = Instant::now();
    let panel = mkv::simulate_panel(&model, &theta, &cfg, &grid)?;
    println!("simulated {} particles x {} steps in {:.2?}", panel.n_particles(), panel.n_intervals(), t.elapsed());

    let t = Instant::now();
    let bounds = model.default_box().expect("catalog models ship a box");
    let est = minimize_contrast(&model, &panel, &bounds, &EstimateOptions::default())?;
    println!("estimated in {:.2?} ({} iterations)", t.elapsed(), est.iterations);
    println!("true      {theta}");
    println!("estimate  {}", est.theta_hat);
    println!("contrast  {:.6}", est.contrast_at_opt);
    Ok(())
}
