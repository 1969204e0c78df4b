//! Defines a model from closures and estimates it with the numeric minimizer.
//!
//! Drift `θ₁ (m₃ - x)` pulls each particle toward the third empirical moment
//! `m₃`; diffusion `√θ₂ (1 + x²)^¼`.
//!
//! cargo run --example custom_model [seed]

use mkv::contrast::{minimize_contrast, EstimateOptions};
use mkv::measure::moment;
use mkv::model::FnModel;
use mkv::{InitialLaw, ObservationGrid, ParamBox, SimConfig, ThetaVector};

fn main() -> mkv::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(11);
    let model = FnModel::new(
        "third_moment",
        1,
        1,
        |t1, i, xs| t1[0] * (moment(xs, 3) - xs[i]),
        |t2, i, xs| t2[0].sqrt() * (1.0 + xs[i] * xs[i]).powf(0.25),
    )
    .multiplicative_theta2();

    let theta = ThetaVector::new(vec![2.0], vec![0.3]);
    let cfg = SimConfig::new(60, 20.0, 0.01, seed, InitialLaw::Gaussian { mean: 0.0, sd: 0.5 });
    let panel = mkv::simulate_panel(&model, &theta, &cfg, &ObservationGrid::from_horizon(20.0, 0.05)?)?;

    let bounds = ParamBox::new(vec![0.0, 0.01], vec![10.0, 5.0])?;
    let est = minimize_contrast(&model, &panel, &bounds, &EstimateOptions::default())?;
    println!("true      {theta}");
    println!("estimate  {} via {:?}", est.theta_hat, est.method);
    Ok(())
}
