//! Scans the identifiability functionals around the true parameter.
//!
//! cargo run --example identifiability

use mkv::catalog::Linear;
use mkv::inference::identifiability_on_panel;
use mkv::{InitialLaw, ObservationGrid, SimConfig, ThetaVector};

fn main() -> mkv::Result<()> {
    let theta0 = ThetaVector::new(vec![0.5, 1.0], vec![1.0]);
    let cfg = SimConfig::new(500, 2.0, 0.01, 0, InitialLaw::Gaussian { mean: 1.0, sd: 1.0 });
    let panel = mkv::simulate_panel(&Linear, &theta0, &cfg, &ObservationGrid::from_horizon(2.0, 0.01)?)?;

    println!("I along theta11 (theta12 = 1):");
    for k in 0..=8 {
        let t = -0.5 + 0.25 * k as f64;
        let r = identifiability_on_panel(&Linear, &ThetaVector::new(vec![t, 1.0], vec![1.0]), &theta0, &panel)?;
        println!("  theta11 = {t:>5.2}  I = {:.5}", r.i);
    }
    println!("J along theta2:");
    for t2 in [0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0] {
        let r = identifiability_on_panel(&Linear, &ThetaVector::new(vec![0.5, 1.0], vec![t2]), &theta0, &panel)?;
        println!("  theta2 = {t2:>4}  J = {:.5}", r.j);
    }
    Ok(())
}
