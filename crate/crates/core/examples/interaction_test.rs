//! Tests for absence of interaction on panels with and without mean attraction.
//!
//! cargo run --example interaction_test [seed]

use mkv::catalog::Linear;
use mkv::inference::noninteraction_test;
use mkv::{InitialLaw, ObservationGrid, SimConfig, ThetaVector};

fn main() -> mkv::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let grid = ObservationGrid::from_horizon(50.0, 0.1)?;
    let cfg = SimConfig::new(50, 50.0, 0.01, seed, InitialLaw::Dirac { at: 1.0 });
    for theta12 in [0.0, 0.1, 0.25, 0.5, 1.0] {
        let theta = ThetaVector::new(vec![0.5, theta12], vec![1.0]);
        let panel = mkv::simulate_panel(&Linear, &theta, &cfg, &grid)?;
        let r = noninteraction_test(&panel, 0.05)?;
        println!(
            "theta12 = {theta12:<5} estimate {:>7.3}  z = {:>7.2}  p = {:.4}  reject at 5%: {}",
            r.theta_hat.theta1[1], r.z, r.p_value, r.reject
        );
    }
    Ok(())
}
