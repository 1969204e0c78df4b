//! Coupling distance between particles and their mean-field copies as N grows.
//!
//! The copies are the first N particles of a large system driven by the same
//! Brownian motions, standing in for the McKean–Vlasov limit.
//!
//! cargo run --example propagation_of_chaos [seeds]

use mkv::catalog::Linear;
use mkv::measure::w2_empirical;
use mkv::simulate::{coupling_error, simulate_coupled_independent};
use mkv::{InitialLaw, ObservationGrid, SimConfig, ThetaVector};

fn main() -> mkv::Result<()> {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let theta = ThetaVector::new(vec![0.5, 1.0], vec![1.0]);
    let grid = ObservationGrid::from_horizon(5.0, 0.1)?;
    println!("{:>5} {:>14} {:>14}", "N", "E|X - Xbar|^2", "W2(mu, mu_mf)");
    for n in [25, 50, 100, 200, 400] {
        let (mut coupled, mut w2) = (0.0, 0.0);
        for seed in 0..seeds {
            let cfg = SimConfig::new(n, 5.0, 0.01, seed, InitialLaw::Gaussian { mean: 1.0, sd: 1.0 });
            let (inter, mf) = simulate_coupled_independent(&Linear, &theta, &cfg, &grid, 2000)?;
            coupled += coupling_error(&inter, &mf)?;
            let j = grid.n();
            w2 += w2_empirical(inter.column(j), mf.column(j))?;
        }
        println!("{n:>5} {:>14.6} {:>14.6}", coupled / seeds as f64, w2 / seeds as f64);
    }
    Ok(())
}
