//! Simulates a Kuramoto panel and stores it as CSV and as binary MKVP.
//!
//! cargo run --example panel_io [out_dir]

use std::path::PathBuf;

use mkv::catalog::Kuramoto;
use mkv::{InitialLaw, ObservationGrid, SimConfig, ThetaVector, TrajectoryPanel};

fn main() -> mkv::Result<()> {
    let dir: PathBuf = std::env::args().nth(1).map(Into::into).unwrap_or_else(std::env::temp_dir);
    let theta = ThetaVector::new(vec![1.5], vec![0.3]);
    let cfg = SimConfig::new(8, 2.0, 0.01, 42, InitialLaw::Uniform { lo: -3.0, hi: 3.0 });
    let grid = ObservationGrid::from_horizon(2.0, 0.1)?;
    let panel = mkv::simulate_panel(&Kuramoto, &theta, &cfg, &grid)?;

    let csv = dir.join("kuramoto.csv");
    let bin = dir.join("kuramoto.mkvp");
    panel.write_csv(&csv)?;
    panel.write_mkvp(&bin)?;

    let a = TrajectoryPanel::load(&csv)?;
    let b = TrajectoryPanel::load(&bin)?;
    assert_eq!(a.time_major(), panel.time_major());
    assert_eq!(b.time_major(), panel.time_major());
    println!("wrote {} and {}", csv.display(), bin.display());
    println!(
        "{} particles, {} intervals of {}, {} / {} bytes",
        panel.n_particles(),
        panel.n_intervals(),
        panel.delta_n(),
        std::fs::metadata(&csv)?.len(),
        std::fs::metadata(&bin)?.len()
    );
    println!("particle 0 path: {:.3?}", a.path(0));
    Ok(())
}
