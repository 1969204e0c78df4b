//! Monte Carlo RMSE/bias table for a preset design.
//!
//! cargo run --release --example rmse_table [table1|table3] [replications] [seed] [all]
//!
//! Without `all` only the first cell of the preset is run.

use mkv::montecarlo::{rmse_bias_table, run_replications, table1, table3};

fn main() -> mkv::Result<()> {
    let mut args = std::env::args().skip(1);
    let preset = args.next().unwrap_or_else(|| "table1".into());
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let mut cfg = match preset.as_str() {
        "table3" => table3(reps, seed),
        _ => table1(reps, seed),
    };
    if args.next().as_deref() != Some("all") {
        cfg.cells.truncate(1);
    }
    let t = std::time::Instant::now();
    let results = run_replications(&cfg)?;
    let report = rmse_bias_table(&results, &cfg.theta_true)?;
    print!("{}", report.to_csv());
    eprintln!("{reps} replications per cell in {:.1?}", t.elapsed());
    Ok(())
}
