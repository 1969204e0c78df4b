//! Rejection rates of the non-interaction test over a grid of interaction strengths.
//!
//! cargo run --release --example rejection_rates [replications] [seed]

use mkv::montecarlo::{rejection_rate_table, table2, TABLE2_THETA12};

fn main() -> mkv::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(200);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let report = rejection_rate_table(&table2(reps, seed), &TABLE2_THETA12, 0.05)?;
    print!("{}", report.to_csv());
    Ok(())
}
