//! Checks asymptotic normality of the linear-model estimator: each
//! replication is standardised by its plug-in standard error and the
//! standardised sample is compared with N(0, 1).
//!
//! cargo run --release --example clt_check [replications] [seed]

use mkv::montecarlo::{component_names, linear_clt_replications, normality_check, table1, Cell};

fn main() -> mkv::Result<()> {
    let mut args = std::env::args().skip(1);
    let reps = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(1);
    let cell = Cell::new(200, 10.0, 0.01);
    let mut cfg = table1(reps, seed);
    cfg.cells = vec![cell];

    let (est, sig) = linear_clt_replications(&cfg)?;
    let truth = cfg.theta_true.to_flat();
    let ks = normality_check(&est, &truth, &sig, cell.n_particles, cell.delta_n)?;
    for (name, r) in component_names(2, 1).iter().zip(ks) {
        println!("{name:8} KS = {:.4}  p = {:.4}", r.statistic, r.p_value);
    }
    Ok(())
}
