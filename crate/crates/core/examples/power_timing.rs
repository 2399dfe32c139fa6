//! Times single power estimates across trial sizes.
//!
//! cargo run --release -p pilot-borrow --example power_timing -- 0.25 1.7 0.2 206 10000

use std::time::Instant;

use pilot_borrow::sim::{estimate_power, DesignScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<f64> = std::env::args()
        .skip(1)
        .map(|a| a.parse())
        .collect::<Result<_, _>>()?;
    let [p_c, rr, f, n, reps] = args[..] else {
        return Err("usage: power_timing P_C RR F N REPLICATES".into());
    };
    let scenario = DesignScenario::builder(p_c, rr)
        .pilot_fraction(f)
        .replicates(reps as u64)
        .build()?;
    let start = Instant::now();
    let est = estimate_power(&scenario, n as u64)?;
    println!(
        "n = {} power = {:.4} (se {:.4}) in {:.2?}",
        est.n_total,
        est.power,
        est.standard_error,
        start.elapsed()
    );
    Ok(())
}
