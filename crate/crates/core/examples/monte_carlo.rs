//! Small Monte Carlo study: bias, RMSE and coverage per estimator.
//! The full tables come from `netdid replicate`.
//!
//!     cargo run --release --example monte_carlo

use netdid::dgp::SimConfig;
use netdid::sim::{run_simulation, summary_csv, EstimatorId, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = RunConfig {
        sim: SimConfig { n: 300, ..Default::default() },
        replications: 20,
        estimators: vec![EstimatorId::DrAdtt, EstimatorId::CanonicalTwfe, EstimatorId::DrAitt],
        ..Default::default()
    };
    let result = run_simulation(&cfg)?;
    print!("{}", summary_csv(&result));
    for a in &result.aggregates {
        println!("{:<15} {:?}  bias {:+.3}  rmse {:.3}  coverage {:.2}", a.estimator.label(), a.estimand, a.bias, a.rmse, a.coverage);
    }
    Ok(())
}
