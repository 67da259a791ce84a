//! Export a simulated panel to CSV, then estimate from the files as the
//! `estimate` command does. Results match the in-memory estimates.
//!
//!     cargo run --release --example csv_round_trip

use netdid::dgp::generate_panel;
use netdid::io::{cmd_estimate, estimate_panel, write_edges_csv, write_panel_csv, write_points_csv};
use netdid::sim::{EstimatorId, RunConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("netdid_round_trip");
    std::fs::create_dir_all(&dir)?;
    let mut cfg = RunConfig { estimators: EstimatorId::PROPOSED.to_vec(), output_dir: dir.clone(), ..Default::default() };
    cfg.sim.n = 400;
    let sim = generate_panel(&cfg.sim)?;

    write_panel_csv(&dir.join("panel.csv"), &sim)?;
    write_points_csv(&dir.join("points.csv"), &sim.points)?;
    write_edges_csv(&dir.join("edges.csv"), &sim.panel.network)?;
    cfg.data.panel = Some(dir.join("panel.csv"));
    cfg.data.points = Some(dir.join("points.csv"));

    let from_files = cmd_estimate(&cfg)?;
    let in_memory = estimate_panel(&sim.panel, &cfg)?;
    for (a, b) in from_files.estimates.iter().zip(&in_memory.estimates) {
        println!("{:<9} files {:.10}  memory {:.10}  se {:.4}", a.estimator.key(), a.point, b.point, a.se);
    }
    println!("wrote {}", dir.join("estimates.json").display());
    Ok(())
}
