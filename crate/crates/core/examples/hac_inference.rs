//! Network HAC variance: kernels, bandwidths and the autocovariance
//! profile across distance shells.
//!
//!     cargo run --release --example hac_inference

use netdid::dgp::{generate_panel, SimConfig};
use netdid::estimators::{dr_adtt, fit_nuisances, NuisanceConfig};
use netdid::graph::DistanceShell;
use netdid::variance::{hac_variance, Kernel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = generate_panel(&SimConfig { n: 500, rho0: 0.8, ..Default::default() })?;
    let data = &sim.panel;
    let report = dr_adtt(data, &fit_nuisances(data, &NuisanceConfig::default())?)?;
    let shells = DistanceShell::build(&data.network, 6);

    let wide = hac_variance(&report.influence, None, &shells, 6.0, Kernel::Bartlett, 0.05, report.point)?;
    println!("autocovariance by hop distance:");
    for (s, omega) in wide.autocovariances.iter().enumerate() {
        println!("  s = {s}: {omega:+.4}  (mean shell size {:.1})", shells.avg_shell_size(s as u32));
    }

    println!("kernel    b    se");
    for kernel in [Kernel::Bartlett, Kernel::Parzen] {
        for b in [0.0, 1.0, 2.0, 4.0, 6.0] {
            let v = hac_variance(&report.influence, None, &shells, b, kernel, 0.05, report.point)?;
            let flag = if v.floored { " (floored)" } else { "" };
            println!("{:<9} {b:<4} {:.4}{flag}", format!("{kernel:?}"), v.se);
        }
    }
    Ok(())
}
