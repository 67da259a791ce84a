//! Direct effect (ADTT) on one simulated panel: nuisance fits, IPW and DR
//! points, and network-HAC intervals.
//!
//!     cargo run --release --example estimate_adtt

use netdid::dgp::{generate_panel, SimConfig};
use netdid::estimators::{dr_adtt, fit_nuisances, ipw_adtt, NuisanceConfig};
use netdid::graph::DistanceShell;
use netdid::variance::{hac_variance, HacConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = generate_panel(&SimConfig { n: 800, ..Default::default() })?;
    let data = &sim.panel;
    let treated = data.d.iter().filter(|&&v| v == 1).count();
    println!("n = {}, treated = {treated}, true ADTT = {}", data.n(), sim.truth.adtt);

    let nuis = fit_nuisances(data, &NuisanceConfig::default())?;
    println!("trimmed probabilities: {}, converged: {}", nuis.trimmed, nuis.converged);

    let hac = HacConfig::default();
    let k = data.index.range();
    let shells = DistanceShell::build(&data.network, hac.shell_depth(k));
    for report in [ipw_adtt(data, &nuis)?, dr_adtt(data, &nuis)?] {
        let v = hac_variance(&report.influence, Some(&report.included), &shells, hac.bandwidth_for(k), hac.kernel, 0.05, report.point)?;
        println!(
            "{:?}: {:.4}  se {:.4}  95% CI [{:.4}, {:.4}]",
            report.method, report.point, v.se, v.ci.0, v.ci.1
        );
    }
    Ok(())
}
