//! Outward spillover (AITT): pairwise nuisance models, IPW and DR points,
//! and the data-generating truth under both neighbour scopes.
//!
//!     cargo run --release --example estimate_aitt

use netdid::dgp::{generate_panel, true_aitt_oracle, SimConfig};
use netdid::estimators::{dr_aitt, fit_nuisances, ipw_aitt, NuisanceConfig, PairScope};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig { n: 600, seed: 11, ..Default::default() };
    let sim = generate_panel(&cfg)?;
    let data = &sim.panel;

    for scope in [PairScope::WithinRange, PairScope::Neighborhood] {
        let nuis = fit_nuisances(data, &NuisanceConfig { pair_scope: scope, ..Default::default() })?;
        let truth = true_aitt_oracle(data, &sim.s, &cfg.spillover_steps, scope)?;
        let ipw = ipw_aitt(data, &nuis)?;
        let dr = dr_aitt(data, &nuis)?;
        println!("{scope:?}: {} pairs, {} isolated units", nuis.pairs.len(), dr.diagnostics.excluded_units);
        println!("  truth {truth:.4}  IPW {:.4}  DR {:.4}", ipw.point, dr.point);
    }
    Ok(())
}
