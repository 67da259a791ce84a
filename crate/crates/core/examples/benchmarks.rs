//! Comparator estimators on one panel: exposure-mapping DID under oracle,
//! misspecified and coarse mappings, and interference-blind DID.
//!
//!     cargo run --release --example benchmarks

use netdid::benchmarks::{
    build_exposure, canonical_ipw_did, canonical_twfe, dr_did_benchmark, modified_twfe, xu_estimator, ExposureKind,
};
use netdid::dgp::{generate_panel, SimConfig};
use netdid::estimators::Method;
use netdid::rng::seeded;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sim = generate_panel(&SimConfig { n: 1000, seed: 3, ..Default::default() })?;
    let data = &sim.panel;
    println!("true ADTT {}", sim.truth.adtt);

    let mut rng = seeded(99);
    for kind in [ExposureKind::Oracle, ExposureKind::Mo, ExposureKind::Fm] {
        let mapping = build_exposure(kind, &sim.s, 0.3, &mut rng);
        for method in [Method::Ipw, Method::Dr] {
            let r = xu_estimator(data, &mapping, method)?;
            println!("exposure {kind:?} {method:?}: {:.4}", r.point);
        }
    }
    println!("canonical IPW:  {:.4}", canonical_ipw_did(data)?.point);
    println!("canonical TWFE: {:.4}", canonical_twfe(data)?.point);
    println!("DR-DID:         {:.4}", dr_did_benchmark(data)?.point);
    println!("modified TWFE:  {:.4}", modified_twfe(data)?.point);
    Ok(())
}
