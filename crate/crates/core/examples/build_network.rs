//! Spatial network construction, distance-ranked neighbourhoods and
//! distance shells.
//!
//!     cargo run --example build_network

use netdid::graph::{uniform_points, DistanceShell, Metric, NeighborhoodIndex, Network};
use netdid::rng::seeded;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut rng = seeded(7);
    let points = uniform_points(300, 15.0, &mut rng);
    let net = Network::from_points(&points, 1.0, Metric::Chebyshev)?;
    let components = net.components();
    println!("units {}, edges {}, components {}", net.n(), net.edge_count(), components.len());
    println!("largest component {}", components.iter().map(Vec::len).max().unwrap_or(0));

    // every third unit treated
    let d: Vec<u8> = (0..net.n()).map(|i| u8::from(i % 3 == 0)).collect();
    let index = NeighborhoodIndex::build(&net, &d, 5, 1, None)?;
    println!("unit 0 neighbours {:?}", index.neighbors(0));
    println!("unit 0 treatments {:?} (padding {:?})", index.treatment_vector(0), index.pad_mask(0));
    println!("units whose 5-neighbourhood leaves the 1-hop range: {}", index.range_violations());

    let shells = DistanceShell::build(&net, 3);
    for s in 0..=3 {
        println!("mean size of distance-{s} shell: {:.2}", shells.avg_shell_size(s));
    }

    let path = Network::from_edges(4, &[(0, 1), (1, 2), (2, 3)])?;
    println!("path graph distance 0→3: {}", path.dist(0, 3));
    Ok(())
}
