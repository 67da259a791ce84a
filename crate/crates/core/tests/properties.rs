use nalgebra::{DMatrix, DVector};
use netdid::dgp::{generate_panel, SimConfig};
use netdid::estimators::{dr_adtt, dr_aitt, fit_nuisances, ipw_adtt, ipw_aitt, NuisanceConfig, PanelData};
use netdid::graph::{DistanceShell, NeighborhoodIndex, Network, INFINITE};
use netdid::numerics::{cholesky, fit_logistic, fit_ols, logistic_gradient, LogisticOptions};
use netdid::variance::{hac_variance, Kernel};
use proptest::prelude::*;

fn edge_strategy(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (1..=max_n).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..2 * n)))
}

fn floyd_warshall(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<u64>> {
    let inf = u64::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b) in edges {
        if a != b {
            d[a][b] = 1;
            d[b][a] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

proptest! {
    #[test]
    fn bfs_matches_floyd_warshall((n, edges) in edge_strategy(8)) {
        let net = Network::from_edges(n, &edges).unwrap();
        let fw = floyd_warshall(n, &edges);
        for i in 0..n {
            for j in 0..n {
                let expect = if fw[i][j] >= u64::MAX / 4 { INFINITE } else { fw[i][j] as u32 };
                prop_assert_eq!(net.dist(i, j), expect);
                prop_assert_eq!(net.dist(i, j), net.dist(j, i));
            }
        }
    }

    #[test]
    fn shells_partition_components((n, edges) in edge_strategy(8)) {
        let net = Network::from_edges(n, &edges).unwrap();
        let shells = DistanceShell::build(&net, n as u32);
        for comp in net.components() {
            for &i in &comp {
                let mut seen: Vec<usize> = (0..=n as u32).flat_map(|s| shells.shell(s, i).to_vec()).collect();
                let total = seen.len();
                seen.sort_unstable();
                seen.dedup();
                prop_assert_eq!(seen.len(), total);
                let mut expect = comp.clone();
                expect.sort_unstable();
                prop_assert_eq!(seen, expect);
            }
        }
    }

    #[test]
    fn neighbourhoods_are_distance_sorted((n, edges) in edge_strategy(8), l in 1usize..5) {
        let net = Network::from_edges(n, &edges).unwrap();
        let d = vec![0u8; n];
        let index = NeighborhoodIndex::build(&net, &d, l, 1, None).unwrap();
        for i in 0..n {
            let nb = index.neighbors(i);
            prop_assert!(nb.len() <= l);
            prop_assert!(!nb.contains(&i));
            prop_assert!(nb.iter().all(|&j| net.dist(i, j) != INFINITE));
            prop_assert!(nb.windows(2).all(|w| net.dist(i, w[0]) <= net.dist(i, w[1])));
            let reachable = (0..n).filter(|&j| j != i && net.dist(i, j) != INFINITE).count();
            prop_assert_eq!(nb.len(), reachable.min(l));
        }
    }

    #[test]
    fn hac_is_invariant_to_shifts(
        (n, edges) in edge_strategy(7),
        phi in prop::collection::vec(-5.0f64..5.0, 7),
        shift in -10.0f64..10.0,
        b in 0.0f64..4.0,
    ) {
        let net = Network::from_edges(n, &edges).unwrap();
        let shells = DistanceShell::build(&net, 4);
        let phi = &phi[..n];
        let moved: Vec<f64> = phi.iter().map(|v| v + shift).collect();
        let a = hac_variance(phi, None, &shells, b, Kernel::Bartlett, 0.05, 0.0).unwrap();
        let c = hac_variance(&moved, None, &shells, b, Kernel::Bartlett, 0.05, 0.0).unwrap();
        prop_assert!((a.v_hat - c.v_hat).abs() <= 1e-9 * (1.0 + a.v_hat.abs()));
    }

    #[test]
    fn disconnected_hac_is_plain_variance(phi in prop::collection::vec(-5.0f64..5.0, 1..8), b in 0.0f64..3.0) {
        let net = Network::from_edges(phi.len(), &[]).unwrap();
        let shells = DistanceShell::build(&net, 3);
        let r = hac_variance(&phi, None, &shells, b, Kernel::Parzen, 0.05, 0.0).unwrap();
        prop_assert_eq!(r.v_hat, r.autocovariances[0].max(r.autocovariances[0] * 1e-6));
        prop_assert!(r.autocovariances[1..].iter().all(|&o| o == 0.0));
    }

    #[test]
    fn ols_residuals_are_orthogonal(rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 12..40), noise in prop::collection::vec(-1.0f64..1.0, 40)) {
        let n = rows.len();
        let x = DMatrix::from_fn(n, 4, |i, c| if c == 0 { 1.0 } else { rows[i][c] });
        let y: Vec<f64> = (0..n).map(|i| 0.5 + rows[i][1] - 2.0 * rows[i][2] + noise[i]).collect();
        let fit = fit_ols(&x, &y).unwrap();
        let resid = DVector::from_column_slice(&y) - &x * DVector::from_column_slice(&fit.coefficients);
        let scale = x.norm() * (1.0 + resid.norm());
        prop_assert!((x.transpose() * resid).amax() <= 1e-8 * scale);
    }

    #[test]
    fn cholesky_reconstructs_spd(entries in prop::collection::vec(-2.0f64..2.0, 25)) {
        let a = DMatrix::from_column_slice(5, 5, &entries);
        let m = &a * a.transpose() + DMatrix::identity(5, 5) * 0.1;
        let f = cholesky(&m, 0.0).unwrap();
        prop_assert!((&f.lower * f.lower.transpose() - &m).amax() <= 1e-8);
    }
}

#[test]
fn hac_is_monotone_for_nonnegative_autocovariances() {
    // every pair on the path has the same sign, so all Ω(s) ≥ 0
    let net = Network::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 4)]).unwrap();
    let shells = DistanceShell::build(&net, 4);
    let phi = [2.0, 2.0, 2.0, -3.0, -3.0];
    let profile = hac_variance(&phi, None, &shells, 4.0, Kernel::Bartlett, 0.05, 0.0).unwrap();
    if profile.autocovariances.iter().all(|&o| o >= 0.0) {
        let mut last = 0.0;
        for b in [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0] {
            let v = hac_variance(&phi, None, &shells, b, Kernel::Bartlett, 0.05, 0.0).unwrap().v_hat;
            assert!(v >= last - 1e-15);
            last = v;
        }
    }
    // a fixture where the autocovariances are nonnegative by construction
    let net = Network::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
    let shells = DistanceShell::build(&net, 2);
    let phi = [1.0, 1.0, -1.0, -1.0];
    let mut last = 0.0;
    for b in [0.0, 1.0, 1.5, 2.0] {
        let v = hac_variance(&phi, None, &shells, b, Kernel::Bartlett, 0.05, 0.0).unwrap().v_hat;
        assert!(v >= last);
        last = v;
    }
}

#[test]
fn logistic_gradient_vanishes_at_optimum() {
    let mut rng = netdid::rng::seeded(5);
    use rand::Rng as _;
    let n = 400;
    let x = DMatrix::from_fn(n, 3, |_, c| if c == 0 { 1.0 } else { rng.random::<f64>() * 4.0 - 2.0 });
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let p = netdid::numerics::sigmoid(0.3 + x[(i, 1)] - 0.7 * x[(i, 2)]);
            f64::from(u8::from(rng.random::<f64>() < p))
        })
        .collect();
    let opts = LogisticOptions::default();
    let fit = fit_logistic(&x, &y, opts).unwrap();
    assert!(fit.converged);
    assert!(logistic_gradient(&x, &y, &fit.coefficients, opts.ridge).norm() <= 1e-8);
}

fn permuted(data: &PanelData, points: &[[f64; 2]], perm: &[usize], radius: f64) -> PanelData {
    // new unit k is old unit perm[k]
    let n = data.n();
    let pts: Vec<[f64; 2]> = perm.iter().map(|&o| points[o]).collect();
    let net = Network::from_points(&pts, radius, data.network.metric()).unwrap();
    let d: Vec<u8> = perm.iter().map(|&o| data.d[o]).collect();
    let index = NeighborhoodIndex::build(&net, &d, data.index.size(), data.index.range(), None).unwrap();
    let z = DMatrix::from_fn(n, data.p(), |k, c| data.z[(perm[k], c)]);
    let y1 = perm.iter().map(|&o| data.y1[o]).collect();
    let y2 = perm.iter().map(|&o| data.y2[o]).collect();
    PanelData::new(z, d, y1, y2, net, index).unwrap()
}

#[test]
fn estimates_do_not_depend_on_unit_labels() {
    let cfg = SimConfig { n: 250, seed: 21, ..Default::default() };
    let sim = generate_panel(&cfg).unwrap();
    let n = sim.panel.n();
    // a fixed pseudo-random permutation
    let mut perm: Vec<usize> = (0..n).collect();
    perm.sort_by_key(|&i| (i * 7919 + 13) % n);
    let other = permuted(&sim.panel, &sim.points, &perm, cfg.adjacency_radius);
    let nc = NuisanceConfig::default();
    let (a, b) = (fit_nuisances(&sim.panel, &nc).unwrap(), fit_nuisances(&other, &nc).unwrap());
    let pairs = [
        (ipw_adtt(&sim.panel, &a).unwrap().point, ipw_adtt(&other, &b).unwrap().point),
        (dr_adtt(&sim.panel, &a).unwrap().point, dr_adtt(&other, &b).unwrap().point),
        (ipw_aitt(&sim.panel, &a).unwrap().point, ipw_aitt(&other, &b).unwrap().point),
        (dr_aitt(&sim.panel, &a).unwrap().point, dr_aitt(&other, &b).unwrap().point),
    ];
    for (x, y) in pairs {
        assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
    }
}

#[test]
fn points_equal_mean_influence() {
    let sim = generate_panel(&SimConfig { n: 150, seed: 8, ..Default::default() }).unwrap();
    let nuis = fit_nuisances(&sim.panel, &NuisanceConfig::default()).unwrap();
    for r in [
        ipw_adtt(&sim.panel, &nuis).unwrap(),
        dr_adtt(&sim.panel, &nuis).unwrap(),
        ipw_aitt(&sim.panel, &nuis).unwrap(),
        dr_aitt(&sim.panel, &nuis).unwrap(),
    ] {
        let sum: f64 = r.influence.iter().zip(&r.included).filter(|(_, &b)| b).map(|(v, _)| v).sum();
        assert_eq!(r.point, sum / r.n as f64);
    }
}
