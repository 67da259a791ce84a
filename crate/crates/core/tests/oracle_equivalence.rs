//! Estimators and HAC variance against brute-force evaluation on tiny graphs.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use netdid::estimators::{dr_adtt, dr_aitt, ipw_adtt, ipw_aitt, NuisanceSet, PairScope, PairSet, PanelData};
use netdid::graph::{DistanceShell, NeighborhoodIndex, Network};
use netdid::variance::{hac_variance, Kernel};

const TOL: f64 = 1e-12;

/// Deterministic value in [0, 1) from a key (splitmix64 finaliser).
fn unit(key: u64) -> f64 {
    let mut z = key.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn prob(key: u64) -> f64 {
    0.1 + 0.8 * unit(key)
}

fn signed(key: u64) -> f64 {
    4.0 * unit(key) - 2.0
}

fn hops(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<Option<u32>>> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        if a != b && !adj[a].contains(&b) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    (0..n)
        .map(|src| {
            let mut d = vec![None; n];
            d[src] = Some(0);
            let mut q = VecDeque::from([src]);
            while let Some(u) = q.pop_front() {
                for &v in &adj[u] {
                    if d[v].is_none() {
                        d[v] = Some(d[u].unwrap() + 1);
                        q.push_back(v);
                    }
                }
            }
            d
        })
        .collect()
}

/// Reachable units ranked by (hops, id), first `l` kept.
fn nearest(dist: &[Vec<Option<u32>>], i: usize, l: usize) -> Vec<usize> {
    let mut c: Vec<(u32, usize)> = (0..dist.len()).filter(|&j| j != i).filter_map(|j| dist[i][j].map(|h| (h, j))).collect();
    c.sort();
    c.into_iter().take(l).map(|(_, j)| j).collect()
}

struct Instance {
    n: usize,
    edges: Vec<(usize, usize)>,
    d: Vec<u8>,
    y1: Vec<f64>,
    y2: Vec<f64>,
    l: usize,
    k: u32,
    tag: u64,
}

impl Instance {
    fn panel(&self) -> PanelData {
        let net = Network::from_edges(self.n, &self.edges).unwrap();
        let index = NeighborhoodIndex::build(&net, &self.d, self.l, self.k, None).unwrap();
        let z = DMatrix::from_fn(self.n, 1, |i, _| signed(self.tag ^ (i as u64 * 31 + 7)));
        PanelData::new(z, self.d.clone(), self.y1.clone(), self.y2.clone(), net, index).unwrap()
    }

    fn pi(&self, i: usize) -> f64 {
        prob(self.tag * 101 + i as u64)
    }
    fn e(&self, i: usize) -> f64 {
        prob(self.tag * 103 + i as u64 + 1000)
    }
    fn m(&self, i: usize, arm: u64) -> f64 {
        signed(self.tag * 107 + i as u64 + 2000 * (arm + 1))
    }
    fn e_pair(&self, i: usize, j: usize) -> f64 {
        prob(self.tag * 109 + (i * 10 + j) as u64 + 9000)
    }
    fn m_pair(&self, i: usize, j: usize, arm: u64) -> f64 {
        signed(self.tag * 113 + (i * 10 + j) as u64 + 20000 * (arm + 1))
    }

    fn nuisances(&self, data: &PanelData) -> NuisanceSet {
        let pairs = PairSet::build(data, PairScope::WithinRange);
        let p = pairs.pairs().to_vec();
        NuisanceSet {
            pi: (0..self.n).map(|i| self.pi(i)).collect(),
            e: (0..self.n).map(|i| self.e(i)).collect(),
            e_pair: p.iter().map(|&(i, j)| self.e_pair(i, j)).collect(),
            mu1: (0..self.n).map(|i| self.m(i, 1)).collect(),
            mu0: (0..self.n).map(|i| self.m(i, 0)).collect(),
            mu1_pair: p.iter().map(|&(i, j)| self.m_pair(i, j, 1)).collect(),
            mu0_pair: p.iter().map(|&(i, j)| self.m_pair(i, j, 0)).collect(),
            pairs,
            trim: (0.01, 0.99),
            trimmed: 0,
            converged: true,
        }
    }

    fn dy(&self, i: usize) -> f64 {
        self.y2[i] - self.y1[i]
    }

    /// Unit-level IPW and DR terms written out case by case.
    fn unit_terms(&self, i: usize, e: f64, dy: f64, m1: f64, m0: f64) -> (f64, f64) {
        let pi = self.pi(i);
        if self.d[i] == 1 {
            (dy / pi, (dy - m1) / pi + e * (m1 - m0) / pi)
        } else {
            let w = e / (1.0 - e) / pi;
            (-w * dy, -w * (dy - m0) + e * (m1 - m0) / pi)
        }
    }

    fn adtt(&self) -> (f64, f64) {
        let (mut ipw, mut dr) = (0.0, 0.0);
        for i in 0..self.n {
            let (a, b) = self.unit_terms(i, self.e(i), self.dy(i), self.m(i, 1), self.m(i, 0));
            ipw += a;
            dr += b;
        }
        (ipw / self.n as f64, dr / self.n as f64)
    }

    fn aitt(&self) -> Option<(f64, f64)> {
        let dist = hops(self.n, &self.edges);
        let (mut ipw, mut dr, mut count) = (0.0, 0.0, 0usize);
        for i in 0..self.n {
            let scoped: Vec<usize> =
                nearest(&dist, i, self.l).into_iter().filter(|&j| dist[i][j].unwrap() <= self.k).collect();
            if scoped.is_empty() {
                continue;
            }
            let (mut a, mut b) = (0.0, 0.0);
            for &j in &scoped {
                let t = self.unit_terms(i, self.e_pair(i, j), self.dy(j), self.m_pair(i, j, 1), self.m_pair(i, j, 0));
                a += t.0;
                b += t.1;
            }
            ipw += a / scoped.len() as f64;
            dr += b / scoped.len() as f64;
            count += 1;
        }
        (count > 0).then(|| (ipw / count as f64, dr / count as f64))
    }

    fn check(&self) {
        let data = self.panel();
        let nuis = self.nuisances(&data);
        let (ipw, dr) = self.adtt();
        let got = (ipw_adtt(&data, &nuis).unwrap().point, dr_adtt(&data, &nuis).unwrap().point);
        assert!((got.0 - ipw).abs() <= TOL, "ipw adtt {} vs {ipw} on {:?} d={:?}", got.0, self.edges, self.d);
        assert!((got.1 - dr).abs() <= TOL, "dr adtt {} vs {dr} on {:?} d={:?}", got.1, self.edges, self.d);
        match self.aitt() {
            Some((ipw, dr)) => {
                let a = ipw_aitt(&data, &nuis).unwrap().point;
                let b = dr_aitt(&data, &nuis).unwrap().point;
                assert!((a - ipw).abs() <= TOL, "ipw aitt {a} vs {ipw} on {:?} d={:?} L={} K={}", self.edges, self.d, self.l, self.k);
                assert!((b - dr).abs() <= TOL, "dr aitt {b} vs {dr} on {:?} d={:?} L={} K={}", self.edges, self.d, self.l, self.k);
            }
            None => {
                assert!(ipw_aitt(&data, &nuis).is_err());
                assert!(dr_aitt(&data, &nuis).is_err());
            }
        }
    }
}

fn all_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
}

fn families(n: usize) -> Vec<Vec<(usize, usize)>> {
    let path: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
    let mut cycle = path.clone();
    if n > 2 {
        cycle.push((n - 1, 0));
    }
    let star: Vec<_> = (1..n).map(|i| (0, i)).collect();
    let half = n / 2;
    let split: Vec<_> = all_pairs(n).into_iter().filter(|&(a, b)| (a < half) == (b < half)).collect();
    vec![Vec::new(), path, cycle, star, all_pairs(n), split]
}

fn run(n: usize, graphs: &[Vec<(usize, usize)>]) -> usize {
    let mut checked = 0;
    for (g, edges) in graphs.iter().enumerate() {
        for mask in 0u32..(1 << n) {
            let d: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            for (l, k) in [(1, 1), (2, 1), (3, 2), (n, 1), (n, n as u32)] {
                let tag = (n as u64) << 40 | (g as u64) << 20 | u64::from(mask) << 4 | (l as u64);
                let inst = Instance {
                    n,
                    edges: edges.clone(),
                    d: d.clone(),
                    y1: (0..n).map(|i| signed(tag + 50 + i as u64)).collect(),
                    y2: (0..n).map(|i| signed(tag + 60 + i as u64) * 3.0).collect(),
                    l: l.max(1),
                    k,
                    tag,
                };
                inst.check();
                checked += 1;
            }
        }
    }
    checked
}

pub fn check_every_graph_up_to_four_nodes() {
    let mut total = 0;
    for n in 1..=4 {
        let pairs = all_pairs(n);
        let graphs: Vec<Vec<(usize, usize)>> = (0u32..(1 << pairs.len()))
            .map(|m| pairs.iter().enumerate().filter(|(b, _)| (m >> b) & 1 == 1).map(|(_, &e)| e).collect())
            .collect();
        total += run(n, &graphs);
    }
    assert!(total > 5000);
}

pub fn check_graph_families_with_five_and_six_nodes() {
    for n in 5..=6 {
        run(n, &families(n));
    }
}

fn omega(kernel: Kernel, u: f64) -> f64 {
    match kernel {
        Kernel::Bartlett => {
            if u < 1.0 {
                1.0 - u
            } else {
                0.0
            }
        }
        Kernel::Parzen => {
            if u <= 0.5 {
                1.0 - 6.0 * u.powi(2) + 6.0 * u.powi(3)
            } else if u <= 1.0 {
                2.0 * (1.0 - u).powi(3)
            } else {
                0.0
            }
        }
    }
}

/// Plain double sum over all ordered pairs within the bandwidth.
fn brute_hac(phi: &[f64], edges: &[(usize, usize)], b: f64, kernel: Kernel) -> f64 {
    let n = phi.len();
    let dist = hops(n, edges);
    let mean = phi.iter().sum::<f64>() / n as f64;
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            let Some(s) = dist[i][j] else { continue };
            if f64::from(s) > b.floor() {
                continue;
            }
            let w = if b == 0.0 { 1.0 } else { omega(kernel, f64::from(s) / b) };
            v += w * (phi[i] - mean) * (phi[j] - mean);
        }
    }
    v / n as f64
}

pub fn check_hac_on_three_node_path_by_hand() {
    let net = Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
    let shells = DistanceShell::build(&net, 2);
    let r = hac_variance(&[1.0, 0.0, -1.0], None, &shells, 2.0, Kernel::Bartlett, 0.05, 0.0).unwrap();
    assert!((r.autocovariances[0] - 2.0 / 3.0).abs() <= TOL);
    assert!(r.autocovariances[1].abs() <= TOL);
    assert!((r.autocovariances[2] + 2.0 / 3.0).abs() <= TOL);
    assert!((r.v_hat - 2.0 / 3.0).abs() <= TOL);
}

pub fn check_hac_matches_double_sums_on_small_graphs() {
    let mut compared = 0;
    for n in 3..=5 {
        let pairs = all_pairs(n);
        for m in 0u32..(1 << pairs.len()) {
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(b, _)| (m >> b) & 1 == 1).map(|(_, &e)| e).collect();
            let net = Network::from_edges(n, &edges).unwrap();
            let shells = DistanceShell::build(&net, 4);
            let phi: Vec<f64> = (0..n).map(|i| signed(u64::from(m) * 17 + i as u64)).collect();
            for kernel in [Kernel::Bartlett, Kernel::Parzen] {
                for b in [0.0, 0.7, 1.0, 1.5, 2.0, 3.0, 4.0] {
                    let r = hac_variance(&phi, None, &shells, b, kernel, 0.05, 0.0).unwrap();
                    let expect = brute_hac(&phi, &edges, b, kernel);
                    if r.floored {
                        assert!(expect < r.autocovariances[0] * 1e-6 + TOL);
                    } else {
                        assert!((r.v_hat - expect).abs() <= TOL, "{} vs {expect} on {edges:?} b={b}", r.v_hat);
                    }
                    compared += 1;
                }
            }
        }
    }
    assert!(compared > 10_000);
}

#[test]
fn every_graph_up_to_four_nodes() {
    check_every_graph_up_to_four_nodes();
}

#[test]
fn graph_families_with_five_and_six_nodes() {
    check_graph_families_with_five_and_six_nodes();
}

#[test]
fn hac_on_three_node_path_by_hand() {
    check_hac_on_three_node_path_by_hand();
}

#[test]
fn hac_matches_double_sums_on_small_graphs() {
    check_hac_matches_double_sums_on_small_graphs();
}
