//! Interference networks, hop distances and distance-ranked neighbourhoods.
//!
//! A [`Network`] stores an undirected adjacency structure together with the
//! full matrix of shortest-path hop counts, computed once by breadth-first
//! search from every unit. Everything downstream (neighbourhood ranking,
//! covariance construction in the simulator, HAC shells) reads from that
//! matrix.

use std::collections::VecDeque;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{invalid, Result};
use crate::rng::Rng;

/// Hop count used for pairs in different connected components.
pub const INFINITE: u32 = u32::MAX;

/// Distance used to connect points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Chebyshev,
    Euclidean,
}

impl Metric {
    pub fn distance(self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let dx = (a[0] - b[0]).abs();
        let dy = (a[1] - b[1]).abs();
        match self {
            Metric::Chebyshev => dx.max(dy),
            Metric::Euclidean => dx.hypot(dy),
        }
    }
}

/// Undirected, unweighted network with all-pairs hop distances.
#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    adjacency: Vec<Vec<usize>>,
    dist: Vec<u32>,
    points: Option<Vec<[f64; 2]>>,
    metric: Metric,
}

impl Network {
    /// Connects every pair of points whose `metric` distance is at most `radius`.
    pub fn from_points(points: &[[f64; 2]], radius: f64, metric: Metric) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("point list is empty"));
        }
        if !(radius > 0.0) {
            return Err(invalid(format!("radius must be positive, got {radius}")));
        }
        if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(invalid("point coordinates must be finite"));
        }
        let n = points.len();
        let adjacency: Vec<Vec<usize>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i && metric.distance(points[i], points[j]) <= radius)
                    .collect()
            })
            .collect();
        Ok(Self::assemble(adjacency, Some(points.to_vec()), metric))
    }

    /// Builds a network from an undirected edge list. Self-loops and
    /// duplicate edges are ignored.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if n == 0 {
            return Err(invalid("network must contain at least one unit"));
        }
        let mut adjacency = vec![Vec::new(); n];
        for &(a, b) in edges {
            if a >= n || b >= n {
                return Err(invalid(format!("edge ({a},{b}) references a unit outside [0,{n})")));
            }
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self::assemble(adjacency, None, Metric::Chebyshev))
    }

    fn assemble(adjacency: Vec<Vec<usize>>, points: Option<Vec<[f64; 2]>>, metric: Metric) -> Self {
        let n = adjacency.len();
        let mut dist = vec![INFINITE; n * n];
        dist.par_chunks_mut(n)
            .enumerate()
            .for_each(|(source, row)| bfs(&adjacency, source, row));
        Self { n, adjacency, dist, points, metric }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Adjacent units of `i`, ascending by id.
    pub fn adjacent(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn is_adjacent(&self, i: usize, j: usize) -> bool {
        self.dist(i, j) == 1
    }

    /// Hop distance, [`INFINITE`] when disconnected.
    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> u32 {
        self.dist[i * self.n + j]
    }

    pub fn points(&self) -> Option<&[[f64; 2]]> {
        self.points.as_deref()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges `(a, b)` with `a < b`, in lexicographic order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for (a, list) in self.adjacency.iter().enumerate() {
            out.extend(list.iter().filter(|&&b| a < b).map(|&b| (a, b)));
        }
        out
    }

    /// Connected components, each listed in ascending id order; components
    /// are ordered by their smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut out = Vec::new();
        for i in 0..self.n {
            if seen[i] {
                continue;
            }
            let members: Vec<usize> = (0..self.n).filter(|&j| self.dist(i, j) != INFINITE).collect();
            for &j in &members {
                seen[j] = true;
            }
            out.push(members);
        }
        out
    }

    /// Number of units within `range` hops of `i` (excluding `i`) with `d == 1`.
    pub fn count_within(&self, i: usize, range: u32, d: &[u8]) -> usize {
        (0..self.n)
            .filter(|&j| j != i && d[j] == 1 && self.dist(i, j) <= range)
            .count()
    }

    fn metric_gap(&self, i: usize, j: usize) -> f64 {
        match &self.points {
            Some(p) => self.metric.distance(p[i], p[j]),
            None => 0.0,
        }
    }
}

fn bfs(adjacency: &[Vec<usize>], source: usize, row: &mut [u32]) {
    let mut queue = VecDeque::new();
    row[source] = 0;
    queue.push_back(source);
    while let Some(u) = queue.pop_front() {
        let next = row[u] + 1;
        for &v in &adjacency[u] {
            if row[v] == INFINITE {
                row[v] = next;
                queue.push_back(v);
            }
        }
    }
}

/// Per-unit lists of the `L` nearest other units by hop distance, with the
/// aligned neighbour treatment vectors.
#[derive(Debug, Clone)]
pub struct NeighborhoodIndex {
    size: usize,
    range: u32,
    neighbors: Vec<Vec<usize>>,
    treatment: Vec<Vec<u8>>,
    range_violations: usize,
}

impl NeighborhoodIndex {
    /// Ranks every reachable `j != i` by (hop distance, metric distance when
    /// the network carries coordinates, id) and keeps the first `size`.
    ///
    /// With a `sampler`, the units tied at the cut-off hop distance compete
    /// for the remaining slots by sampling without replacement instead of by
    /// the secondary keys.
    pub fn build(
        net: &Network,
        treatment: &[u8],
        size: usize,
        range: u32,
        mut sampler: Option<&mut Rng>,
    ) -> Result<Self> {
        if size == 0 {
            return Err(invalid("neighbourhood size L must be at least 1"));
        }
        if range == 0 {
            return Err(invalid("interference range K must be at least 1"));
        }
        check_treatment(treatment, net.n())?;
        let n = net.n();
        let mut neighbors = Vec::with_capacity(n);
        for i in 0..n {
            let mut cand: Vec<usize> = (0..n).filter(|&j| j != i && net.dist(i, j) != INFINITE).collect();
            let key = |&j: &usize| (net.dist(i, j), net.metric_gap(i, j), j);
            cand.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite metric distance"));
            if cand.len() > size {
                if let Some(rng) = sampler.as_deref_mut() {
                    let cutoff = net.dist(i, cand[size - 1]);
                    let before = cand.iter().take_while(|&&j| net.dist(i, j) < cutoff).count();
                    let tied: Vec<usize> =
                        cand[before..].iter().copied().take_while(|&j| net.dist(i, j) == cutoff).collect();
                    let mut chosen: Vec<usize> =
                        sample(rng, tied.len(), size - before).into_iter().map(|k| tied[k]).collect();
                    chosen.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite metric distance"));
                    cand.truncate(before);
                    cand.extend(chosen);
                }
                cand.truncate(size);
            }
            neighbors.push(cand);
        }
        let range_violations = neighbors
            .iter()
            .enumerate()
            .filter(|(i, list)| list.iter().any(|&j| net.dist(*i, j) > range))
            .count();
        let mut index = Self { size, range, neighbors, treatment: Vec::new(), range_violations };
        index.set_treatment(treatment)?;
        Ok(index)
    }

    /// Refreshes the aligned treatment vectors for a new assignment.
    pub fn set_treatment(&mut self, treatment: &[u8]) -> Result<()> {
        check_treatment(treatment, self.neighbors.len())?;
        self.treatment = self
            .neighbors
            .iter()
            .map(|list| {
                let mut v = vec![0u8; self.size];
                for (slot, &j) in list.iter().enumerate() {
                    v[slot] = treatment[j];
                }
                v
            })
            .collect();
        Ok(())
    }

    /// `L`.
    pub fn size(&self) -> usize {
        self.size
    }

    /// `K`.
    pub fn range(&self) -> u32 {
        self.range
    }

    pub fn n(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    /// Neighbour treatments of `i`, zero-padded to length `L`.
    pub fn treatment_vector(&self, i: usize) -> &[u8] {
        &self.treatment[i]
    }

    /// `true` for slots beyond the available neighbours.
    pub fn pad_mask(&self, i: usize) -> Vec<bool> {
        (0..self.size).map(|k| k >= self.neighbors[i].len()).collect()
    }

    /// Members of `N_i` within hop distance `K` of `i`, in rank order.
    pub fn within_range<'a>(&'a self, net: &'a Network, i: usize) -> impl Iterator<Item = usize> + 'a {
        self.neighbors[i].iter().copied().filter(move |&j| net.dist(i, j) <= self.range)
    }

    /// Units whose `L`-neighbourhood reaches beyond the interference range.
    pub fn range_violations(&self) -> usize {
        self.range_violations
    }
}

fn check_treatment(treatment: &[u8], n: usize) -> Result<()> {
    if treatment.len() != n {
        return Err(invalid(format!("treatment vector has length {}, expected {n}", treatment.len())));
    }
    if treatment.iter().any(|&d| d > 1) {
        return Err(invalid("treatment must be binary"));
    }
    Ok(())
}

/// Units at exact hop distance `s` from each unit, for `s = 0..=s_max`.
#[derive(Debug, Clone)]
pub struct DistanceShell {
    shells: Vec<Vec<Vec<usize>>>,
}

impl DistanceShell {
    pub fn build(net: &Network, s_max: u32) -> Self {
        let n = net.n();
        let depth = s_max as usize + 1;
        let per_unit: Vec<Vec<Vec<usize>>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rings = vec![Vec::new(); depth];
                for j in 0..n {
                    let d = net.dist(i, j);
                    if d <= s_max {
                        rings[d as usize].push(j);
                    }
                }
                rings
            })
            .collect();
        let mut shells = vec![Vec::with_capacity(n); depth];
        for rings in per_unit {
            for (s, ring) in rings.into_iter().enumerate() {
                shells[s].push(ring);
            }
        }
        Self { shells }
    }

    pub fn s_max(&self) -> u32 {
        (self.shells.len() - 1) as u32
    }

    /// `N^∂(i; s)`; empty for `s` beyond the computed depth.
    pub fn shell(&self, s: u32, i: usize) -> &[usize] {
        self.shells.get(s as usize).map_or(&[], |ring| ring[i].as_slice())
    }

    /// Mean shell size `(1/n) Σ_i |N^∂(i; s)|`.
    pub fn avg_shell_size(&self, s: u32) -> f64 {
        match self.shells.get(s as usize) {
            Some(ring) if !ring.is_empty() => {
                ring.iter().map(Vec::len).sum::<usize>() as f64 / ring.len() as f64
            }
            _ => 0.0,
        }
    }
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    src: usize,
    dst: usize,
}

#[derive(Debug, Deserialize)]
struct PointRow {
    id: usize,
    x: f64,
    y: f64,
}

/// Reads an edge-list CSV with header `src,dst`.
pub fn read_edges_csv(path: &Path, n: usize) -> Result<Network> {
    let mut reader = csv::Reader::from_path(path)?;
    let edges = reader
        .deserialize::<EdgeRow>()
        .map(|row| row.map(|r| (r.src, r.dst)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Network::from_edges(n, &edges)
}

/// Reads a points CSV with header `id,x,y`; ids must be a permutation of `0..n`.
pub fn read_points_csv(path: &Path) -> Result<Vec<[f64; 2]>> {
    let mut reader = csv::Reader::from_path(path)?;
    let rows = reader.deserialize::<PointRow>().collect::<std::result::Result<Vec<_>, _>>()?;
    let mut points = vec![None; rows.len()];
    for r in rows {
        match points.get_mut(r.id) {
            Some(slot @ None) => *slot = Some([r.x, r.y]),
            _ => return Err(invalid(format!("point id {} is duplicated or out of range", r.id))),
        }
    }
    Ok(points.into_iter().map(|p| p.expect("all ids filled")).collect())
}

/// Uniform locations on `[0, side]²`.
pub fn uniform_points(n: usize, side: f64, rng: &mut Rng) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side]).collect()
}
