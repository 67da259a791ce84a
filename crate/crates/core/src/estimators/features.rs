use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PanelData;
use crate::error::{invalid, Result};

/// Which members of `N_i` form the AITT pairs `(i, j)` and the conditioning
/// sets `N_j \ {i}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScope {
    /// Members of the `L`-neighbourhood that lie within the interference range `K`.
    #[default]
    WithinRange,
    /// The whole `L`-neighbourhood.
    Neighborhood,
}

/// The `(i, j)` pairs entering the AITT estimators, grouped by `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pairs: Vec<(usize, usize)>,
    start: Vec<usize>,
    scope: PairScope,
}

impl PairSet {
    pub fn build(data: &PanelData, scope: PairScope) -> Self {
        let n = data.n();
        let mut pairs = Vec::new();
        let mut start = Vec::with_capacity(n + 1);
        for i in 0..n {
            start.push(pairs.len());
            pairs.extend(scoped(data, scope, i).map(|j| (i, j)));
        }
        start.push(pairs.len());
        Self { pairs, start, scope }
    }

    pub fn scope(&self) -> PairScope {
        self.scope
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Positions in [`Self::pairs`] whose first element is `i`.
    pub fn range_of(&self, i: usize) -> std::ops::Range<usize> {
        self.start[i]..self.start[i + 1]
    }

    pub fn units(&self) -> usize {
        self.start.len() - 1
    }
}

fn scoped(data: &PanelData, scope: PairScope, i: usize) -> Box<dyn Iterator<Item = usize> + '_> {
    match scope {
        PairScope::WithinRange => Box::new(data.index.within_range(&data.network, i)),
        PairScope::Neighborhood => Box::new(data.index.neighbors(i).iter().copied()),
    }
}

/// Rows `[1, z_i, D_(1), …, D_(L)]`, padded slots zero.
pub fn adtt_features(data: &PanelData) -> DMatrix<f64> {
    let (n, p, l) = (data.n(), data.p(), data.index.size());
    let mut m = DMatrix::zeros(n, 1 + p + l);
    for i in 0..n {
        m[(i, 0)] = 1.0;
        for (c, v) in data.covariates(i).enumerate() {
            m[(i, 1 + c)] = v;
        }
        for (k, &t) in data.index.treatment_vector(i).iter().enumerate() {
            m[(i, 1 + p + k)] = f64::from(t);
        }
    }
    m
}

/// Treatments of `j`'s scoped neighbours other than `i`, in rank order,
/// zero-padded (or truncated) to length `L − 1`.
pub fn pair_conditioning(data: &PanelData, scope: PairScope, i: usize, j: usize) -> Vec<f64> {
    let width = data.index.size() - 1;
    let mut v: Vec<f64> = scoped(data, scope, j).filter(|&k| k != i).take(width).map(|k| f64::from(data.d[k])).collect();
    v.resize(width, 0.0);
    v
}

/// Row `[1, z_i, z_j, D_j, D_{N_j}^{-i}]` for a pair with `j ∈ N_i`.
pub fn aitt_features(data: &PanelData, scope: PairScope, i: usize, j: usize) -> Result<Vec<f64>> {
    if !scoped(data, scope, i).any(|k| k == j) {
        return Err(invalid(format!("unit {j} is not in the neighbourhood of unit {i}")));
    }
    Ok(pair_row(data, scope, i, j))
}

pub(crate) fn pair_row(data: &PanelData, scope: PairScope, i: usize, j: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(1 + 2 * data.p() + data.index.size());
    row.push(1.0);
    row.extend(data.covariates(i));
    row.extend(data.covariates(j));
    row.push(f64::from(data.d[j]));
    row.extend(pair_conditioning(data, scope, i, j));
    row
}

pub(crate) fn pair_design(data: &PanelData, pairs: &PairSet) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = pairs.pairs().iter().map(|&(i, j)| pair_row(data, pairs.scope(), i, j)).collect();
    let width = 1 + 2 * data.p() + data.index.size();
    DMatrix::from_fn(rows.len(), width, |r, c| rows[r][c])
}
