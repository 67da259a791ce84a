//! Direct (ADTT) and outward-spillover (AITT) effect estimators.
//!
//! The workflow is: build a [`PanelData`], fit a [`NuisanceSet`] with
//! [`fit_nuisances`], then evaluate any of [`ipw_adtt`], [`dr_adtt`],
//! [`ipw_aitt`], [`dr_aitt`]. Each estimator is a sample mean of per-unit
//! influence values, which [`crate::variance`] turns into HAC standard
//! errors.

mod effects;
mod features;
mod nuisance;

pub use effects::{dr_adtt, dr_aitt, ipw_adtt, ipw_aitt};
pub use features::{adtt_features, aitt_features, pair_conditioning, PairScope, PairSet};
pub use nuisance::{fit_nuisances, ModelTerms, NuisanceConfig, NuisanceSet};
pub(crate) use effects::{dr_term, ipw_term};
pub(crate) use nuisance::trim_all;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::graph::{NeighborhoodIndex, Network};
use crate::variance::VarianceReport;

/// Two-period panel aligned to a network.
#[derive(Debug, Clone)]
pub struct PanelData {
    /// `n × p` covariate matrix.
    pub z: DMatrix<f64>,
    pub d: Vec<u8>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub network: Network,
    pub index: NeighborhoodIndex,
}

impl PanelData {
    pub fn new(
        z: DMatrix<f64>,
        d: Vec<u8>,
        y1: Vec<f64>,
        y2: Vec<f64>,
        network: Network,
        index: NeighborhoodIndex,
    ) -> Result<Self> {
        let n = network.n();
        if z.nrows() != n || d.len() != n || y1.len() != n || y2.len() != n || index.n() != n {
            return Err(invalid(format!("panel arrays must all have length {n}")));
        }
        if d.iter().any(|&v| v > 1) {
            return Err(invalid("treatment must be binary"));
        }
        if y1.iter().zip(&y2).any(|(a, b)| !(b - a).is_finite()) || z.iter().any(|v| !v.is_finite()) {
            return Err(invalid("outcomes and covariates must be finite"));
        }
        if (0..n).any(|i| index.treatment_vector(i).iter().zip(index.neighbors(i)).any(|(&t, &j)| t != d[j])) {
            return Err(invalid("neighbourhood index was built for a different treatment vector"));
        }
        Ok(Self { z, d, y1, y2, network, index })
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    /// Number of covariate columns.
    pub fn p(&self) -> usize {
        self.z.ncols()
    }

    /// `Y2 − Y1`.
    pub fn delta_y(&self, i: usize) -> f64 {
        self.y2[i] - self.y1[i]
    }

    pub fn delta_ys(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.delta_y(i)).collect()
    }

    pub fn covariates(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.p()).map(move |c| self.z[(i, c)])
    }

    /// Treated units within `K` hops of each unit.
    pub fn treated_within_range(&self) -> Vec<usize> {
        let k = self.index.range();
        (0..self.n()).map(|i| self.network.count_within(i, k, &self.d)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Estimand {
    #[serde(rename = "ADTT")]
    Adtt,
    #[serde(rename = "AITT")]
    Aitt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    #[serde(rename = "IPW")]
    Ipw,
    #[serde(rename = "DR")]
    Dr,
    #[serde(rename = "OLS")]
    Ols,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    /// Probabilities moved by trimming, over all propensity models.
    pub trimmed: usize,
    pub nuisance_converged: bool,
    /// Units left out of the average (isolated units for AITT).
    pub excluded_units: usize,
    /// Units whose `L`-neighbourhood reaches beyond `K`.
    pub range_violations: usize,
    pub notes: Vec<String>,
}

/// Point estimate with its per-unit influence values.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimand: Estimand,
    pub method: Method,
    pub point: f64,
    /// `φ_i` for every unit; zero where `included[i]` is false.
    pub influence: Vec<f64>,
    pub included: Vec<bool>,
    pub variance: Option<VarianceReport>,
    /// Number of units averaged.
    pub n: usize,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub(crate) fn from_influence(
        estimand: Estimand,
        method: Method,
        influence: Vec<f64>,
        included: Vec<bool>,
        diagnostics: Diagnostics,
    ) -> Self {
        let n = included.iter().filter(|&&b| b).count();
        let sum: f64 = influence.iter().zip(&included).filter(|(_, &b)| b).map(|(v, _)| v).sum();
        Self { estimand, method, point: sum / n as f64, influence, included, variance: None, n, diagnostics }
    }
}
