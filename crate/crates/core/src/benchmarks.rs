//! Comparator estimators: exposure-mapping DID in the style of Xu (2025)
//! with oracle, misspecified and coarse mappings, plus standard DID
//! estimators that ignore interference.
//!
//! All of them target the direct effect and return an [`EstimateReport`]
//! whose point is the mean of its influence values, so the HAC machinery
//! applies unchanged.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{dr_term, ipw_term, trim_all, Diagnostics, Estimand, EstimateReport, Method, PanelData};
use crate::numerics::{fit_logistic, fit_ols, predict_proba, LogisticOptions};
use crate::rng::Rng;

/// Number of exposure levels in the oracle mapping (`S = 0, 1, 2, ≥3`).
pub const LEVELS: u8 = 4;

const TRIM: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExposureKind {
    /// `G = min(S, 3)`.
    Oracle,
    /// Oracle levels with a fraction of units moved to another level.
    Mo,
    /// `G = 1{S > 1}`.
    Fm,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExposureMapping {
    pub kind: ExposureKind,
    pub values: Vec<u8>,
    pub mo_flip_rate: f64,
}

impl ExposureMapping {
    pub fn custom(values: Vec<u8>) -> Self {
        Self { kind: ExposureKind::Custom, values, mo_flip_rate: 0.0 }
    }
}

/// Exposure levels from treated-neighbour counts `s`. Only the MO mapping
/// draws from `rng`: `round(flip_rate · n)` units chosen without
/// replacement each move to a uniformly drawn different level.
pub fn build_exposure(kind: ExposureKind, s: &[usize], flip_rate: f64, rng: &mut Rng) -> ExposureMapping {
    let oracle: Vec<u8> = s.iter().map(|&v| v.min(LEVELS as usize - 1) as u8).collect();
    let values = match kind {
        ExposureKind::Oracle | ExposureKind::Custom => oracle,
        ExposureKind::Fm => s.iter().map(|&v| u8::from(v > 1)).collect(),
        ExposureKind::Mo => {
            let mut g = oracle;
            let n = g.len();
            let flips = ((flip_rate.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
            for i in sample(rng, n, flips) {
                let shift = rng.random_range(1..LEVELS);
                g[i] = (g[i] + shift) % LEVELS;
            }
            g
        }
    };
    let mo_flip_rate = if kind == ExposureKind::Mo { flip_rate } else { 0.0 };
    ExposureMapping { kind, values, mo_flip_rate }
}

fn overlap(data: &PanelData) -> Result<()> {
    let treated = data.d.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == data.n() {
        return Err(Error::NoOverlap("need at least one treated and one control unit".into()));
    }
    Ok(())
}

fn treatment(data: &PanelData) -> Vec<f64> {
    data.d.iter().map(|&v| f64::from(v)).collect()
}

/// `[1, z, extra…]`.
fn with_covariates(data: &PanelData, extra: &[Vec<f64>]) -> DMatrix<f64> {
    let p = data.p();
    DMatrix::from_fn(data.n(), 1 + p + extra.len(), |i, c| match c {
        0 => 1.0,
        c if c <= p => data.z[(i, c - 1)],
        c => extra[c - 1 - p][i],
    })
}

/// Trimmed logistic fit of `D` on `x`; returns probabilities, trim count and convergence.
fn propensity(x: &DMatrix<f64>, d: &[f64]) -> Result<(Vec<f64>, usize, bool)> {
    let fit = fit_logistic(x, d, LogisticOptions::default())?;
    let mut p = predict_proba(&fit, x)?;
    let trimmed = trim_all(&mut p, TRIM);
    Ok((p, trimmed, fit.converged))
}

/// OLS of `dy` on `x` with `D` in column 1; predictions at `D = 1` and `D = 0`.
fn outcome_trends(x: &DMatrix<f64>, dy: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let beta = DVector::from_column_slice(&fit_ols(x, dy)?.coefficients);
    let mut set = x.clone();
    set.column_mut(1).fill(1.0);
    let mu1 = (&set * &beta).as_slice().to_vec();
    set.column_mut(1).fill(0.0);
    let mu0 = (&set * &beta).as_slice().to_vec();
    Ok((mu1, mu0))
}

fn diagnostics(data: &PanelData, trimmed: usize, converged: bool, notes: Vec<String>) -> Diagnostics {
    Diagnostics {
        trimmed,
        nuisance_converged: converged,
        excluded_units: 0,
        range_violations: data.index.range_violations(),
        notes,
    }
}

/// Merges levels in which every unit is treated, or none is, into the
/// nearest remaining level (ties go to the lower one) until every level
/// has both groups or a single level is left.
fn merge_degenerate(values: &[u8], d: &[u8], notes: &mut Vec<String>) -> Vec<u8> {
    let mut g = values.to_vec();
    loop {
        let mut present: Vec<u8> = g.clone();
        present.sort_unstable();
        present.dedup();
        if present.len() < 2 {
            return g;
        }
        let degenerate = present.iter().copied().find(|&lvl| {
            let (total, treated) = g
                .iter()
                .zip(d)
                .filter(|(&v, _)| v == lvl)
                .fold((0, 0), |(t, k), (_, &di)| (t + 1, k + usize::from(di)));
            treated == 0 || treated == total
        });
        let Some(bad) = degenerate else { return g };
        let target = present
            .iter()
            .copied()
            .filter(|&lvl| lvl != bad)
            .min_by_key(|&lvl| (lvl.abs_diff(bad), lvl))
            .expect("at least two levels");
        notes.push(format!("exposure level {bad} lacks treated or control units; merged into level {target}"));
        for v in &mut g {
            if *v == bad {
                *v = target;
            }
        }
    }
}

/// Stratified DID with `P(D = 1 | z, G)` from a logistic on `[1, z, level
/// dummies]` and the same IPW/DR algebra as the proposed estimators. The
/// treated share stands in for `π`, so a single-level mapping reproduces
/// [`canonical_ipw_did`].
pub fn xu_estimator(data: &PanelData, mapping: &ExposureMapping, method: Method) -> Result<EstimateReport> {
    overlap(data)?;
    if mapping.values.len() != data.n() {
        return Err(crate::error::invalid("exposure mapping length differs from the panel"));
    }
    let mut notes = Vec::new();
    let g = merge_degenerate(&mapping.values, &data.d, &mut notes);
    let mut levels = g.clone();
    levels.sort_unstable();
    levels.dedup();
    let dummies: Vec<Vec<f64>> = levels[1..].iter().map(|&lvl| g.iter().map(|&v| f64::from(u8::from(v == lvl))).collect()).collect();

    let d = treatment(data);
    let dy = data.delta_ys();
    let p_bar = d.iter().sum::<f64>() / d.len() as f64;
    let (e, trimmed, converged) = propensity(&with_covariates(data, &dummies), &d)?;
    let phi: Vec<f64> = match method {
        Method::Ipw => (0..data.n()).map(|i| ipw_term(d[i], p_bar, e[i], dy[i])).collect(),
        Method::Dr => {
            let mut cols = vec![d.clone()];
            cols.extend(dummies);
            let (mu1, mu0) = outcome_trends(&reorder_treatment(&with_covariates(data, &cols), data.p()), &dy)?;
            (0..data.n()).map(|i| dr_term(d[i], p_bar, e[i], dy[i], mu1[i], mu0[i])).collect()
        }
        Method::Ols => return Err(crate::error::invalid("exposure-mapping estimator supports IPW and DR only")),
    };
    let n = data.n();
    Ok(EstimateReport::from_influence(Estimand::Adtt, method, phi, vec![true; n], diagnostics(data, trimmed, converged, notes)))
}

/// Moves the column right after the covariates (the treatment) to position 1.
fn reorder_treatment(x: &DMatrix<f64>, p: usize) -> DMatrix<f64> {
    let mut order = vec![0, 1 + p];
    order.extend(1..1 + p);
    order.extend(2 + p..x.ncols());
    x.select_columns(order.iter())
}

/// ATT-weighted IPW DID with a `z`-only propensity:
/// `(D − p̂)·ΔY / (p̄·(1 − p̂))` with `p̄` the treated share.
pub fn canonical_ipw_did(data: &PanelData) -> Result<EstimateReport> {
    overlap(data)?;
    let d = treatment(data);
    let dy = data.delta_ys();
    let p_bar = d.iter().sum::<f64>() / d.len() as f64;
    let (p, trimmed, converged) = propensity(&with_covariates(data, &[]), &d)?;
    let phi = (0..data.n()).map(|i| ipw_term(d[i], p_bar, p[i], dy[i])).collect();
    Ok(EstimateReport::from_influence(
        Estimand::Adtt,
        Method::Ipw,
        phi,
        vec![true; data.n()],
        diagnostics(data, trimmed, converged, Vec::new()),
    ))
}

/// Doubly robust DID using `z` only: `z`-only propensity, `ΔY ~ [1, D, z]`.
pub fn dr_did_benchmark(data: &PanelData) -> Result<EstimateReport> {
    overlap(data)?;
    let d = treatment(data);
    let dy = data.delta_ys();
    let p_bar = d.iter().sum::<f64>() / d.len() as f64;
    let (p, trimmed, converged) = propensity(&with_covariates(data, &[]), &d)?;
    let x = reorder_treatment(&with_covariates(data, std::slice::from_ref(&d)), data.p());
    let (mu1, mu0) = outcome_trends(&x, &dy)?;
    let phi = (0..data.n()).map(|i| dr_term(d[i], p_bar, p[i], dy[i], mu1[i], mu0[i])).collect();
    Ok(EstimateReport::from_influence(
        Estimand::Adtt,
        Method::Dr,
        phi,
        vec![true; data.n()],
        diagnostics(data, trimmed, converged, Vec::new()),
    ))
}

/// OLS coefficient `k` with influence `β_k + [(X'X/n)⁻¹ x_i e_i]_k`.
fn ols_coefficient(x: &DMatrix<f64>, y: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = x.nrows() as f64;
    let fit = fit_ols(x, y)?;
    let beta = DVector::from_column_slice(&fit.coefficients);
    let resid = DVector::from_column_slice(y) - x * &beta;
    let gram = x.transpose() * x / n;
    let unit = DVector::from_fn(x.ncols(), |c, _| f64::from(u8::from(c == k)));
    // row k of the (pseudo-)inverse Gram matrix; a constant covariate makes it singular
    let inv_k = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&unit),
        None => gram.pseudo_inverse(1e-12).map_err(|e| Error::Numerical(e.to_string()))? * unit,
    };
    Ok((0..x.nrows()).map(|i| beta[k] + x.row(i).transpose().dot(&inv_k) * resid[i]).collect())
}

fn twfe_report(data: &PanelData, x: &DMatrix<f64>, notes: Vec<String>) -> Result<EstimateReport> {
    let phi = ols_coefficient(x, &data.delta_ys(), 1)?;
    Ok(EstimateReport::from_influence(
        Estimand::Adtt,
        Method::Ols,
        phi,
        vec![true; data.n()],
        diagnostics(data, 0, true, notes),
    ))
}

/// `[1, D, z, extra…]`.
fn twfe_design(data: &PanelData, d: &[f64], extra: Option<&[f64]>) -> DMatrix<f64> {
    let mut cols = vec![d.to_vec()];
    cols.extend(extra.map(<[f64]>::to_vec));
    reorder_treatment(&with_covariates(data, &cols), data.p())
}

/// Two-period TWFE with covariate trends: the `D` coefficient of
/// `ΔY ~ [1, D, z]`.
pub fn canonical_twfe(data: &PanelData) -> Result<EstimateReport> {
    overlap(data)?;
    let d = treatment(data);
    twfe_report(data, &twfe_design(data, &d, None), Vec::new())
}

/// TWFE with a binary exposure: `D` coefficient of
/// `ΔY ~ [1, D, z, 1{S ≥ 1}]`. The exposure column is dropped, with a
/// note, when it is an affine function of `D`.
pub fn modified_twfe(data: &PanelData) -> Result<EstimateReport> {
    overlap(data)?;
    let d = treatment(data);
    let exposed: Vec<f64> = data.treated_within_range().iter().map(|&s| f64::from(u8::from(s >= 1))).collect();
    // affine in D iff constant within each treatment group
    let constant_within = |grp: f64| {
        let mut vals = exposed.iter().zip(&d).filter(|(_, &di)| di == grp).map(|(e, _)| *e);
        let first = vals.next();
        vals.all(|v| Some(v) == first)
    };
    if constant_within(0.0) && constant_within(1.0) {
        let note = "exposure indicator is collinear with [1, D]; column dropped".to_string();
        return twfe_report(data, &twfe_design(data, &d, None), vec![note]);
    }
    twfe_report(data, &twfe_design(data, &d, Some(&exposed)), Vec::new())
}
