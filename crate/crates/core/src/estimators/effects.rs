use super::{Diagnostics, Estimand, EstimateReport, Method, NuisanceSet, PanelData};
use crate::error::{invalid, Error, Result};

fn check(data: &PanelData, nuis: &NuisanceSet) -> Result<()> {
    let n = data.n();
    let m = nuis.pairs.len();
    if [nuis.pi.len(), nuis.e.len(), nuis.mu1.len(), nuis.mu0.len(), nuis.pairs.units()].iter().any(|&l| l != n) {
        return Err(invalid("nuisance set does not match the panel size"));
    }
    if [nuis.e_pair.len(), nuis.mu1_pair.len(), nuis.mu0_pair.len()].iter().any(|&l| l != m) {
        return Err(invalid("pair nuisances do not match the pair set"));
    }
    Ok(())
}

fn diagnostics(data: &PanelData, nuis: &NuisanceSet, excluded: usize) -> Diagnostics {
    Diagnostics {
        trimmed: nuis.trimmed,
        nuisance_converged: nuis.converged,
        excluded_units: excluded,
        range_violations: data.index.range_violations(),
        notes: Vec::new(),
    }
}

/// `(D − e)·ΔY / (π·(1 − e))`.
#[inline]
pub(crate) fn ipw_term(d: f64, pi: f64, e: f64, dy: f64) -> f64 {
    (d - e) * dy / (pi * (1.0 - e))
}

/// Outcome-augmented version of [`ipw_term`].
#[inline]
pub(crate) fn dr_term(d: f64, pi: f64, e: f64, dy: f64, mu1: f64, mu0: f64) -> f64 {
    d / pi * (dy - mu1) - (1.0 - d) * e / (pi * (1.0 - e)) * (dy - mu0) + e / pi * (mu1 - mu0)
}

/// IPW estimator of the ADTT.
pub fn ipw_adtt(data: &PanelData, nuis: &NuisanceSet) -> Result<EstimateReport> {
    check(data, nuis)?;
    let phi = (0..data.n())
        .map(|i| ipw_term(f64::from(data.d[i]), nuis.pi[i], nuis.e[i], data.delta_y(i)))
        .collect();
    Ok(EstimateReport::from_influence(Estimand::Adtt, Method::Ipw, phi, vec![true; data.n()], diagnostics(data, nuis, 0)))
}

/// Doubly robust estimator of the ADTT.
pub fn dr_adtt(data: &PanelData, nuis: &NuisanceSet) -> Result<EstimateReport> {
    check(data, nuis)?;
    let phi = (0..data.n())
        .map(|i| dr_term(f64::from(data.d[i]), nuis.pi[i], nuis.e[i], data.delta_y(i), nuis.mu1[i], nuis.mu0[i]))
        .collect();
    Ok(EstimateReport::from_influence(Estimand::Adtt, Method::Dr, phi, vec![true; data.n()], diagnostics(data, nuis, 0)))
}

fn aitt(data: &PanelData, nuis: &NuisanceSet, method: Method, term: impl Fn(usize, usize, usize) -> f64) -> Result<EstimateReport> {
    check(data, nuis)?;
    let n = data.n();
    let mut phi = vec![0.0; n];
    let mut included = vec![false; n];
    for i in 0..n {
        let range = nuis.pairs.range_of(i);
        if range.is_empty() {
            continue;
        }
        let size = range.len() as f64;
        phi[i] = range.map(|k| term(i, nuis.pairs.pairs()[k].1, k)).sum::<f64>() / size;
        included[i] = true;
    }
    let excluded = included.iter().filter(|&&b| !b).count();
    if excluded == n {
        return Err(Error::Estimation("every unit is isolated; AITT is undefined".into()));
    }
    let mut diag = diagnostics(data, nuis, excluded);
    if excluded > 0 {
        diag.notes.push(format!("{excluded} units without neighbours were left out of the average"));
    }
    Ok(EstimateReport::from_influence(Estimand::Aitt, method, phi, included, diag))
}

/// IPW estimator of the AITT; units without neighbours are left out.
pub fn ipw_aitt(data: &PanelData, nuis: &NuisanceSet) -> Result<EstimateReport> {
    aitt(data, nuis, Method::Ipw, |i, j, k| {
        ipw_term(f64::from(data.d[i]), nuis.pi[i], nuis.e_pair[k], data.delta_y(j))
    })
}

/// Doubly robust estimator of the AITT; units without neighbours are left out.
pub fn dr_aitt(data: &PanelData, nuis: &NuisanceSet) -> Result<EstimateReport> {
    aitt(data, nuis, Method::Dr, |i, j, k| {
        dr_term(f64::from(data.d[i]), nuis.pi[i], nuis.e_pair[k], data.delta_y(j), nuis.mu1_pair[k], nuis.mu0_pair[k])
    })
}
