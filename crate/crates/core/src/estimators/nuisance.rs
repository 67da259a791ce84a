use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::{adtt_features, pair_design, PairScope, PairSet};
use super::PanelData;
use crate::error::{invalid, Error, Result};
use crate::numerics::{fit_logistic, fit_ols, predict_proba, FitResult, LogisticOptions};

/// Which optional terms enter a nuisance model. The intercept (and, for
/// outcome models, the own-treatment indicator) are always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTerms {
    /// Observed covariates `z`.
    pub covariates: bool,
    /// Neighbour treatment indicators.
    pub neighbors: bool,
}

impl ModelTerms {
    pub const FULL: Self = Self { covariates: true, neighbors: true };
    pub const INTERCEPT_ONLY: Self = Self { covariates: false, neighbors: false };
}

impl Default for ModelTerms {
    fn default() -> Self {
        Self::FULL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NuisanceConfig {
    /// Every fitted probability is clamped into `[lo, hi]`.
    pub trim: (f64, f64),
    #[serde(skip)]
    pub logistic: LogisticOptions,
    /// Terms for `π`, `e` and `e'`.
    pub propensity: ModelTerms,
    /// Terms for the outcome-trend regressions.
    pub outcome: ModelTerms,
    pub pair_scope: PairScope,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            trim: (0.01, 0.99),
            logistic: LogisticOptions::default(),
            propensity: ModelTerms::FULL,
            outcome: ModelTerms::FULL,
            pair_scope: PairScope::default(),
        }
    }
}

/// Fitted nuisance quantities. Pair-indexed vectors align with `pairs`.
#[derive(Debug, Clone)]
pub struct NuisanceSet {
    /// `π̂_i = P(D_i = 1 | z_i)`.
    pub pi: Vec<f64>,
    /// `ê_i = P(D_i = 1 | D_{N_i}, z_i)`.
    pub e: Vec<f64>,
    /// `ê'_ij = P(D_i = 1 | D_j, D_{N_j}^{-i}, z_i, z_j)`.
    pub e_pair: Vec<f64>,
    /// Predicted trend `Δm_1i` with `D_i = 1`.
    pub mu1: Vec<f64>,
    pub mu0: Vec<f64>,
    pub mu1_pair: Vec<f64>,
    pub mu0_pair: Vec<f64>,
    pub pairs: PairSet,
    pub trim: (f64, f64),
    pub trimmed: usize,
    pub converged: bool,
}

fn select(m: &DMatrix<f64>, cols: &[usize]) -> DMatrix<f64> {
    m.select_columns(cols.iter())
}

pub(crate) fn trim_all(values: &mut [f64], (lo, hi): (f64, f64)) -> usize {
    let mut moved = 0;
    for v in values {
        let c = v.clamp(lo, hi);
        if c != *v {
            moved += 1;
            *v = c;
        }
    }
    moved
}

fn logistic(x: &DMatrix<f64>, y: &[f64], opts: LogisticOptions) -> Result<(FitResult, Vec<f64>)> {
    let fit = fit_logistic(x, y, opts)?;
    let p = predict_proba(&fit, x)?;
    Ok((fit, p))
}

/// Predictions of a trend regression at `D = 1` and `D = 0`, where column
/// `treat_col` holds the treatment indicator.
fn counterfactual_trends(x: &DMatrix<f64>, y: &[f64], treat_col: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.nrows() == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    let fit = fit_ols(x, y)?;
    let beta = DVector::from_column_slice(&fit.coefficients);
    let mut set = x.clone();
    set.column_mut(treat_col).fill(1.0);
    let mu1 = (&set * &beta).as_slice().to_vec();
    set.column_mut(treat_col).fill(0.0);
    let mu0 = (&set * &beta).as_slice().to_vec();
    Ok((mu1, mu0))
}

/// Fits `π`, `e`, `e'` by logistic regression and the unit and pair trend
/// regressions by OLS, then trims every probability.
pub fn fit_nuisances(data: &PanelData, cfg: &NuisanceConfig) -> Result<NuisanceSet> {
    let (lo, hi) = cfg.trim;
    if !(0.0 < lo && lo < hi && hi < 1.0) {
        return Err(invalid(format!("trim bounds ({lo}, {hi}) must satisfy 0 < lo < hi < 1")));
    }
    let n = data.n();
    let treated = data.d.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == n {
        return Err(Error::NoOverlap("need at least one treated and one control unit".into()));
    }
    let (p, l) = (data.p(), data.index.size());
    let d: Vec<f64> = data.d.iter().map(|&v| f64::from(v)).collect();
    let dy = data.delta_ys();

    // [1, z, D_N]
    let unit_x = adtt_features(data);
    let z_cols: Vec<usize> = (1..1 + p).collect();
    let nb_cols: Vec<usize> = (1 + p..1 + p + l).collect();

    let mut pi_cols = vec![0];
    if cfg.propensity.covariates {
        pi_cols.extend(&z_cols);
    }
    let (pi_fit, mut pi) = logistic(&select(&unit_x, &pi_cols), &d, cfg.logistic)?;

    let mut e_cols = pi_cols.clone();
    if cfg.propensity.neighbors {
        e_cols.extend(&nb_cols);
    }
    let (e_fit, mut e) = logistic(&select(&unit_x, &e_cols), &d, cfg.logistic)?;

    // unit trends: [1, D, z, D_N]
    let mut extra = Vec::new();
    if cfg.outcome.covariates {
        extra.extend(&z_cols);
    }
    if cfg.outcome.neighbors {
        extra.extend(&nb_cols);
    }
    let tail = select(&unit_x, &extra);
    let mut out_x = DMatrix::zeros(n, 2 + tail.ncols());
    out_x.column_mut(0).fill(1.0);
    out_x.column_mut(1).copy_from_slice(&d);
    out_x.columns_mut(2, tail.ncols()).copy_from(&tail);
    let (mu1, mu0) = counterfactual_trends(&out_x, &dy, 1)?;

    // pairs: [1, z_i, z_j, D_j, D_{N_j}^{-i}]
    let pairs = PairSet::build(data, cfg.pair_scope);
    let pair_x = pair_design(data, &pairs);
    let zi_cols: Vec<usize> = (1..1 + p).collect();
    let zj_cols: Vec<usize> = (1 + p..1 + 2 * p).collect();
    let pnb_cols: Vec<usize> = (1 + 2 * p..pair_x.ncols()).collect();
    let (mut e_pair, mut mu1_pair, mut mu0_pair) = (Vec::new(), Vec::new(), Vec::new());
    let mut pair_converged = true;
    if !pairs.is_empty() {
        let di: Vec<f64> = pairs.pairs().iter().map(|&(i, _)| d[i]).collect();
        let dyj: Vec<f64> = pairs.pairs().iter().map(|&(_, j)| dy[j]).collect();
        let mut cols = vec![0];
        if cfg.propensity.covariates {
            cols.extend(&zi_cols);
            cols.extend(&zj_cols);
        }
        if cfg.propensity.neighbors {
            cols.extend(&pnb_cols);
        }
        let (fit, probs) = logistic(&select(&pair_x, &cols), &di, cfg.logistic)?;
        pair_converged = fit.converged;
        e_pair = probs;

        // [1, D_i, D_j, z_i, z_j, D_{N_j}^{-i}]
        let mut tail = Vec::new();
        if cfg.outcome.neighbors {
            tail.push(pnb_cols[0]);
        }
        if cfg.outcome.covariates {
            tail.extend(&zi_cols);
            tail.extend(&zj_cols);
        }
        if cfg.outcome.neighbors {
            tail.extend(&pnb_cols[1..]);
        }
        let rest = select(&pair_x, &tail);
        let mut x = DMatrix::zeros(pairs.len(), 2 + rest.ncols());
        x.column_mut(0).fill(1.0);
        x.column_mut(1).copy_from_slice(&di);
        x.columns_mut(2, rest.ncols()).copy_from(&rest);
        let (a, b) = counterfactual_trends(&x, &dyj, 1)?;
        mu1_pair = a;
        mu0_pair = b;
    }

    let trim = (lo, hi);
    let trimmed = trim_all(&mut pi, trim) + trim_all(&mut e, trim) + trim_all(&mut e_pair, trim);
    Ok(NuisanceSet {
        pi,
        e,
        e_pair,
        mu1,
        mu0,
        mu1_pair,
        mu0_pair,
        pairs,
        trim,
        trimmed,
        converged: pi_fit.converged && e_fit.converged && pair_converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{uniform_points, Metric, NeighborhoodIndex, Network};
    use crate::rng::seeded;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn random_panel(n: usize, seed: u64, treat: impl Fn(f64, &mut crate::rng::Rng) -> u8, trend: impl Fn(f64, u8) -> f64) -> PanelData {
        let mut rng = seeded(seed);
        let pts = uniform_points(n, (n as f64 / 1.25).sqrt(), &mut rng);
        let net = Network::from_points(&pts, 1.0, Metric::Chebyshev).unwrap();
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d: Vec<u8> = z.iter().map(|&zi| treat(zi, &mut rng)).collect();
        let y1 = vec![0.0; n];
        let y2: Vec<f64> = z.iter().zip(&d).map(|(&zi, &di)| trend(zi, di)).collect();
        let index = NeighborhoodIndex::build(&net, &d, 4, 1, None).unwrap();
        PanelData::new(DMatrix::from_column_slice(n, 1, &z), d, y1, y2, net, index).unwrap()
    }

    #[test]
    fn independent_treatment_gives_flat_propensity() {
        let data = random_panel(4000, 5, |_, r| u8::from(r.random::<f64>() < 0.4), |z, _| z);
        let nuis = fit_nuisances(&data, &NuisanceConfig::default()).unwrap();
        let mean_d = data.d.iter().map(|&v| f64::from(v)).sum::<f64>() / data.n() as f64;
        let worst = nuis.e.iter().map(|e| (e - mean_d).abs()).fold(0.0, f64::max);
        assert!(worst < 0.1, "max |ê − mean(D)| = {worst}");
        assert!(nuis.converged);
    }

    #[test]
    fn perfect_prediction_engages_trimming() {
        let data = random_panel(300, 6, |z, _| u8::from(z > 0.0), |z, _| z);
        let nuis = fit_nuisances(&data, &NuisanceConfig::default()).unwrap();
        assert!(nuis.trimmed > 0);
        assert!(nuis.e.iter().chain(&nuis.pi).chain(&nuis.e_pair).all(|&p| (0.01..=0.99).contains(&p)));
    }

    #[test]
    fn noise_free_linear_trend_is_recovered() {
        let data = random_panel(400, 7, |_, r| u8::from(r.random::<f64>() < 0.5), |z, d| 1.5 + 0.7 * f64::from(d) - 0.4 * z);
        let nuis = fit_nuisances(&data, &NuisanceConfig::default()).unwrap();
        for i in 0..data.n() {
            let z = data.z[(i, 0)];
            assert!((nuis.mu1[i] - (2.2 - 0.4 * z)).abs() < 1e-6);
            assert!((nuis.mu0[i] - (1.5 - 0.4 * z)).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_treatment_is_rejected() {
        let data = random_panel(50, 8, |_, _| 1, |z, _| z);
        assert!(matches!(fit_nuisances(&data, &NuisanceConfig::default()), Err(Error::NoOverlap(_))));
    }

    #[test]
    fn misspecified_terms_change_design_width() {
        let data = random_panel(200, 9, |z, r| u8::from(r.random::<f64>() < crate::numerics::sigmoid(z)), |z, _| z);
        let cfg = NuisanceConfig { propensity: ModelTerms::INTERCEPT_ONLY, ..Default::default() };
        let nuis = fit_nuisances(&data, &cfg).unwrap();
        // intercept-only propensity is the treated share everywhere
        let share = data.d.iter().map(|&v| f64::from(v)).sum::<f64>() / data.n() as f64;
        assert!(nuis.pi.iter().all(|p| (p - share).abs() < 1e-6));
        assert!(nuis.e.iter().all(|p| (p - share).abs() < 1e-6));
    }
}
