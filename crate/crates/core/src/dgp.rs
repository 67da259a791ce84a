//! Synthetic spatial panels with clustered treatment and step-wise spillovers.
//!
//! Units are scattered uniformly on a square and linked when their
//! Chebyshev distance is within the adjacency radius. A latent confounder
//! with covariance `ρ₀^{hop distance}` drives both treatment and outcome
//! trends, so treated units cluster and their untreated neighbours are
//! contaminated by spillovers:
//!
//! ```text
//! P(D=1)  = logit⁻¹(0.3 z + 0.8 z_u)
//! Y1      = 1.2 z + 0.5 z_u + ε₁
//! Y2      = 1 + Y1 + τ D + f(S) + 0.2 z + 0.1 z_u + ε₂
//! ```
//!
//! where `S` counts treated units within `K` hops and `f` is a saturating
//! step function.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{PairScope, PairSet, PanelData};
use crate::graph::{uniform_points, Metric, NeighborhoodIndex, Network};
use crate::numerics::{cholesky, psd_root, sample_mvn, sigmoid};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub area_side: f64,
    pub adjacency_radius: f64,
    pub metric: Metric,
    /// Interference range `K` in hops.
    pub range: u32,
    /// Neighbourhood size `L`.
    pub size: usize,
    pub rho0: f64,
    pub tau: f64,
    /// `f(S)` for `S = 1, 2, …`; the last entry holds for all larger `S`.
    pub spillover_steps: Vec<f64>,
    /// Treatment logit coefficients on `(z, z_u)`.
    pub treat_coefs: (f64, f64),
    /// First-period coefficients on `(z, z_u)`.
    pub y1_coefs: (f64, f64),
    pub y2_intercept: f64,
    pub y2_carry: f64,
    /// Second-period coefficients on `(z, z_u)`.
    pub y2_coefs: (f64, f64),
    pub noise_sd: f64,
    /// Which neighbours the AITT truth averages over.
    pub pair_scope: PairScope,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 500,
            area_side: 20.0,
            adjacency_radius: 1.0,
            metric: Metric::Chebyshev,
            range: 1,
            size: 10,
            rho0: 0.5,
            tau: 0.8,
            spillover_steps: vec![0.8, 1.6, 2.4],
            treat_coefs: (0.3, 0.8),
            y1_coefs: (1.2, 0.5),
            y2_intercept: 1.0,
            y2_carry: 1.0,
            y2_coefs: (0.2, 0.1),
            noise_sd: 1.0,
            pair_scope: PairScope::default(),
            seed: crate::rng::DEFAULT_SEED,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(invalid("simulation needs n ≥ 2"));
        }
        if !(0.0..1.0).contains(&self.rho0) {
            return Err(invalid(format!("rho0 must lie in [0, 1), got {}", self.rho0)));
        }
        if !(self.area_side > 0.0 && self.adjacency_radius > 0.0) {
            return Err(invalid("area side and adjacency radius must be positive"));
        }
        if self.size == 0 || self.range == 0 {
            return Err(invalid("L and K must be at least 1"));
        }
        let coefs = [
            self.tau,
            self.treat_coefs.0,
            self.treat_coefs.1,
            self.y1_coefs.0,
            self.y1_coefs.1,
            self.y2_intercept,
            self.y2_carry,
            self.y2_coefs.0,
            self.y2_coefs.1,
            self.noise_sd,
        ];
        if coefs.iter().chain(&self.spillover_steps).any(|c| !c.is_finite()) || self.noise_sd < 0.0 {
            return Err(invalid("coefficients must be finite and noise_sd nonnegative"));
        }
        Ok(())
    }
}

/// True effects for one simulated panel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truth {
    pub adtt: f64,
    pub aitt: f64,
}

#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: PanelData,
    pub points: Vec<[f64; 2]>,
    /// Treated units within `K` hops.
    pub s: Vec<usize>,
    pub z_u: Vec<f64>,
    pub truth: Truth,
    /// Components whose confounder covariance needed eigenvalue clipping.
    pub psd_repaired: usize,
}

/// `f(S)`: zero without treated neighbours, then `steps[min(S, len) − 1]`.
pub fn spillover_f(s: usize, steps: &[f64]) -> f64 {
    if s == 0 || steps.is_empty() {
        0.0
    } else {
        steps[s.min(steps.len()) - 1]
    }
}

/// Draws a panel using the stream seeded by `cfg.seed`.
pub fn generate_panel(cfg: &SimConfig) -> Result<SimulatedPanel> {
    generate_panel_with(cfg, &mut seeded(cfg.seed))
}

/// Draws a panel from the given stream.
pub fn generate_panel_with(cfg: &SimConfig, rng: &mut Rng) -> Result<SimulatedPanel> {
    cfg.validate()?;
    let n = cfg.n;
    let points = uniform_points(n, cfg.area_side, rng);
    let network = Network::from_points(&points, cfg.adjacency_radius, cfg.metric)?;
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let mut psd_repaired = 0;
    let z_u = latent_confounder(&network, cfg.rho0, rng, &mut psd_repaired)?;

    let d: Vec<u8> = (0..n)
        .map(|i| {
            let p = sigmoid(cfg.treat_coefs.0 * z[i] + cfg.treat_coefs.1 * z_u[i]);
            u8::from(rng.random::<f64>() < p)
        })
        .collect();
    let s: Vec<usize> = (0..n).map(|i| network.count_within(i, cfg.range, &d)).collect();

    let mut y1 = Vec::with_capacity(n);
    let mut y2 = Vec::with_capacity(n);
    for i in 0..n {
        let e1: f64 = StandardNormal.sample(rng);
        let e2: f64 = StandardNormal.sample(rng);
        let first = cfg.y1_coefs.0 * z[i] + cfg.y1_coefs.1 * z_u[i] + cfg.noise_sd * e1;
        let second = cfg.y2_intercept
            + cfg.y2_carry * first
            + cfg.tau * f64::from(d[i])
            + spillover_f(s[i], &cfg.spillover_steps)
            + cfg.y2_coefs.0 * z[i]
            + cfg.y2_coefs.1 * z_u[i]
            + cfg.noise_sd * e2;
        y1.push(first);
        y2.push(second);
    }

    let index = NeighborhoodIndex::build(&network, &d, cfg.size, cfg.range, None)?;
    let panel = PanelData::new(DMatrix::from_column_slice(n, 1, &z), d, y1, y2, network, index)?;
    let aitt = true_aitt_oracle(&panel, &s, &cfg.spillover_steps, cfg.pair_scope).unwrap_or(0.0);
    Ok(SimulatedPanel { panel, points, s, z_u, truth: Truth { adtt: cfg.tau, aitt }, psd_repaired })
}

/// `z_u ~ N(0, Σ)` with `Σ_ij = ρ₀^{dist(i,j)}`, zero across components.
/// Each connected component is factored and sampled separately. Powers of
/// hop distance need not form a valid covariance on every graph; components
/// where Cholesky fails even with jitter are sampled from the nearest PSD
/// matrix instead and counted in `repaired`.
fn latent_confounder(net: &Network, rho0: f64, rng: &mut Rng, repaired: &mut usize) -> Result<Vec<f64>> {
    let mut z_u = vec![0.0; net.n()];
    for members in net.components() {
        let m = members.len();
        let sigma = DMatrix::from_fn(m, m, |a, b| rho0.powi(net.dist(members[a], members[b]) as i32));
        let root = match cholesky(&sigma, 0.0) {
            Ok(factor) => factor.lower,
            Err(Error::Numerical(_)) => {
                *repaired += 1;
                psd_root(&sigma)?.0
            }
            Err(e) => return Err(e),
        };
        let draw = sample_mvn(&root, rng);
        for (k, &i) in members.iter().enumerate() {
            z_u[i] = draw[k];
        }
    }
    Ok(z_u)
}

/// Average over treated `i` of the mean, across `i`'s AITT neighbours `j`,
/// of `f(S_j) − f(S_j − 1)`: the change in `j`'s outcome from switching
/// `i`'s treatment off. Neighbours beyond `K` contribute zero. Treated
/// units without neighbours are skipped.
pub fn true_aitt_oracle(panel: &PanelData, s: &[usize], steps: &[f64], scope: PairScope) -> Result<f64> {
    let k = panel.index.range();
    let pairs = PairSet::build(panel, scope);
    let mut total = 0.0;
    let mut count = 0usize;
    for i in (0..panel.n()).filter(|&i| panel.d[i] == 1) {
        let range = pairs.range_of(i);
        if range.is_empty() {
            continue;
        }
        let size = range.len() as f64;
        let effect: f64 = pairs.pairs()[range]
            .iter()
            .map(|&(_, j)| {
                if panel.network.dist(i, j) <= k {
                    spillover_f(s[j], steps) - spillover_f(s[j] - 1, steps)
                } else {
                    0.0
                }
            })
            .sum();
        total += effect / size;
        count += 1;
    }
    if count == 0 {
        return Err(Error::Estimation("no treated unit has neighbours; AITT truth undefined".into()));
    }
    Ok(total / count as f64)
}
