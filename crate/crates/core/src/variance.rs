//! Network HAC variance for sample means of influence values.
//!
//! ```text
//! V̂ = Σ_{s=0}^{⌊b⌋} ω(s/b) Ω̂(s),
//! Ω̂(s) = n⁻¹ Σ_i Σ_{j: dist(i,j)=s} (φ_i − φ̄)(φ_j − φ̄),
//! ```
//!
//! where `ω` is a finite-support kernel and `b` the bandwidth in hops. The
//! Wald interval is `point ± z_{α/2} √(V̂/n)`.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Result};
use crate::graph::DistanceShell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Bartlett,
    Parzen,
}

/// `ω(u)` for `u ≥ 0`; both kernels vanish beyond `u = 1`.
pub fn kernel_weight(kind: Kernel, u: f64) -> f64 {
    let u = u.abs();
    match kind {
        Kernel::Bartlett => (1.0 - u).max(0.0),
        Kernel::Parzen if u <= 0.5 => 1.0 - 6.0 * u * u + 6.0 * u * u * u,
        Kernel::Parzen if u <= 1.0 => 2.0 * (1.0 - u).powi(3),
        Kernel::Parzen => 0.0,
    }
}

/// Kernel plus bandwidth. The bandwidth is either fixed or `multiplier · K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HacConfig {
    pub kernel: Kernel,
    /// Fixed bandwidth in hops; overrides `multiplier` when set.
    pub bandwidth: Option<f64>,
    pub multiplier: f64,
}

impl Default for HacConfig {
    fn default() -> Self {
        Self { kernel: Kernel::Bartlett, bandwidth: None, multiplier: 2.0 }
    }
}

impl HacConfig {
    pub fn fixed(kernel: Kernel, bandwidth: f64) -> Self {
        Self { kernel, bandwidth: Some(bandwidth), multiplier: 2.0 }
    }

    /// Bandwidth for interference range `k`.
    pub fn bandwidth_for(&self, k: u32) -> f64 {
        self.bandwidth.unwrap_or(self.multiplier * f64::from(k))
    }

    /// Deepest shell the bandwidth can reach.
    pub fn shell_depth(&self, k: u32) -> u32 {
        self.bandwidth_for(k).max(0.0).floor() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceReport {
    pub v_hat: f64,
    /// `Ω̂(s)` for `s = 0..=s_max_used`.
    pub autocovariances: Vec<f64>,
    pub s_max_used: u32,
    pub bandwidth: f64,
    pub alpha: f64,
    pub ci: (f64, f64),
    pub se: f64,
    /// Set when the kernel sum was negative and had to be floored.
    pub floored: bool,
}

/// Two-sided standard normal critical value `z_{α/2}`.
pub fn normal_critical(alpha: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - alpha / 2.0)
}

/// HAC variance of the mean of `influence` over the units flagged in
/// `included` (all units when `None`).
///
/// A negative kernel sum is floored at `Ω̂(0)·1e-6` and flagged.
pub fn hac_variance(
    influence: &[f64],
    included: Option<&[bool]>,
    shells: &DistanceShell,
    bandwidth: f64,
    kernel: Kernel,
    alpha: f64,
    point: f64,
) -> Result<VarianceReport> {
    if !(bandwidth >= 0.0) {
        return Err(invalid(format!("bandwidth must be nonnegative, got {bandwidth}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let mask: Vec<bool> = match included {
        Some(m) if m.len() == influence.len() => m.to_vec(),
        Some(_) => return Err(invalid("inclusion mask length differs from the influence vector")),
        None => vec![true; influence.len()],
    };
    let n = mask.iter().filter(|&&b| b).count();
    if n == 0 {
        return Err(invalid("no units to aggregate"));
    }
    let depth = bandwidth.floor() as u32;
    if depth > shells.s_max() {
        return Err(invalid(format!("shells reach distance {} but bandwidth needs {depth}", shells.s_max())));
    }
    let mean = influence.iter().zip(&mask).filter(|(_, &b)| b).map(|(v, _)| v).sum::<f64>() / n as f64;
    let centred: Vec<f64> = influence.iter().map(|v| v - mean).collect();
    let autocovariances: Vec<f64> = (0..=depth)
        .map(|s| {
            let total: f64 = (0..influence.len())
                .filter(|&i| mask[i])
                .map(|i| {
                    let inner: f64 = shells.shell(s, i).iter().filter(|&&j| mask[j]).map(|&j| centred[j]).sum();
                    centred[i] * inner
                })
                .sum();
            total / n as f64
        })
        .collect();
    let raw: f64 = autocovariances
        .iter()
        .enumerate()
        .map(|(s, omega)| {
            let w = if bandwidth == 0.0 { 1.0 } else { kernel_weight(kernel, s as f64 / bandwidth) };
            w * omega
        })
        .sum();
    let floor = autocovariances[0] * 1e-6;
    let (v_hat, floored) = if raw < floor { (floor, true) } else { (raw, false) };
    let se = (v_hat / n as f64).sqrt();
    let half = normal_critical(alpha) * se;
    Ok(VarianceReport {
        v_hat,
        autocovariances,
        s_max_used: depth,
        bandwidth,
        alpha,
        ci: (point - half, point + half),
        se,
        floored,
    })
}

/// Whether `truth` lies in the closed interval.
pub fn coverage_indicator(report: &VarianceReport, truth: f64) -> bool {
    report.ci.0 <= truth && truth <= report.ci.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Network;

    fn path3_shells() -> DistanceShell {
        DistanceShell::build(&Network::from_edges(3, &[(0, 1), (1, 2)]).unwrap(), 3)
    }

    #[test]
    fn kernel_values() {
        assert_eq!(kernel_weight(Kernel::Bartlett, 0.0), 1.0);
        assert_eq!(kernel_weight(Kernel::Bartlett, 0.5), 0.5);
        assert_eq!(kernel_weight(Kernel::Bartlett, 1.5), 0.0);
        assert_eq!(kernel_weight(Kernel::Parzen, 0.0), 1.0);
        assert_eq!(kernel_weight(Kernel::Parzen, 1.5), 0.0);
        assert!((kernel_weight(Kernel::Parzen, 0.5) - 0.25).abs() < 1e-15);
        assert!((kernel_weight(Kernel::Parzen, 0.75) - 2.0 * 0.25f64.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn zero_bandwidth_keeps_only_variance() {
        let phi = [1.0, 4.0, -2.0];
        let r = hac_variance(&phi, None, &path3_shells(), 0.0, Kernel::Bartlett, 0.05, 1.0).unwrap();
        let m = 1.0;
        let expect = phi.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 3.0;
        assert!((r.v_hat - expect).abs() < 1e-15);
        assert_eq!(r.autocovariances.len(), 1);
    }

    #[test]
    fn path_hand_computation() {
        let r = hac_variance(&[1.0, 0.0, -1.0], None, &path3_shells(), 2.0, Kernel::Bartlett, 0.05, 0.0).unwrap();
        assert!((r.autocovariances[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(r.autocovariances[1].abs() < 1e-15);
        assert!((r.autocovariances[2] + 2.0 / 3.0).abs() < 1e-15);
        assert!((r.v_hat - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn constant_influence_gives_zero_width() {
        let r = hac_variance(&[0.3; 3], None, &path3_shells(), 2.0, Kernel::Parzen, 0.05, 0.3).unwrap();
        assert_eq!(r.v_hat, 0.0);
        assert_eq!(r.ci.0, r.ci.1);
        assert!(!r.floored);
    }

    #[test]
    fn negative_sum_is_floored() {
        // complete bipartite K_{3,3} with opposite signs on the two sides
        let edges: Vec<(usize, usize)> = (0..3).flat_map(|a| (3..6).map(move |b| (a, b))).collect();
        let sh = DistanceShell::build(&Network::from_edges(6, &edges).unwrap(), 2);
        let r = hac_variance(&[1.0, 1.0, 1.0, -1.0, -1.0, -1.0], None, &sh, 1.9, Kernel::Bartlett, 0.05, 0.0).unwrap();
        assert!(r.floored);
        assert!((r.v_hat - 1e-6).abs() < 1e-18);
    }

    #[test]
    fn argument_errors() {
        let sh = path3_shells();
        assert!(hac_variance(&[1.0, 2.0, 3.0], None, &sh, -1.0, Kernel::Bartlett, 0.05, 0.0).is_err());
        assert!(hac_variance(&[1.0, 2.0, 3.0], None, &sh, 1.0, Kernel::Bartlett, 1.0, 0.0).is_err());
        assert!(hac_variance(&[1.0, 2.0, 3.0], None, &sh, 9.0, Kernel::Bartlett, 0.05, 0.0).is_err());
        assert!(hac_variance(&[1.0, 2.0, 3.0], Some(&[true]), &sh, 1.0, Kernel::Bartlett, 0.05, 0.0).is_err());
    }

    #[test]
    fn masked_units_are_ignored() {
        let sh = path3_shells();
        let full = hac_variance(&[1.0, -1.0, 99.0], Some(&[true, true, false]), &sh, 1.0, Kernel::Bartlett, 0.05, 0.0).unwrap();
        let two = DistanceShell::build(&Network::from_edges(2, &[(0, 1)]).unwrap(), 1);
        let sub = hac_variance(&[1.0, -1.0], None, &two, 1.0, Kernel::Bartlett, 0.05, 0.0).unwrap();
        assert_eq!(full.v_hat, sub.v_hat);
    }

    #[test]
    fn critical_value_and_coverage() {
        assert!((normal_critical(0.05) - 1.959964).abs() < 1e-6);
        let r = VarianceReport {
            v_hat: 1.0,
            autocovariances: vec![1.0],
            s_max_used: 0,
            bandwidth: 0.0,
            alpha: 0.05,
            ci: (0.0, 1.0),
            se: 0.1,
            floored: false,
        };
        assert!(coverage_indicator(&r, 0.5));
        assert!(coverage_indicator(&r, 1.0));
        assert!(!coverage_indicator(&r, 1.2));
    }

    #[test]
    fn config_bandwidth_rule() {
        let cfg = HacConfig::default();
        assert_eq!(cfg.bandwidth_for(1), 2.0);
        assert_eq!(cfg.shell_depth(3), 6);
        assert_eq!(HacConfig::fixed(Kernel::Parzen, 1.5).shell_depth(1), 1);
    }
}
