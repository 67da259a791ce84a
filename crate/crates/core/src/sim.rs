//! Monte Carlo harness: repeated draws from the simulation design, every
//! requested estimator on each draw, HAC intervals, and bias / RMSE /
//! coverage summaries. Replications run on a bounded rayon pool and are
//! merged in replication order, so outputs do not depend on scheduling.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{
    build_exposure, canonical_ipw_did, canonical_twfe, dr_did_benchmark, modified_twfe, xu_estimator, ExposureKind,
};
use crate::dgp::{generate_panel_with, SimConfig};
use crate::error::{invalid, Error, Result};
use crate::estimators::{
    dr_adtt, dr_aitt, fit_nuisances, ipw_adtt, ipw_aitt, Estimand, EstimateReport, Method, NuisanceConfig, NuisanceSet, PanelData,
};
use crate::graph::DistanceShell;
use crate::rng::{stream, Rng};
use crate::variance::{coverage_indicator, hac_variance, HacConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    IpwAdtt,
    DrAdtt,
    IpwAitt,
    DrAitt,
    XuOracle,
    XuMo,
    XuFm,
    CanonicalIpw,
    CanonicalTwfe,
    DrDid,
    ModifiedTwfe,
}

impl EstimatorId {
    pub const ALL: [Self; 11] = [
        Self::IpwAdtt,
        Self::DrAdtt,
        Self::XuOracle,
        Self::XuMo,
        Self::XuFm,
        Self::CanonicalIpw,
        Self::CanonicalTwfe,
        Self::DrDid,
        Self::ModifiedTwfe,
        Self::IpwAitt,
        Self::DrAitt,
    ];
    pub const PROPOSED: [Self; 4] = [Self::IpwAdtt, Self::DrAdtt, Self::IpwAitt, Self::DrAitt];

    pub fn estimand(self) -> Estimand {
        match self {
            Self::IpwAitt | Self::DrAitt => Estimand::Aitt,
            _ => Estimand::Adtt,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Self::IpwAdtt => "ipw_adtt",
            Self::DrAdtt => "dr_adtt",
            Self::IpwAitt => "ipw_aitt",
            Self::DrAitt => "dr_aitt",
            Self::XuOracle => "xu_oracle",
            Self::XuMo => "xu_mo",
            Self::XuFm => "xu_fm",
            Self::CanonicalIpw => "canonical_ipw",
            Self::CanonicalTwfe => "canonical_twfe",
            Self::DrDid => "dr_did",
            Self::ModifiedTwfe => "modified_twfe",
        }
    }

    /// Row label used in the replication tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::IpwAdtt | Self::IpwAitt => "Proposed IPW",
            Self::DrAdtt | Self::DrAitt => "Proposed DR",
            Self::XuOracle => "Xu (Oracle)",
            Self::XuMo => "Xu (MO)",
            Self::XuFm => "Xu (FM)",
            Self::CanonicalIpw => "Canonical IPW",
            Self::CanonicalTwfe => "Canonical TWFE",
            Self::DrDid => "DR-DID",
            Self::ModifiedTwfe => "Modified TWFE",
        }
    }

    pub fn needs_nuisances(self) -> bool {
        Self::PROPOSED.contains(&self)
    }
}

/// Grid values for the robustness sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub n_values: Vec<usize>,
    pub rho_values: Vec<f64>,
    pub l_values: Vec<usize>,
    /// Estimators run at every sweep point.
    pub estimators: Vec<EstimatorId>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_values: vec![300, 500, 700],
            rho_values: vec![0.2, 0.5, 0.8],
            l_values: vec![3, 5, 10, 15, 20],
            estimators: EstimatorId::PROPOSED.to_vec(),
        }
    }
}

/// Input files for `estimate`. Exactly one of `points` / `edges` is needed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataPaths {
    pub panel: Option<PathBuf>,
    pub points: Option<PathBuf>,
    pub edges: Option<PathBuf>,
}

/// Everything a command needs; mirrors the JSON accepted by `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub nuisance: NuisanceConfig,
    pub hac: HacConfig,
    pub alpha: f64,
    pub replications: usize,
    /// Worker threads; 0 uses rayon's default.
    pub threads: usize,
    pub estimators: Vec<EstimatorId>,
    pub mo_flip_rate: f64,
    pub sweeps: SweepConfig,
    pub data: DataPaths,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            nuisance: NuisanceConfig::default(),
            hac: HacConfig::default(),
            alpha: 0.05,
            replications: 100,
            threads: 0,
            estimators: EstimatorId::ALL.to_vec(),
            mo_flip_rate: 0.3,
            sweeps: SweepConfig::default(),
            data: DataPaths::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| invalid(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(invalid("replications must be at least 1"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.estimators.is_empty() {
            return Err(invalid("no estimators requested"));
        }
        if !(0.0..=1.0).contains(&self.mo_flip_rate) {
            return Err(invalid("mo_flip_rate must lie in [0, 1]"));
        }
        if self.hac.bandwidth.is_some_and(|b| !(b >= 0.0)) || !(self.hac.multiplier >= 0.0) {
            return Err(invalid("HAC bandwidth must be nonnegative"));
        }
        self.sim.validate()
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| invalid(format!("cannot start thread pool: {e}")))
    }
}

/// One estimator on one replication.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Record {
    pub replication: usize,
    pub estimator: EstimatorId,
    pub estimand: Estimand,
    pub point: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub covered: bool,
    pub truth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub estimator: EstimatorId,
    pub estimand: Estimand,
    pub replications: usize,
    pub truth: f64,
    /// Mean of `point − truth` over replications.
    pub bias: f64,
    pub rmse: f64,
    pub coverage: f64,
    pub mean_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub replication: usize,
    pub estimator: EstimatorId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimResult {
    pub records: Vec<Record>,
    pub aggregates: Vec<Aggregate>,
    pub failures: Vec<Failure>,
    /// Replications whose confounder covariance needed eigenvalue clipping.
    pub psd_repairs: usize,
}

impl SimResult {
    pub fn aggregate(&self, id: EstimatorId) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.estimator == id)
    }
}

/// Runs one estimator and attaches a HAC interval. `s` holds treated
/// counts within `K` (used by the exposure-mapping benchmarks) and `rng`
/// drives the misspecified mapping.
pub fn run_estimator(
    id: EstimatorId,
    data: &PanelData,
    s: &[usize],
    nuis: Option<&NuisanceSet>,
    shells: &DistanceShell,
    cfg: &RunConfig,
    rng: &mut Rng,
) -> Result<EstimateReport> {
    let need = || nuis.ok_or_else(|| Error::Estimation("nuisances were not fitted".into()));
    let mut report = match id {
        EstimatorId::IpwAdtt => ipw_adtt(data, need()?)?,
        EstimatorId::DrAdtt => dr_adtt(data, need()?)?,
        EstimatorId::IpwAitt => ipw_aitt(data, need()?)?,
        EstimatorId::DrAitt => dr_aitt(data, need()?)?,
        EstimatorId::XuOracle | EstimatorId::XuMo | EstimatorId::XuFm => {
            let kind = match id {
                EstimatorId::XuOracle => ExposureKind::Oracle,
                EstimatorId::XuMo => ExposureKind::Mo,
                _ => ExposureKind::Fm,
            };
            let mapping = build_exposure(kind, s, cfg.mo_flip_rate, rng);
            xu_estimator(data, &mapping, Method::Dr)?
        }
        EstimatorId::CanonicalIpw => canonical_ipw_did(data)?,
        EstimatorId::CanonicalTwfe => canonical_twfe(data)?,
        EstimatorId::DrDid => dr_did_benchmark(data)?,
        EstimatorId::ModifiedTwfe => modified_twfe(data)?,
    };
    let bandwidth = cfg.hac.bandwidth_for(data.index.range());
    report.variance = Some(hac_variance(
        &report.influence,
        Some(&report.included),
        shells,
        bandwidth,
        cfg.hac.kernel,
        cfg.alpha,
        report.point,
    )?);
    Ok(report)
}

struct RepOutcome {
    records: Vec<Record>,
    failures: Vec<Failure>,
    psd_repaired: bool,
}

fn replication(cfg: &RunConfig, r: usize) -> Result<RepOutcome> {
    let mut rng = stream(cfg.sim.seed, r as u64);
    let sim = generate_panel_with(&cfg.sim, &mut rng)?;
    let shells = DistanceShell::build(&sim.panel.network, cfg.hac.shell_depth(cfg.sim.range));
    let mut failures = Vec::new();
    let nuis = if cfg.estimators.iter().any(|e| e.needs_nuisances()) {
        match fit_nuisances(&sim.panel, &cfg.nuisance) {
            Ok(n) => Some(n),
            Err(e) => {
                failures.extend(cfg.estimators.iter().filter(|e| e.needs_nuisances()).map(|&estimator| Failure {
                    replication: r,
                    estimator,
                    message: e.to_string(),
                }));
                None
            }
        }
    } else {
        None
    };
    let mut records = Vec::new();
    for &id in &cfg.estimators {
        if id.needs_nuisances() && nuis.is_none() {
            continue;
        }
        match run_estimator(id, &sim.panel, &sim.s, nuis.as_ref(), &shells, cfg, &mut rng) {
            Ok(rep) => {
                let var = rep.variance.as_ref().expect("variance attached");
                let truth = match id.estimand() {
                    Estimand::Adtt => sim.truth.adtt,
                    Estimand::Aitt => sim.truth.aitt,
                };
                records.push(Record {
                    replication: r,
                    estimator: id,
                    estimand: id.estimand(),
                    point: rep.point,
                    se: var.se,
                    ci: var.ci,
                    covered: coverage_indicator(var, truth),
                    truth,
                });
            }
            Err(e) => failures.push(Failure { replication: r, estimator: id, message: e.to_string() }),
        }
    }
    Ok(RepOutcome { records, failures, psd_repaired: sim.psd_repaired > 0 })
}

/// Bias, RMSE, coverage and mean standard error per estimator, in the
/// order estimators were requested.
pub fn aggregate(records: &[Record], order: &[EstimatorId]) -> Vec<Aggregate> {
    order
        .iter()
        .filter_map(|&id| {
            let rows: Vec<&Record> = records.iter().filter(|r| r.estimator == id).collect();
            if rows.is_empty() {
                return None;
            }
            let k = rows.len() as f64;
            let mean = |f: &dyn Fn(&Record) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
            Some(Aggregate {
                estimator: id,
                estimand: id.estimand(),
                replications: rows.len(),
                truth: mean(&|r| r.truth),
                bias: mean(&|r| r.point - r.truth),
                rmse: mean(&|r| (r.point - r.truth).powi(2)).sqrt(),
                coverage: mean(&|r| f64::from(u8::from(r.covered))),
                mean_se: mean(&|r| r.se),
            })
        })
        .collect()
}

/// Runs `cfg.replications` independent replications without writing files.
pub fn run_simulation(cfg: &RunConfig) -> Result<SimResult> {
    cfg.validate()?;
    let outcomes: Vec<Result<RepOutcome>> =
        cfg.pool()?.install(|| (0..cfg.replications).into_par_iter().map(|r| replication(cfg, r)).collect());
    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut psd_repairs = 0;
    for outcome in outcomes {
        let o = outcome?;
        records.extend(o.records);
        failures.extend(o.failures);
        psd_repairs += usize::from(o.psd_repaired);
    }
    let aggregates = aggregate(&records, &cfg.estimators);
    Ok(SimResult { records, aggregates, failures, psd_repairs })
}

pub const RESULTS_HEADER: &str = "replication,estimator,estimand,point,se,ci_lower,ci_upper,covered,truth";
pub const SUMMARY_HEADER: &str = "estimator,estimand,replications,truth,bias,rmse,coverage,mean_se";
pub const TABLE_HEADER: &str = "method,estimator,truth,bias,rmse,coverage,mean_se,replications";
pub const SWEEP_HEADER: &str = "parameter,value,estimator,estimand,truth,bias,rmse,coverage,mean_se,replications";

fn estimand_key(e: Estimand) -> &'static str {
    match e {
        Estimand::Adtt => "ADTT",
        Estimand::Aitt => "AITT",
    }
}

pub fn results_csv(result: &SimResult) -> String {
    let mut out = format!("{RESULTS_HEADER}\n");
    for r in &result.records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.replication,
            r.estimator.key(),
            estimand_key(r.estimand),
            r.point,
            r.se,
            r.ci.0,
            r.ci.1,
            u8::from(r.covered),
            r.truth
        );
    }
    out
}

pub fn summary_csv(result: &SimResult) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for a in &result.aggregates {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            a.estimator.key(),
            estimand_key(a.estimand),
            a.replications,
            a.truth,
            a.bias,
            a.rmse,
            a.coverage,
            a.mean_se
        );
    }
    out
}

/// Table rows for one estimand.
pub fn table_csv(result: &SimResult, estimand: Estimand) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for a in result.aggregates.iter().filter(|a| a.estimand == estimand) {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            a.estimator.label(),
            a.estimator.key(),
            a.truth,
            a.bias,
            a.rmse,
            a.coverage,
            a.mean_se,
            a.replications
        );
    }
    out
}

fn report_failures(result: &SimResult) {
    for f in &result.failures {
        eprintln!("replication {}: {} failed: {}", f.replication, f.estimator.key(), f.message);
    }
}

/// `simulate`: writes `results.csv` and `summary.csv` into `cfg.output_dir`.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<SimResult> {
    let result = run_simulation(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("results.csv"), results_csv(&result))?;
    std::fs::write(cfg.output_dir.join("summary.csv"), summary_csv(&result))?;
    report_failures(&result);
    Ok(result)
}

/// One row block per sweep value.
fn sweep<T: std::fmt::Display + Copy>(
    cfg: &RunConfig,
    parameter: &str,
    values: &[T],
    apply: impl Fn(&mut RunConfig, T),
) -> Result<(String, Vec<SimResult>)> {
    let mut out = format!("{SWEEP_HEADER}\n");
    let mut results = Vec::new();
    for &v in values {
        let mut local = cfg.clone();
        local.estimators = cfg.sweeps.estimators.clone();
        apply(&mut local, v);
        let result = run_simulation(&local)?;
        report_failures(&result);
        for a in &result.aggregates {
            let _ = writeln!(
                out,
                "{parameter},{v},{},{},{},{},{},{},{},{}",
                a.estimator.key(),
                estimand_key(a.estimand),
                a.truth,
                a.bias,
                a.rmse,
                a.coverage,
                a.mean_se,
                a.replications
            );
        }
        results.push(result);
    }
    Ok((out, results))
}

/// Everything produced by `replicate`.
#[derive(Debug, Clone)]
pub struct Replication {
    pub main: SimResult,
    pub n_sweep: Vec<SimResult>,
    pub rho_sweep: Vec<SimResult>,
    pub l_sweep: Vec<SimResult>,
}

/// `replicate`: the main experiment split into `table1.csv` (ADTT) and
/// `table2.csv` (AITT), plus `fig_n_sweep.csv`, `fig_rho_sweep.csv` and
/// `fig_L_sweep.csv`.
pub fn cmd_replicate(cfg: &RunConfig) -> Result<Replication> {
    cfg.validate()?;
    let main = run_simulation(cfg)?;
    report_failures(&main);
    let (n_csv, n_sweep) = sweep(cfg, "n", &cfg.sweeps.n_values, |c, v| c.sim.n = v)?;
    let (rho_csv, rho_sweep) = sweep(cfg, "rho0", &cfg.sweeps.rho_values, |c, v| c.sim.rho0 = v)?;
    let (l_csv, l_sweep) = sweep(cfg, "L", &cfg.sweeps.l_values, |c, v| c.sim.size = v)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("table1.csv"), table_csv(&main, Estimand::Adtt))?;
    std::fs::write(dir.join("table2.csv"), table_csv(&main, Estimand::Aitt))?;
    std::fs::write(dir.join("fig_n_sweep.csv"), n_csv)?;
    std::fs::write(dir.join("fig_rho_sweep.csv"), rho_csv)?;
    std::fs::write(dir.join("fig_L_sweep.csv"), l_csv)?;
    Ok(Replication { main, n_sweep, rho_sweep, l_sweep })
}
