//! File formats and the `estimate` workflow.
//!
//! - panel input: `id,z…,d,y1,y2` where every column named `z` or
//!   starting with `z` is a covariate; other columns are ignored, so the
//!   simulation export (`id,x,y,z,d,y1,y2,s`) reads back directly;
//! - points: `id,x,y`; edges: `src,dst`;
//! - ids are `0..n` in any row order.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dgp::SimulatedPanel;
use crate::error::{Error, Result};
use crate::estimators::{fit_nuisances, Estimand, EstimateReport, Method, PanelData};
use crate::graph::{read_edges_csv, read_points_csv, DistanceShell, NeighborhoodIndex, Network};
use crate::rng::seeded;
use crate::sim::{run_estimator, EstimatorId, RunConfig};

/// Columns of a panel file after validation, rows ordered by id.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelColumns {
    pub covariate_names: Vec<String>,
    pub z: DMatrix<f64>,
    pub d: Vec<u8>,
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
}

fn schema(msg: impl Into<String>) -> Error {
    Error::Schema(msg.into())
}

pub fn read_panel_csv(path: &Path) -> Result<PanelColumns> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| schema(format!("{}: missing required column `{name}`", path.display())))
    };
    let (id_col, d_col, y1_col, y2_col) = (find("id")?, find("d")?, find("y1")?, find("y2")?);
    let z_cols: Vec<usize> = (0..headers.len()).filter(|&c| headers[c].trim().starts_with('z')).collect();
    let covariate_names = z_cols.iter().map(|&c| headers[c].trim().to_string()).collect();

    let mut rows: Vec<Option<(Vec<f64>, u8, f64, f64)>> = Vec::new();
    let mut parsed = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let num = |c: usize| {
            record[c]
                .trim()
                .parse::<f64>()
                .map_err(|_| schema(format!("row {}: column `{}` is not a number", line + 1, &headers[c])))
        };
        let id: usize = record[id_col]
            .trim()
            .parse()
            .map_err(|_| schema(format!("row {}: id must be a nonnegative integer", line + 1)))?;
        let d = match record[d_col].trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(schema(format!("row {}: d must be 0 or 1, got `{other}`", line + 1))),
        };
        let z = z_cols.iter().map(|&c| num(c)).collect::<Result<Vec<_>>>()?;
        parsed.push((id, (z, d, num(y1_col)?, num(y2_col)?)));
    }
    rows.resize(parsed.len(), None);
    for (id, row) in parsed {
        match rows.get_mut(id) {
            Some(slot @ None) => *slot = Some(row),
            _ => return Err(schema(format!("id {id} is duplicated or not in 0..n"))),
        }
    }
    let rows: Vec<_> = rows.into_iter().map(|r| r.expect("ids form a permutation")).collect();
    let n = rows.len();
    let p = z_cols.len();
    Ok(PanelColumns {
        covariate_names,
        z: DMatrix::from_fn(n, p, |i, c| rows[i].0[c]),
        d: rows.iter().map(|r| r.1).collect(),
        y1: rows.iter().map(|r| r.2).collect(),
        y2: rows.iter().map(|r| r.3).collect(),
    })
}

/// Writes `id,x,y,z,d,y1,y2,s` for a simulated panel.
pub fn write_panel_csv(path: &Path, sim: &SimulatedPanel) -> Result<()> {
    let panel = &sim.panel;
    let mut out = String::from("id,x,y,z,d,y1,y2,s\n");
    for i in 0..panel.n() {
        let [x, y] = sim.points[i];
        let _ = writeln!(
            out,
            "{i},{x},{y},{},{},{},{},{}",
            panel.z[(i, 0)],
            panel.d[i],
            panel.y1[i],
            panel.y2[i],
            sim.s[i]
        );
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_points_csv(path: &Path, points: &[[f64; 2]]) -> Result<()> {
    let mut out = String::from("id,x,y\n");
    for (i, [x, y]) in points.iter().enumerate() {
        let _ = writeln!(out, "{i},{x},{y}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn write_edges_csv(path: &Path, net: &Network) -> Result<()> {
    let mut out = String::from("src,dst\n");
    for (a, b) in net.edges() {
        let _ = writeln!(out, "{a},{b}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads the panel and network named in `cfg.data` and builds the
/// neighbourhood index with `cfg.sim.size` and `cfg.sim.range`. Points are
/// linked with `cfg.sim.adjacency_radius` under `cfg.sim.metric`.
pub fn load_panel(cfg: &RunConfig) -> Result<PanelData> {
    let panel_path = cfg.data.panel.as_deref().ok_or_else(|| schema("no panel file given (data.panel)"))?;
    let cols = read_panel_csv(panel_path)?;
    let n = cols.d.len();
    let network = match (&cfg.data.points, &cfg.data.edges) {
        (Some(points), _) => {
            let pts = read_points_csv(points)?;
            if pts.len() != n {
                return Err(schema(format!("points file has {} rows but the panel has {n}", pts.len())));
            }
            Network::from_points(&pts, cfg.sim.adjacency_radius, cfg.sim.metric)?
        }
        (None, Some(edges)) => read_edges_csv(edges, n)?,
        (None, None) => return Err(Error::MissingNetwork("give data.points or data.edges".into())),
    };
    let index = NeighborhoodIndex::build(&network, &cols.d, cfg.sim.size, cfg.sim.range, None)?;
    PanelData::new(cols.z, cols.d, cols.y1, cols.y2, network, index)
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateEntry {
    pub estimator: EstimatorId,
    pub estimand: Estimand,
    pub method: Method,
    pub point: f64,
    pub se: f64,
    pub ci: (f64, f64),
    pub v_hat: f64,
    pub variance_floored: bool,
    pub units: usize,
    pub trimmed: usize,
    pub excluded_units: usize,
    pub range_violations: usize,
    pub nuisance_converged: bool,
    pub notes: Vec<String>,
}

impl EstimateEntry {
    fn new(estimator: EstimatorId, r: &EstimateReport) -> Self {
        let v = r.variance.as_ref().expect("variance attached");
        Self {
            estimator,
            estimand: r.estimand,
            method: r.method,
            point: r.point,
            se: v.se,
            ci: v.ci,
            v_hat: v.v_hat,
            variance_floored: v.floored,
            units: r.n,
            trimmed: r.diagnostics.trimmed,
            excluded_units: r.diagnostics.excluded_units,
            range_violations: r.diagnostics.range_violations,
            nuisance_converged: r.diagnostics.nuisance_converged,
            notes: r.diagnostics.notes.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateFailure {
    pub estimator: EstimatorId,
    pub message: String,
}

/// Contents of `estimates.json`.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateOutput {
    pub n: usize,
    pub covariates: usize,
    pub neighborhood_size: usize,
    pub interference_range: u32,
    pub bandwidth: f64,
    pub alpha: f64,
    pub critical_value: f64,
    pub range_violations: usize,
    pub estimates: Vec<EstimateEntry>,
    pub failures: Vec<EstimateFailure>,
}

/// Runs every requested estimator on `data`. Individual failures are
/// collected rather than aborting; a lack of overlap aborts because every
/// estimator needs both groups.
pub fn estimate_panel(data: &PanelData, cfg: &RunConfig) -> Result<EstimateOutput> {
    let treated = data.d.iter().filter(|&&v| v == 1).count();
    if treated == 0 || treated == data.n() {
        return Err(Error::NoOverlap("the panel has only treated or only control units".into()));
    }
    let k = data.index.range();
    let shells = DistanceShell::build(&data.network, cfg.hac.shell_depth(k));
    let s = data.treated_within_range();
    let mut rng = seeded(cfg.sim.seed);
    let mut failures = Vec::new();
    let nuis = if cfg.estimators.iter().any(|e| e.needs_nuisances()) {
        Some(fit_nuisances(data, &cfg.nuisance)?)
    } else {
        None
    };
    let mut estimates = Vec::new();
    for &id in &cfg.estimators {
        match run_estimator(id, data, &s, nuis.as_ref(), &shells, cfg, &mut rng) {
            Ok(r) => estimates.push(EstimateEntry::new(id, &r)),
            Err(e) => failures.push(EstimateFailure { estimator: id, message: e.to_string() }),
        }
    }
    Ok(EstimateOutput {
        n: data.n(),
        covariates: data.p(),
        neighborhood_size: data.index.size(),
        interference_range: k,
        bandwidth: cfg.hac.bandwidth_for(k),
        alpha: cfg.alpha,
        critical_value: crate::variance::normal_critical(cfg.alpha),
        range_violations: data.index.range_violations(),
        estimates,
        failures,
    })
}

/// `estimate`: loads the files named in `cfg.data`, estimates, and writes
/// `estimates.json` into `cfg.output_dir`.
pub fn cmd_estimate(cfg: &RunConfig) -> Result<EstimateOutput> {
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(crate::error::invalid(format!("alpha must lie in (0, 1), got {}", cfg.alpha)));
    }
    let data = load_panel(cfg)?;
    let out = estimate_panel(&data, cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    std::fs::write(cfg.output_dir.join("estimates.json"), serde_json::to_string_pretty(&out)?)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate_panel, SimConfig};

    #[test]
    fn panel_round_trip_through_files() {
        let dir = tempfile::tempdir().unwrap();
        let sim = generate_panel(&SimConfig { n: 80, seed: 3, ..Default::default() }).unwrap();
        let path = dir.path().join("panel.csv");
        write_panel_csv(&path, &sim).unwrap();
        let cols = read_panel_csv(&path).unwrap();
        assert_eq!(cols.covariate_names, vec!["z"]);
        assert_eq!(cols.d, sim.panel.d);
        assert_eq!(cols.y2, sim.panel.y2);
        assert_eq!(cols.z, sim.panel.z);
    }

    #[test]
    fn rows_are_reordered_by_id() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "id,z1,z2,d,y1,y2\n1,0.5,1,0,2,3\n0,-1,2,1,0,1\n").unwrap();
        let cols = read_panel_csv(&path).unwrap();
        assert_eq!(cols.d, vec![1, 0]);
        assert_eq!(cols.z[(1, 1)], 1.0);
        assert_eq!(cols.covariate_names, vec!["z1", "z2"]);
    }

    #[test]
    fn schema_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "id,z,y1,y2\n0,1,2,3\n").unwrap();
        assert!(matches!(read_panel_csv(&path), Err(Error::Schema(_))));
        std::fs::write(&path, "id,z,d,y1,y2\n0,1,2,3,4\n").unwrap();
        assert!(matches!(read_panel_csv(&path), Err(Error::Schema(_))));
        std::fs::write(&path, "id,z,d,y1,y2\n0,1,1,3,4\n0,1,0,3,4\n").unwrap();
        assert!(matches!(read_panel_csv(&path), Err(Error::Schema(_))));
    }

    #[test]
    fn missing_network_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, "id,z,d,y1,y2\n0,1,1,3,4\n1,0,0,1,1\n").unwrap();
        let mut cfg = RunConfig::default();
        cfg.data.panel = Some(path);
        assert!(matches!(load_panel(&cfg), Err(Error::MissingNetwork(_))));
    }
}
