use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use netdid::io::cmd_estimate;
use netdid::sim::{cmd_replicate, cmd_simulate, RunConfig, RESULTS_HEADER, SUMMARY_HEADER, SWEEP_HEADER, TABLE_HEADER};
use netdid::Error;

const AFTER_HELP: &str = "\
Output columns:
  results.csv   replication,estimator,estimand,point,se,ci_lower,ci_upper,covered,truth
  summary.csv   estimator,estimand,replications,truth,bias,rmse,coverage,mean_se
  table1.csv / table2.csv   method,estimator,truth,bias,rmse,coverage,mean_se,replications
  fig_*_sweep.csv   parameter,value,estimator,estimand,truth,bias,rmse,coverage,mean_se,replications

Input files for estimate:
  panel   id,z...,d,y1,y2   (every column starting with `z` is a covariate)
  points  id,x,y            or   edges  src,dst

Exit codes: 0 ok, 1 other error, 2 invalid arguments or config, 3 schema mismatch,
4 missing network input, 5 no overlap, 6 some estimators failed.";

#[derive(Parser)]
#[command(name = "netdid", version, about = "DID estimation under local network interference", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON file mirroring the run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (default 20240501)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run of the simulation design; writes results.csv and summary.csv
    Simulate {
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
    },
    /// Estimate on user data; writes estimates.json
    Estimate {
        #[arg(long)]
        panel: Option<PathBuf>,
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long)]
        edges: Option<PathBuf>,
    },
    /// Tables and robustness sweeps; writes table1.csv, table2.csv and fig_*_sweep.csv
    Replicate {
        #[arg(long)]
        replications: Option<usize>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidInput(_) | Error::Json(_) => 2,
        Error::Schema(_) | Error::Csv(_) => 3,
        Error::MissingNetwork(_) => 4,
        Error::NoOverlap(_) => 5,
        _ => 1,
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.sim.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(out) = cli.out {
        cfg.output_dir = out;
    }
    // sanity check that header constants stay in sync with the help text
    debug_assert!(AFTER_HELP.contains(RESULTS_HEADER) && AFTER_HELP.contains(SUMMARY_HEADER));
    debug_assert!(AFTER_HELP.contains(TABLE_HEADER) && AFTER_HELP.contains(SWEEP_HEADER));
    match cli.command {
        Command::Simulate { replications, n } => {
            cfg.replications = replications.unwrap_or(cfg.replications);
            cfg.sim.n = n.unwrap_or(cfg.sim.n);
            let res = cmd_simulate(&cfg)?;
            Ok(res.failures.is_empty())
        }
        Command::Estimate { panel, points, edges } => {
            cfg.data.panel = panel.or(cfg.data.panel);
            cfg.data.points = points.or(cfg.data.points);
            cfg.data.edges = edges.or(cfg.data.edges);
            let out = cmd_estimate(&cfg)?;
            for f in &out.failures {
                eprintln!("{} failed: {}", f.estimator.key(), f.message);
            }
            Ok(out.failures.is_empty())
        }
        Command::Replicate { replications } => {
            cfg.replications = replications.unwrap_or(cfg.replications);
            let rep = cmd_replicate(&cfg)?;
            let all = std::iter::once(&rep.main).chain(&rep.n_sweep).chain(&rep.rho_sweep).chain(&rep.l_sweep);
            Ok(all.into_iter().all(|r| r.failures.is_empty()))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(6),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
