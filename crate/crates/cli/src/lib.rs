//! Command-line driver: one configuration file per run, one report table
//! per output file.

pub mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ate_fusion::io::{load_sequential, load_static};
use ate_fusion::sequential_estimators::estimate_seq;
use ate_fusion::simulation::{run_coverage_study, run_mse_study};
use ate_fusion::static_estimators::estimate;
use ate_fusion::{ErrorCategory, EstimateReport};
use clap::{Args, Parser, Subcommand};

use config::{Job, Mode, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] ate_fusion::Error),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            CliError::Config(_) => ErrorCategory::Config,
            CliError::Core(e) => e.category(),
            CliError::Write { .. } => ErrorCategory::Data,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category() {
            ErrorCategory::Config => 2,
            ErrorCategory::Data => 3,
            ErrorCategory::Numerical => 4,
        }
    }

    pub fn category_name(&self) -> &'static str {
        match self.category() {
            ErrorCategory::Config => "config",
            ErrorCategory::Data => "data",
            ErrorCategory::Numerical => "numerical",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ate-fusion",
    version,
    about = "Treatment-effect estimation with historical control data"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the ATE from static experimental and historical tables.
    EstimateStatic(RunArgs),
    /// Estimate the ATE from sequential (episode) tables.
    EstimateSequential(RunArgs),
    /// Monte Carlo MSE study.
    Simulate(RunArgs),
    /// Monte Carlo confidence-interval coverage study.
    Coverage(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving the report file.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overrides the split seed (estimation) or master seed (studies).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
}

impl Command {
    fn split(&self) -> (Mode, &RunArgs) {
        match self {
            Command::EstimateStatic(a) => (Mode::EstimateStatic, a),
            Command::EstimateSequential(a) => (Mode::EstimateSequential, a),
            Command::Simulate(a) => (Mode::Simulate, a),
            Command::Coverage(a) => (Mode::Coverage, a),
        }
    }
}

fn provenance(cfg: &RunConfig) -> String {
    let seed = cfg
        .seed()
        .map_or_else(|| "none".to_owned(), |s| s.to_string());
    format!(
        "# ate-fusion {}\n# mode: {}\n# config-sha256: {}\n# seed: {}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.mode.name(),
        cfg.config_hash,
        seed
    )
}

fn estimates_table(reports: &[EstimateReport]) -> String {
    let mut out = format!(
        "{},choice,n_e,n_h,cap_breaches\n",
        EstimateReport::CSV_HEADER
    );
    for r in reports {
        let choice = r.choice.map_or_else(String::new, |c| c.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.csv_row(),
            choice,
            r.n_e,
            r.n_h,
            r.cap_breaches
        );
    }
    out
}

fn summary_line(r: &EstimateReport) -> String {
    let mut s = format!(
        "{}: tau={:.6} se={:.6} ci=[{:.6}, {:.6}] weight={:.4} regime={}",
        r.method,
        r.tau_hat,
        r.var_hat.sqrt(),
        r.ci_lower,
        r.ci_upper,
        r.weight,
        r.regime
    );
    if let Some(c) = r.choice {
        let _ = write!(s, " choice={c}");
    }
    if r.cap_breaches > 0 {
        let _ = write!(s, " cap_breaches={}", r.cap_breaches);
    }
    s
}

/// Execute one configured run; returns the report path and the stdout lines.
pub fn execute(cfg: &RunConfig, out_dir: &Path) -> Result<(PathBuf, Vec<String>), CliError> {
    let (body, lines) = match &cfg.job {
        Job::Static {
            data,
            nuisance,
            methods,
            split_seed,
        } => {
            let ds = load_static(&data.experimental, &data.historical)?;
            let nu = nuisance.fit(ds.experimental(), ds.historical())?;
            let reports = methods
                .iter()
                .map(|&m| estimate(&ds, &nu, m, cfg.alpha, *split_seed))
                .collect::<Result<Vec<_>, _>>()?;
            (
                estimates_table(&reports),
                reports.iter().map(summary_line).collect(),
            )
        }
        Job::Sequential {
            data,
            nuisance,
            behavior,
            methods,
            split_seed,
        } => {
            let ds = load_sequential(&data.experimental, &data.historical)?;
            let nu = nuisance.fit(&ds, &behavior.policy(nuisance.clip)?)?;
            let reports = methods
                .iter()
                .map(|&m| estimate_seq(&ds, &nu, m, cfg.alpha, *split_seed))
                .collect::<Result<Vec<_>, _>>()?;
            (
                estimates_table(&reports),
                reports.iter().map(summary_line).collect(),
            )
        }
        Job::Study(study) => {
            let (report, table) = if cfg.mode == Mode::Coverage {
                let r = run_coverage_study(study)?;
                let t = r.to_coverage_csv();
                (r, t)
            } else {
                let r = run_mse_study(study)?;
                let t = r.to_mse_csv();
                (r, t)
            };
            let cells = report.cells.len();
            let line = format!(
                "{} cells x {} replications, {} methods",
                cells,
                study.replications,
                report.cells.first().map_or(0, |c| c.methods.len())
            );
            (table, vec![line])
        }
    };
    let path = if cfg.output.is_absolute() {
        cfg.output.clone()
    } else {
        out_dir.join(&cfg.output)
    };
    let write_err = |source| CliError::Write {
        path: path.clone(),
        source,
    };
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(write_err)?;
    }
    std::fs::write(&path, format!("{}{}", provenance(cfg), body)).map_err(write_err)?;
    Ok((path, lines))
}

/// Parse, configure the worker pool, run.
pub fn run(cli: Cli) -> Result<(PathBuf, Vec<String>), CliError> {
    let (mode, args) = cli.command.split();
    let cfg = config::load(&args.config, mode, args.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build()
        .map_err(|e| {
            CliError::Config(format!("cannot start {} worker threads: {e}", args.threads))
        })?;
    pool.install(|| execute(&cfg, &args.out))
}
