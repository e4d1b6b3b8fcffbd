use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use transient_impact::calibration::LambdaVariant;
use transient_impact::report::{self, PercentileMethod, ReportConfig, PARAMETERS_FILE};

/// Impact calibration and optimal liquidation reports.
#[derive(Debug, Parser)]
#[command(name = "timpact", version)]
struct Cli {
    /// TOML config with top-level settings and `[[stock]]` entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for all outputs.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Seed override for `simulate`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Time-grid points for schedules and costs.
    #[arg(long, global = true)]
    grid_points: Option<usize>,
    /// Include TMP columns in the comparison table.
    #[arg(long, global = true)]
    include_tmp: bool,
    /// Use the tangent `B1/4` for the down-probability shift.
    #[arg(long, global = true)]
    tangent_lambda: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Percentile {
    Hazen,
    Inclusive,
}

impl From<Percentile> for PercentileMethod {
    fn from(p: Percentile) -> Self {
        match p {
            Percentile::Hazen => PercentileMethod::Hazen,
            Percentile::Inclusive => PercentileMethod::Inclusive,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Calibrate every stock with an input event file.
    Calibrate,
    /// Optimal schedules and their costs.
    Strategize {
        /// Parameter records; defaults to `<out-dir>/parameters.tsv` when present.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// ALL vs INS (and TMP) cost comparison.
    Compare {
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Distribution statistics of numeric columns.
    Summary {
        /// Restrict to these columns.
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
        /// Quartile interpolation rule.
        #[arg(long, value_enum, default_value_t = Percentile::Hazen)]
        percentile: Percentile,
        /// Tab-separated tables with a header row.
        #[arg(required = true)]
        tables: Vec<PathBuf>,
    },
    /// Generate a synthetic event stream from `[simulate]`.
    Simulate,
}

fn load_config(cli: &Cli) -> Result<ReportConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ReportConfig::load(path)
            .with_context(|| format!("loading {}", path.display()))?,
        None => ReportConfig::default(),
    };
    if let Some(n) = cli.grid_points {
        if n < 3 {
            bail!("--grid-points must be at least 3");
        }
        cfg.grid_points = n;
    }
    if cli.include_tmp {
        cfg.include_tmp = true;
    }
    if cli.tangent_lambda {
        cfg.lambda_variant = LambdaVariant::Tangent;
    }
    Ok(cfg)
}

fn load_records(explicit: Option<&Path>, out_dir: &Path) -> Result<Vec<report::ParameterRecord>> {
    let default = out_dir.join(PARAMETERS_FILE);
    let path = match explicit {
        Some(p) => p.to_path_buf(),
        None if default.exists() => default,
        None => return Ok(Vec::new()),
    };
    report::read_records(&path).with_context(|| format!("reading {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = &cli.out_dir;
    match &cli.command {
        Command::Calibrate => {
            let r = report::cmd_calibrate(&cfg, out)?;
            log::info!("calibrated {} stocks, {} failed", r.records.len(), r.failures.len());
        }
        Command::Strategize { records } => {
            let records = load_records(records.as_deref(), out)?;
            let rows = report::cmd_strategize(&cfg, &records, out)?;
            if rows.is_empty() {
                log::warn!("no stocks with impact records");
            }
        }
        Command::Compare { records } => {
            let records = load_records(records.as_deref(), out)?;
            let rows = report::cmd_compare(&cfg, &records, out)?;
            for c in &rows {
                log::info!("{}: improvement {:.3}%", c.stock, c.improvement);
            }
        }
        Command::Summary {
            columns,
            percentile,
            tables,
        } => {
            report::cmd_summary(tables, columns, (*percentile).into(), out)?;
        }
        Command::Simulate => {
            let path = report::cmd_simulate(&cfg, cli.seed, out)?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
