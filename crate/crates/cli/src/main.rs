//! `cid`: generate, featurize, train, backtest, compare and report.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cid_core::config::RunConfig;
use cid_core::market::PeriodId;
use cid_core::models::ModelKind;
use cid_core::pipeline::{self, BacktestInput};
use cid_core::Error;
use clap::{Args, Parser, Subcommand};
use tracing_subscriber::EnvFilter;

#[derive(Parser, Debug)]
#[command(name = "cid", version, about = "Directional price forecasting for continuous intraday power markets")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; defaults apply to every missing key.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed overriding the configuration's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic market dataset.
    Generate {
        /// Output directory (falls back to CID_DATA_DIR, then the config's data_dir).
        #[arg(long, env = "CID_DATA_DIR")]
        out: Option<PathBuf>,
    },
    /// Build per-period feature matrices from market data.
    Featurize {
        /// Market data directory.
        #[arg(long, env = "CID_DATA_DIR")]
        data: Option<PathBuf>,
        /// Directory for samples and skip logs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit one model on every labeled sample of a samples file.
    Train {
        #[arg(long)]
        samples: PathBuf,
        /// logistic or pls-gbdt.
        #[arg(long, default_value = "logistic")]
        model: ModelKind,
        /// Model JSON to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Walk-forward backtest over weekly folds.
    Backtest {
        /// Market data directory.
        #[arg(long, env = "CID_DATA_DIR", conflicts_with = "features")]
        data: Option<PathBuf>,
        /// Output directory of `featurize`, used instead of market data.
        #[arg(long)]
        features: Option<PathBuf>,
        /// Directory for predictions.csv, task and fold tables.
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise Diebold-Mariano tests of per-product error rates.
    DmTest {
        #[arg(long)]
        predictions: PathBuf,
        /// p3to2, p2to1 or p1tohalf.
        #[arg(long)]
        period: PeriodId,
        #[arg(long, default_value_t = 0.05)]
        significance: f64,
        /// Directory for dm_matrix_<period>.csv and its figure manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Accuracy, PnL, percentile curves and weekly series.
    Report {
        #[arg(long)]
        predictions: PathBuf,
        /// Directory for metric tables and figures/.
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(common: &Common) -> cid_core::Result<RunConfig> {
    let cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let cfg = cfg.with_seed(common.seed);
    cfg.validate()?;
    Ok(cfg)
}

fn data_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> cid_core::Result<PathBuf> {
    flag.or_else(|| cfg.data_dir.clone())
        .ok_or_else(|| Error::Config("no data directory: pass --data, set CID_DATA_DIR or data_dir".into()))
}

fn run(cli: Cli) -> cid_core::Result<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Error::InvalidArgument("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    }
    let cfg = load_config(&cli.common)?;
    match cli.command {
        Command::Generate { out } => pipeline::generate_to(&cfg, &data_dir(out, &cfg)?),
        Command::Featurize { data, out } => pipeline::featurize(&cfg, &data_dir(data, &cfg)?, &out).map(|_| ()),
        Command::Train { samples, model, out } => pipeline::train(&cfg, &samples, model, &out).map(|_| ()),
        Command::Backtest { data, features, out } => {
            let input = match features {
                Some(f) => BacktestInput::Features(f),
                None => BacktestInput::Market(data_dir(data, &cfg)?),
            };
            let run = pipeline::backtest(&cfg, &input, &out)?;
            for w in &run.warnings {
                tracing::warn!("{w}");
            }
            Ok(())
        }
        Command::DmTest {
            predictions,
            period,
            significance,
            out,
        } => pipeline::dm_test(&cfg, &predictions, period, significance, &out),
        Command::Report { predictions, out } => pipeline::report(&cfg, &predictions, &out),
    }
}

fn error_record(e: &Error) -> serde_json::Value {
    serde_json::json!({
        "error": {
            "kind": e.kind(),
            "message": e.to_string(),
            "path": e.path().map(Path::display).map(|p| p.to_string()),
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::FAILURE
        }
    }
}
