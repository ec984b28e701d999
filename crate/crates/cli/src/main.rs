//! `qtune`: baseline sweeps, table/attention optimization and evaluation of
//! standard-compatible JPEG encodes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use qtune::experiment::{
    cmd_baseline_sweep, cmd_optimize, cmd_rate_proxy_report, evaluate, load_dataset, parse_config, parse_list,
    read_records, write_proxy_report, write_records, Outcome,
};
use qtune::image::load_image;
use qtune::train::{TrainConfig, TrainMode};

#[derive(Parser)]
#[command(name = "qtune", version, about = "Learned JPEG quantization tables and attention maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Encode every image at each quality factor with the standard tables.
    BaselineSweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated quality factors in [1, 100].
        #[arg(long, default_value = "5,10,15,20,25,30,35,40,45,50,55,60,65,70,75,80,85,90")]
        qualities: String,
    },
    /// Fit tables (and attention) per tradeoff value and write the JPEG files.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Directory for the emitted `.jpg` files; defaults to the CSV's directory.
        #[arg(long)]
        jpeg_dir: Option<PathBuf>,
        /// Comma-separated tradeoff values in [1e-4, 1e-1].
        #[arg(long)]
        lambdas: Option<String>,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<TrainMode>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Rank-correlate rate-loss terms with measured bpp from an optimization CSV.
    RateProxyReport {
        /// CSV written by `optimize`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one JPEG file against its original.
    Evaluate {
        /// Original PNG or PPM.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        jpeg: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Image file or directory of PNG/PPM images.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV.
    #[arg(long)]
    out: PathBuf,
    /// Flat key = value file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

fn parse_mode(s: &str) -> Result<TrainMode, String> {
    s.parse()
}

fn load_config(common: &Common) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg = parse_config(&text, cfg)?;
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("QTUNE_THREADS") {
        let n: usize = v.parse().with_context(|| format!("QTUNE_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

/// Writes the records and reports skipped jobs; fails only if nothing succeeded.
fn finish(outcome: &Outcome, out: &Path) -> Result<()> {
    write_records(out, &outcome.records)?;
    for f in &outcome.failures {
        eprintln!("failed: {}: {}", f.job, f.message);
    }
    log::info!("wrote {} records to {}", outcome.records.len(), out.display());
    if outcome.records.is_empty() && !outcome.failures.is_empty() {
        bail!("every job failed");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BaselineSweep { common, qualities } => {
            let cfg = load_config(&common)?;
            let qualities: Vec<i64> = parse_list(&qualities).map_err(anyhow::Error::msg)?;
            let (images, load_failures) = load_dataset(&common.input)?;
            let mut outcome = cmd_baseline_sweep(&images, &qualities, &cfg.weights, cfg.seed)?;
            outcome.failures.splice(0..0, load_failures);
            finish(&outcome, &common.out)
        }
        Command::Optimize {
            common,
            jpeg_dir,
            lambdas,
            mode,
            steps,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(l) = lambdas {
                cfg.lambda_values = parse_list(&l).map_err(anyhow::Error::msg)?;
            }
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(s) = steps {
                cfg.steps = s;
            }
            let jpeg_dir = jpeg_dir.unwrap_or_else(|| {
                common
                    .out
                    .parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
            });
            let (images, load_failures) = load_dataset(&common.input)?;
            let mut outcome = cmd_optimize(&images, &cfg, &jpeg_dir)?;
            outcome.failures.splice(0..0, load_failures);
            finish(&outcome, &common.out)
        }
        Command::RateProxyReport { input, out } => {
            let records = read_records(&input)?;
            let report = cmd_rate_proxy_report(&records);
            write_proxy_report(&out, &report)?;
            let show = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
            println!("spearman rate_q {}", show(report.spearman_q));
            println!("spearman rate_attention {}", show(report.spearman_attention));
            println!("spearman combined {}", show(report.spearman_combined));
            Ok(())
        }
        Command::Evaluate { input, jpeg } => {
            let original = load_image::<f64>(&input)?;
            let bytes = fs::read(&jpeg).with_context(|| format!("reading {}", jpeg.display()))?;
            let e = evaluate(&original, &bytes)?;
            println!("file_bytes {}", e.file_bytes);
            println!("bpp {:.6}", e.bpp);
            println!("psnr_db {:.4}", e.psnr_db);
            match e.ms_ssim {
                Some(v) => println!("ms_ssim {v:.6}"),
                None => println!("ms_ssim undefined"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Err(e) = init_threads().and_then(|_| run(cli)) {
        eprintln!("error: {e:#}");
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
