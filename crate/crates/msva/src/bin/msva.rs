//! Thin command-line front end over the pipeline functions in `msva::cli`.
//!
//! Exit codes: 0 success, 1 validation failure, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use msva::cli::{
    cmd_ablate, cmd_eval, cmd_splits, cmd_synth, cmd_train, AblationGrid, CliError, RunConfig,
    RunOverrides,
};
use msva::data::SynthSpec;
use msva::eval::F1Mode;
use msva::model::{Aperture, FusionStrategy};
use msva::stream::{parse_stream_list, Stream};

#[derive(Parser)]
#[command(
    name = "msva",
    about = "Multi-source visual attention video summarization: splits, synthetic data, training, evaluation, ablation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by train/eval/ablate. Unset flags fall back to the config
/// file (when given), then to built-in defaults.
#[derive(Args)]
struct RunArgs {
    /// Dataset manifest path
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory for checkpoints/reports
    #[arg(long)]
    out: PathBuf,
    /// Optional JSON config file with the same keys as the flags below
    #[arg(long)]
    config: Option<PathBuf>,
    /// Streams to use, comma separated (object,rgb,flow)
    #[arg(long)]
    streams: Option<String>,
    /// Fusion strategy: early|intermediate|late
    #[arg(long)]
    fusion: Option<FusionStrategy>,
    /// Head dropout rate in [0,1)
    #[arg(long)]
    dropout: Option<f64>,
    /// Attention half-window: N or "unbounded"
    #[arg(long)]
    aperture: Option<Aperture>,
    /// Maximum training epochs per fold
    #[arg(long)]
    epochs: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Decoupled L2 weight decay
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Consecutive stalled epochs before stopping
    #[arg(long)]
    patience: Option<usize>,
    /// Relative improvement below which an epoch counts as stalled
    #[arg(long)]
    stall_tolerance: Option<f64>,
    /// Per-video F1 aggregation: max|avg
    #[arg(long)]
    f1_mode: Option<F1Mode>,
    /// Summary length budget as a fraction of original frames
    #[arg(long)]
    budget_fraction: Option<f64>,
    /// Base seed for splits-independent run randomness
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let file = match &self.config {
            Some(path) => Some(RunOverrides::load(path)?),
            None => None,
        };
        let streams = match &self.streams {
            Some(raw) => Some(parse_stream_list(raw).map_err(CliError::Config)?),
            None => None,
        };
        let flags = RunOverrides {
            streams,
            fusion: self.fusion,
            dropout: self.dropout,
            aperture: self.aperture,
            epochs: self.epochs,
            lr: self.lr,
            weight_decay: self.weight_decay,
            stall_patience: self.patience,
            stall_tolerance: self.stall_tolerance,
            f1_mode: self.f1_mode,
            budget_fraction: self.budget_fraction,
            seed: self.seed,
        };
        Ok(RunConfig::resolve(
            self.manifest.clone(),
            self.out.clone(),
            file,
            flags,
        ))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate non-overlapping k-fold splits for a dataset manifest
    Splits {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output split file (JSON)
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset (bundles + manifest)
    Synth {
        #[arg(long, default_value_t = 10)]
        videos: usize,
        #[arg(long, default_value_t = 32)]
        t_min: usize,
        #[arg(long, default_value_t = 64)]
        t_max: usize,
        #[arg(long, default_value_t = 16)]
        dims: usize,
        #[arg(long, default_value_t = 5)]
        users: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synthetic")]
        name: String,
        /// Output dataset directory
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model per fold
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Split file produced by `msva splits`
        #[arg(long)]
        splits: PathBuf,
    },
    /// Evaluate fold checkpoints: report.csv, per-video curves, F1 bar data
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        splits: PathBuf,
        /// Directory holding fold_<i>/best checkpoints (defaults to --out)
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Train+evaluate a grid of fusion/stream/aperture combinations
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        splits: PathBuf,
        /// Fusion strategies, comma separated
        #[arg(long, default_value = "early,intermediate,late")]
        fusions: String,
        /// Stream subsets, semicolon separated (e.g. "object;object,rgb;object,rgb,flow")
        #[arg(long, default_value = "object;object,rgb,flow")]
        stream_sets: String,
        /// Apertures, comma separated (integers or "unbounded")
        #[arg(long, default_value = "250")]
        apertures: String,
    },
}

fn parse_grid(fusions: &str, stream_sets: &str, apertures: &str) -> Result<AblationGrid, CliError> {
    let fusions: Vec<FusionStrategy> = fusions
        .split(',')
        .map(|s| s.trim().parse().map_err(CliError::Config))
        .collect::<Result<_, _>>()?;
    let stream_sets: Vec<Vec<Stream>> = stream_sets
        .split(';')
        .map(|set| parse_stream_list(set).map_err(CliError::Config))
        .collect::<Result<_, _>>()?;
    let apertures: Vec<Aperture> = apertures
        .split(',')
        .map(|s| s.trim().parse().map_err(CliError::Config))
        .collect::<Result<_, _>>()?;
    Ok(AblationGrid {
        fusions,
        stream_sets,
        apertures,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Splits {
            manifest,
            k,
            seed,
            out,
        } => {
            let split = cmd_splits(&manifest, k, seed, &out)?;
            println!("wrote {} folds to {}", split.k(), out.display());
        }
        Command::Synth {
            videos,
            t_min,
            t_max,
            dims,
            users,
            seed,
            name,
            out,
        } => {
            let spec = SynthSpec {
                n_videos: videos,
                t_min,
                t_max,
                dims,
                n_users: users,
                seed,
            };
            let manifest = cmd_synth(&spec, &name, &out)?;
            println!(
                "wrote dataset {:?} with {} videos to {}",
                manifest.name,
                manifest.videos.len(),
                out.display()
            );
        }
        Command::Train { run, splits } => {
            let cfg = run.resolve()?;
            cmd_train(&cfg, &splits)?;
            println!("checkpoints written to {}", cfg.out_dir.display());
        }
        Command::Eval {
            run,
            splits,
            checkpoints,
        } => {
            let cfg = run.resolve()?;
            let ckpt_dir = checkpoints.unwrap_or_else(|| cfg.out_dir.clone());
            let report = cmd_eval(&cfg, &splits, &ckpt_dir)?;
            let fmt = |v: Option<f64>| v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into());
            println!(
                "evaluated {} videos: F1 {:.4}  tau {}  rho {} ({} tau / {} rho defined)",
                report.overall.n_videos,
                report.overall.f1,
                fmt(report.overall.tau),
                fmt(report.overall.rho),
                report.overall.n_tau_defined,
                report.overall.n_rho_defined,
            );
            println!("report written to {}", cfg.out_dir.join("report.csv").display());
        }
        Command::Ablate {
            run,
            splits,
            fusions,
            stream_sets,
            apertures,
        } => {
            let cfg = run.resolve()?;
            let grid = parse_grid(&fusions, &stream_sets, &apertures)?;
            let rows = cmd_ablate(&cfg, &grid, &splits)?;
            for row in &rows {
                let names: Vec<&str> = row.streams.iter().map(|s| s.name()).collect();
                println!(
                    "{:<13} {:<22} aperture {:<9} F1 {:.2}",
                    row.fusion.to_string(),
                    names.join("+"),
                    row.aperture.to_string(),
                    100.0 * row.f1
                );
            }
            println!(
                "ablation table written to {}",
                cfg.out_dir.join("ablation.csv").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
