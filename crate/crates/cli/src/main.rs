mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sfdm_core::bench::BenchGrid;
use sfdm_core::data::{GeneratorConfig, GeneratorKind};
use sfdm_core::modes::StatMeasure;
use sfdm_core::training::TrainConfig;
use sfdm_core::verify::Fault;
use sfdm_core::TransformKind;

use commands::Split;
use config::{load_json, RunConfig};
use error::CliError;

/// Spectral operator learning with truncated transforms.
///
/// Exit status: 0 success, 1 invalid input, 2 numerical failure, 3 i/o error.
/// Set SFDM_THREADS to cap the worker pool; results do not depend on it.
#[derive(Parser, Debug)]
#[command(name = "sfdm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Dct2,
    Dft,
}

impl From<Kind> for TransformKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Dct2 => TransformKind::Dct2,
            Kind::Dft => TransformKind::Dft,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Measure {
    /// Mean |Y_k|^2, matching the squared-L2 irreducible loss.
    MeanSquare,
    /// Mean |Y_k|, matching the L1 irreducible loss.
    MeanAbs,
}

impl From<Measure> for StatMeasure {
    fn from(m: Measure) -> Self {
        match m {
            Measure::MeanSquare => StatMeasure::MeanSquare,
            Measure::MeanAbs => StatMeasure::MeanAbs,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a heat (2D) or Burgers (1D) trajectory dataset.
    GenData {
        /// Equation: heat2d or burgers1d.
        #[arg(long)]
        kind: GeneratorKind,
        /// Grid points per axis.
        #[arg(long)]
        resolution: usize,
        /// Number of trajectories.
        #[arg(long)]
        count: usize,
        /// Diffusion coefficient.
        #[arg(long, default_value_t = 0.01)]
        viscosity: f64,
        /// Time between consecutive frames.
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        /// Initial-condition spectral decay exponent.
        #[arg(long, default_value_t = 2.0)]
        decay: f64,
        /// Snapshots per trajectory including the initial condition.
        #[arg(long, default_value_t = 2)]
        frames: usize,
        /// Burgers time step; derived from the stability bound when omitted.
        #[arg(long)]
        dt: Option<f64>,
        /// Seed for the random initial conditions.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Leading fraction of trajectories used for training.
        #[arg(long, default_value_t = 0.8)]
        train_fraction: f64,
        /// Fraction after the training split used for validation; the rest is test.
        #[arg(long, default_value_t = 0.1)]
        val_fraction: f64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Base name of the dataset and manifest files.
        #[arg(long, default_value = "dataset")]
        name: String,
    },
    /// Train a model from a JSON run config.
    Train {
        /// JSON run config with datamodule, model, train and loss_fn sections.
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to `runs/<config stem>`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override `train.epochs`.
        #[arg(long)]
        epochs: Option<usize>,
        /// Override `train.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a dataset split; prints JSON.
    Eval {
        /// Checkpoint written by train.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset manifest written by gen-data.
        #[arg(long)]
        data: PathBuf,
        /// Run config supplying history_size, target_steps and rollout_order.
        #[arg(long)]
        config: Option<PathBuf>,
        /// train, val, test or all.
        #[arg(long, default_value = "test")]
        split: Split,
        /// Autoregressive steps to score; 0 scores one-step predictions only.
        #[arg(long, default_value_t = 0)]
        rollout_steps: usize,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruction error and irreducible loss versus retained modes.
    AnalyzeModes {
        /// Dataset manifest; the last frame of each trajectory is analyzed.
        #[arg(long)]
        data: PathBuf,
        /// Spectral basis.
        #[arg(long, value_enum, default_value_t = Kind::Dct2)]
        transform: Kind,
        /// Comma-separated modes per axis.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        m_values: Vec<usize>,
        /// Split to evaluate; top-k statistics always come from train.
        #[arg(long, default_value = "test")]
        split: Split,
        /// Statistic ranking modes for top-k.
        #[arg(long, value_enum, default_value_t = Measure::MeanSquare)]
        measure: Measure,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the output-to-input variance ratio of initialization schemes.
    CheckInit {
        /// Comma-separated spectrum sizes.
        #[arg(long, value_delimiter = ',', default_value = "64,256,1024")]
        n: Vec<usize>,
        /// Retained modes.
        #[arg(long, default_value_t = 16)]
        m: usize,
        /// Inputs per weight draw.
        #[arg(long, default_value_t = 1000)]
        batch: usize,
        /// Weight draws per scheme.
        #[arg(long, default_value_t = 20)]
        draws: usize,
        /// Seed for inputs and weights.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time paired T1 and FNO-style stacks and report the speedup.
    Bench {
        /// JSON grid file; overrides the grid flags.
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Comma-separated layer counts.
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        depths: Vec<usize>,
        /// Comma-separated channel counts.
        #[arg(long, value_delimiter = ',', default_value = "32")]
        widths: Vec<usize>,
        /// Comma-separated grid points per axis.
        #[arg(long, value_delimiter = ',', default_value = "32,64")]
        resolutions: Vec<usize>,
        /// Timed samples per cell (at least 5).
        #[arg(long, default_value_t = 7)]
        repetitions: usize,
        /// Untimed passes before sampling.
        #[arg(long, default_value_t = 2)]
        warmup: usize,
        /// Retained modes per axis.
        #[arg(long, default_value_t = 8)]
        modes: usize,
        /// 1 for signals, 2 for square grids.
        #[arg(long, default_value_t = 2)]
        ndim: usize,
        /// Spectral basis.
        #[arg(long, value_enum, default_value_t = Kind::Dft)]
        transform: Kind,
        /// Seed for inputs and weights.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV output path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suite; exits 2 if any check fails.
    Verify {
        /// Write a JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, hide = true, default_value = "none")]
        inject: Fault,
    },
}

fn run(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::GenData {
            kind,
            resolution,
            count,
            viscosity,
            horizon,
            decay,
            frames,
            dt,
            seed,
            train_fraction,
            val_fraction,
            out,
            name,
        } => {
            let mut cfg = GeneratorConfig::new(kind, resolution, viscosity, horizon, count, seed);
            cfg.decay = decay;
            cfg.frames = frames;
            cfg.dt = dt;
            cfg.train_fraction = train_fraction;
            cfg.val_fraction = val_fraction;
            commands::gen_data(&cfg, &out, &name)
        }
        Command::Train {
            config,
            out,
            epochs,
            seed,
        } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            cfg.validate()?;
            let out = out.unwrap_or_else(|| {
                let stem = config
                    .file_stem()
                    .map(|s| s.to_os_string())
                    .unwrap_or_default();
                PathBuf::from("runs").join(stem)
            });
            commands::train(&cfg, &out)
        }
        Command::Eval {
            checkpoint,
            data,
            config,
            split,
            rollout_steps,
            out,
        } => {
            let train = match config {
                Some(p) => RunConfig::load(&p)?.train,
                None => TrainConfig::new(1, 1, 1e-3, 0),
            };
            commands::eval(
                &checkpoint,
                &data,
                &train,
                split,
                rollout_steps,
                out.as_deref(),
            )
        }
        Command::AnalyzeModes {
            data,
            transform,
            m_values,
            split,
            measure,
            out,
        } => commands::analyze_modes(
            &data,
            transform.into(),
            &m_values,
            split,
            measure.into(),
            out.as_deref(),
        ),
        Command::CheckInit {
            n,
            m,
            batch,
            draws,
            seed,
            out,
        } => commands::check_init(&n, m, batch, draws, seed, out.as_deref()),
        Command::Bench {
            grid,
            depths,
            widths,
            resolutions,
            repetitions,
            warmup,
            modes,
            ndim,
            transform,
            seed,
            out,
        } => {
            let grid = match grid {
                Some(p) => load_json(&p)?,
                None => BenchGrid {
                    depths,
                    widths,
                    resolutions,
                    repetitions,
                    warmup,
                    modes,
                    ndim,
                    seed,
                },
            };
            commands::bench(&grid, transform.into(), out.as_deref())
        }
        Command::Verify { out, inject } => commands::verify(inject, out.as_deref()),
    }
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SFDM_THREADS") else {
        return Ok(());
    };
    let n: usize = v.parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::Validation(format!(
            "SFDM_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sfdm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
