//! `perl-traj`: synthetic corpora, calibration, training, prediction,
//! evaluation and data-size sweeps for residual car-following models.
//!
//! Exit status: 0 success, 1 usage, 2 data error, 3 numeric error,
//! 4 partial sweep failure.

mod commands;
mod manifest;
mod settings;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::PartialSweep;
use manifest::{RunManifest, RunRecord, MANIFEST_FILE};
use settings::{Settings, UsageError};

#[derive(Debug, Parser)]
#[command(name = "perl-traj", version, about = "Physics-enhanced residual learning for car-following prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON config with flat dotted keys; flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Directory receiving the outputs and manifest.json.
    #[arg(long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic trajectory corpus (raw CSV).
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: u64,
        /// idm or newell_shift.
        #[arg(long)]
        generator: Option<String>,
        /// Follower acceleration noise, m/s².
        #[arg(long)]
        noise: Option<f64>,
        /// Wave speed for newell_shift, m/s.
        #[arg(long)]
        w: Option<f64>,
        #[arg(long)]
        platoons: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Cut a raw CSV into windowed samples and a train/val/test split.
    Extract {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        t_back: Option<usize>,
        #[arg(long)]
        t_fwd: Option<usize>,
        #[arg(long = "k")]
        k_vehicles: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        split_seed: Option<u64>,
    },
    /// Fit a physics model on the training split.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        /// newell, idm or fvd.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
    },
    /// Train the network of the nn, pinn or perl variant.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        variant: Option<String>,
        /// Calibration report or physics parameters (pinn, perl).
        #[arg(long)]
        physics: Option<PathBuf>,
        #[arg(long)]
        cell: Option<String>,
        #[arg(long)]
        units1: Option<usize>,
        #[arg(long)]
        units2: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Use a seeded subset of the training split.
        #[arg(long)]
        train_size: Option<usize>,
        /// Output head: linear or relu.
        #[arg(long)]
        activation: Option<String>,
    },
    /// Predict future accelerations and speeds for one split.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        split: Option<PathBuf>,
        /// train, val, test (default) or all.
        #[arg(long)]
        subset: Option<String>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        physics: Option<PathBuf>,
        #[arg(long)]
        variant: Option<String>,
    },
    /// Score predictions against the samples' ground truth.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        samples: Option<PathBuf>,
        /// Adds the convergence curve and training metadata.
        #[arg(long)]
        train_report: Option<PathBuf>,
        /// Also write summary.csv and convergence.csv here.
        #[arg(long)]
        plot_dir: Option<PathBuf>,
    },
    /// Train and evaluate every (size, variant, seed) cell.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
        /// First seed; the sweep uses seed, seed+1, ...
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        num_seeds: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long)]
        model: Option<String>,
        /// Concurrent cells.
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Compare backpropagated gradients with central differences.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cell: Option<String>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        activation: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Extract { .. } => "extract",
            Command::Calibrate { .. } => "calibrate",
            Command::Train { .. } => "train",
            Command::Predict { .. } => "predict",
            Command::Evaluate { .. } => "evaluate",
            Command::Sweep { .. } => "sweep",
            Command::Gradcheck { .. } => "gradcheck",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Synth { common, .. }
            | Command::Extract { common, .. }
            | Command::Calibrate { common, .. }
            | Command::Train { common, .. }
            | Command::Predict { common, .. }
            | Command::Evaluate { common, .. }
            | Command::Sweep { common, .. }
            | Command::Gradcheck { common, .. } => common,
        }
    }

    fn keys(&self) -> &'static [&'static str] {
        match self {
            Command::Synth { .. } => commands::SYNTH_KEYS,
            Command::Extract { .. } => commands::EXTRACT_KEYS,
            Command::Calibrate { .. } => commands::CALIBRATE_KEYS,
            Command::Train { .. } => commands::TRAINING_KEYS,
            Command::Predict { .. } => commands::PREDICT_KEYS,
            Command::Evaluate { .. } => commands::EVALUATE_KEYS,
            Command::Sweep { .. } => commands::SWEEP_KEYS,
            Command::Gradcheck { .. } => commands::GRADCHECK_KEYS,
        }
    }
}

fn dispatch(command: Command, s: &mut Settings, run: &mut RunRecord, out: &Path) -> Result<()> {
    match command {
        Command::Synth { seed, generator, noise, w, platoons, steps, .. } => commands::synth(
            commands::SynthFlags { seed, generator, noise, w, platoons, steps },
            s,
            run,
            out,
        ),
        Command::Extract { input, t_back, t_fwd, k_vehicles, delta, split_seed, .. } => commands::extract(
            commands::ExtractFlags { input, t_back, t_fwd, k_vehicles, delta, split_seed },
            s,
            run,
            out,
        ),
        Command::Calibrate { samples, split, seed, model, sample_size, repetitions, .. } => commands::calibrate(
            commands::CalibrateFlags { samples, split, seed, model, sample_size, repetitions },
            s,
            run,
            out,
        ),
        Command::Train {
            samples,
            split,
            seed,
            variant,
            physics,
            cell,
            units1,
            units2,
            epochs,
            train_size,
            activation,
            ..
        } => commands::train(
            commands::TrainFlags {
                samples,
                split,
                seed,
                variant,
                physics,
                cell,
                units1,
                units2,
                epochs,
                train_size,
                activation,
            },
            s,
            run,
            out,
        ),
        Command::Predict { samples, split, subset, weights, physics, variant, .. } => commands::predict(
            commands::PredictFlags { samples, split, subset, weights, physics, variant },
            s,
            run,
            out,
        ),
        Command::Evaluate { predictions, samples, train_report, plot_dir, .. } => commands::evaluate(
            commands::EvaluateFlags { predictions, samples, train_report, plot_dir },
            s,
            run,
            out,
        ),
        Command::Sweep { samples, seed, num_seeds, sizes, variants, model, jobs, .. } => commands::sweep(
            commands::SweepFlags { samples, seed, num_seeds, sizes, variants, model, jobs },
            s,
            run,
            out,
        ),
        Command::Gradcheck { cell, dropout, activation, seed, .. } => commands::gradcheck(
            commands::GradcheckFlags { cell, dropout, activation, seed },
            s,
            run,
            out,
        ),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if err.downcast_ref::<PartialSweep>().is_some() {
        return 4;
    }
    match err.downcast_ref::<perl_core::Error>() {
        Some(e) if e.is_numeric() => 3,
        Some(perl_core::Error::Config(_)) => 1,
        _ => 2,
    }
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    let path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest)? + "\n";
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let command = cli.command;
    let name = command.name();
    let out = command.common().out_dir.clone();
    let config_path = command.common().config.clone();
    if !matches!(command, Command::Sweep { .. }) {
        // only sweep runs concurrently; the global pool serves everything else
        let _ = rayon::ThreadPoolBuilder::new().num_threads(1).build_global();
    }

    let start = Instant::now();
    let mut run = RunRecord::default();
    let mut settings = Settings::default();
    let result = std::fs::create_dir_all(&out)
        .with_context(|| format!("creating output directory {}", out.display()))
        .and_then(|_| Settings::load(config_path.as_deref(), command.keys()))
        .and_then(|s| {
            settings = s;
            if let Some(path) = &config_path {
                run.input("config", path)?;
            }
            dispatch(command, &mut settings, &mut run, &out)
        });

    let code = match &result {
        Ok(()) => 0,
        Err(e) => exit_code(e),
    };
    if out.is_dir() {
        let manifest = RunManifest {
            tool: "perl-traj".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: name.into(),
            config: settings.resolved().clone(),
            inputs: run.inputs.clone(),
            outputs: run.relative_outputs(&out),
            status: match code {
                0 => "ok",
                4 => "partial",
                _ => "error",
            }
            .into(),
            error: result.as_ref().err().map(|e| format!("{e:#}")),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        if let Err(e) = write_manifest(&out, &manifest) {
            eprintln!("error: {e:#}");
            return ExitCode::from(if code == 0 { 2 } else { code });
        }
    }
    if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    ExitCode::from(code)
}
