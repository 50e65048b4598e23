//! `eeg4d`: featurize raw recordings, synthesize datasets, train, ablate and
//! explain the 4D attention network.

mod commands;
mod error;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;
use crate::settings::Settings;

#[derive(Parser, Debug)]
#[command(name = "eeg4d", version, about = "4D spatial-spectral-temporal EEG emotion recognition")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct Common {
    /// key=value settings file; command-line flags win over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Electrode layout file (default: built-in 62-channel 19x19 grid).
    #[arg(long, global = true)]
    layout: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Feature subset: de, psd or both.
    #[arg(long, global = true)]
    features: Option<String>,
    #[arg(long, global = true)]
    no_spectral_attn: bool,
    #[arg(long, global = true)]
    no_spatial_attn: bool,
    #[arg(long, global = true)]
    no_temporal_attn: bool,
    /// Override any setting, e.g. `--set conv_channels=8,8,8,8`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Turn raw recordings into 4D sample files.
    Featurize {
        /// Directory of raw recordings.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write the synthetic class-structured dataset as sample files.
    Synth {
        #[arg(long)]
        per_class: Option<usize>,
        #[arg(long)]
        amplitude: Option<f32>,
        #[arg(long)]
        noise: Option<f32>,
        /// Put the class signal in this one slice.
        #[arg(long)]
        focus_slice: Option<usize>,
    },
    /// Cross-validated training; writes a checkpoint and metrics.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        /// Also run the five-way attention ablation sweep.
        #[arg(long)]
        ablate: bool,
    },
    /// Attention ablation sweep over the same splits.
    Ablate {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Grad-CAM++ heatmap for one sample.
    Explain {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Sample file (single record or container).
        #[arg(long)]
        sample: Option<PathBuf>,
        /// Record within a container.
        #[arg(long)]
        index: Option<usize>,
        /// Target class.
        #[arg(long)]
        class: Option<usize>,
        /// Draw electrode names on the image.
        #[arg(long)]
        labels: bool,
    },
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory of sample files.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
}

fn put<T: ToString>(s: &mut Settings, key: &str, v: Option<T>) -> Result<(), CliError> {
    match v {
        Some(v) => s.set(key, v.to_string()),
        None => Ok(()),
    }
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn resolve(cli: Cli) -> Result<(Command, Settings), CliError> {
    let mut s = Settings::defaults();
    let c = cli.common;
    if let Some(path) = &c.config {
        s.load_file(path)?;
    }
    put(&mut s, "seed", c.seed)?;
    put(&mut s, "layout", path_str(c.layout))?;
    put(&mut s, "out", path_str(c.out))?;
    put(&mut s, "jobs", c.jobs)?;
    put(&mut s, "features", c.features)?;
    for (flag, key) in [
        (c.no_spectral_attn, "spectral_attn"),
        (c.no_spatial_attn, "spatial_attn"),
        (c.no_temporal_attn, "temporal_attn"),
    ] {
        if flag {
            s.set(key, "false")?;
        }
    }
    match &cli.command {
        Command::Featurize { input } => put(&mut s, "input", path_str(input.clone()))?,
        Command::Synth { per_class, amplitude, noise, focus_slice } => {
            put(&mut s, "per_class", *per_class)?;
            put(&mut s, "amplitude", *amplitude)?;
            put(&mut s, "noise", *noise)?;
            put(&mut s, "focus_slice", *focus_slice)?;
        }
        Command::Train { train, ablate } => {
            put_train(&mut s, train)?;
            if *ablate {
                s.set("ablate", "true")?;
            }
        }
        Command::Ablate { train } => put_train(&mut s, train)?,
        Command::Explain { checkpoint, sample, index, class, labels } => {
            put(&mut s, "checkpoint", path_str(checkpoint.clone()))?;
            put(&mut s, "sample", path_str(sample.clone()))?;
            put(&mut s, "index", *index)?;
            put(&mut s, "class", *class)?;
            if *labels {
                s.set("labels", "true")?;
            }
        }
    }
    for kv in &c.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        s.set(k.trim(), v.trim())?;
    }
    Ok((cli.command, s))
}

fn put_train(s: &mut Settings, t: &TrainArgs) -> Result<(), CliError> {
    put(s, "input", path_str(t.input.clone()))?;
    put(s, "epochs", t.epochs)?;
    put(s, "lr", t.lr)?;
    put(s, "batch_size", t.batch_size)?;
    put(s, "folds", t.folds)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (command, settings) = resolve(cli)?;
    let jobs: usize = settings.get("jobs")?;
    if jobs > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    match command {
        Command::Featurize { .. } => commands::featurize(&settings),
        Command::Synth { .. } => commands::synth(&settings),
        Command::Train { .. } => commands::train(&settings),
        Command::Ablate { .. } => commands::ablate(&settings),
        Command::Explain { .. } => commands::explain(&settings),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("eeg4d: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => ExitCode::from(CliError::Internal(String::new()).exit_code()),
    }
}
