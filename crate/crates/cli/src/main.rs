//! `atsunet` command-line tool.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use atsunet::model::Variant;
use clap::{Args, Parser, Subcommand};

use commands::{SynthArgs, TrainArgs};
use config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "atsunet",
    version,
    about = "Bandwidth extension for band-limited 16 kHz speech"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Hyper {
    /// TOML file with any of: variant, seed, epochs, batch, lr, shift_fraction, quantize
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network variant: ats, 1d, mixed, hybrid, 2d_v1, 2d_v2
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Fraction of channels moved by each temporal shift
    #[arg(long)]
    shift_fraction: Option<f64>,
    /// Also write an int16 copy of the trained model, calibrated on the training inputs
    #[arg(long)]
    quantize: bool,
}

impl Hyper {
    fn resolve(&self) -> atsunet::Result<RunConfig> {
        let flags = Overrides {
            variant: self.variant,
            seed: self.seed,
            epochs: self.epochs,
            batch: self.batch,
            lr: self.lr,
            shift_fraction: self.shift_fraction,
            quantize: self.quantize.then_some(true),
        };
        RunConfig::resolve(flags, self.config.as_deref())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus with band-limited pairs
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 5)]
        test_count: usize,
        #[arg(long, default_value_t = 0)]
        noise_count: usize,
        /// Seconds per utterance
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train a new model from a manifest
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Loss history CSV (default: <out>.loss.csv)
        #[arg(long)]
        history: Option<PathBuf>,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Continue training an existing model on noise-augmented inputs
    Finetune {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        init_model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
        /// Noise WAVs; generated band-limited noise is used when none are given
        #[arg(long, num_args = 1..)]
        noise: Vec<PathBuf>,
        #[command(flatten)]
        hyper: Hyper,
    },
    /// Enhance a WAV file with a float or quantized model
    Infer {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        latency_csv: Option<PathBuf>,
    },
    /// Produce an int16 model calibrated on a manifest's inputs
    Quantize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256)]
        max_frames: usize,
    },
    /// LSD of inputs and enhanced outputs against the clean references
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Parameters, FLOPs and per-frame latency of every variant
    Bench {
        #[arg(long, default_value_t = 2.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn run(cmd: Command) -> atsunet::Result<()> {
    match cmd {
        Command::Synth {
            out,
            count,
            test_count,
            noise_count,
            duration,
            seed,
        } => commands::synth(&SynthArgs {
            out,
            count,
            test_count,
            noise_count,
            duration,
            seed,
        }),
        Command::Train {
            manifest,
            out,
            history,
            hyper,
        } => {
            let args = TrainArgs {
                manifest,
                out,
                history,
                init_model: None,
                noise: vec![],
            };
            commands::train_cmd(&hyper.resolve()?, &args)
        }
        Command::Finetune {
            manifest,
            init_model,
            out,
            history,
            noise,
            hyper,
        } => {
            let args = TrainArgs {
                manifest,
                out,
                history,
                init_model,
                noise,
            };
            commands::finetune_cmd(&hyper.resolve()?, &args)
        }
        Command::Infer {
            model,
            input,
            output,
            latency_csv,
        } => commands::infer_cmd(&model, &input, &output, latency_csv.as_deref()),
        Command::Quantize {
            model,
            manifest,
            out,
            max_frames,
        } => commands::quantize_cmd(&model, &manifest, &out, max_frames),
        Command::Eval {
            model,
            manifest,
            report,
        } => commands::eval_cmd(&model, &manifest, report.as_deref()).map(|_| ()),
        Command::Bench { seconds, seed, csv } => {
            commands::bench_cmd(seconds, seed, csv.as_deref()).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            eprintln!("error: usage: {first}");
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.kind(), e.to_string().replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
