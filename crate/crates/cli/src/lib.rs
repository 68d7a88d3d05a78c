//! Experiment driver for the `normguide` engine: configuration, subcommands
//! and run provenance.

pub mod commands;
pub mod config;
pub mod experiment;

use std::ffi::OsString;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use commands::RunDir;
use config::{Config, UsageError};
use experiment::Experiment;

pub const VERSION_TAG: &str = concat!("normguide ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "normguide", version, about = "Guided reverse-SDE sampling on a toy frame-sequence task")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Root seed; every random stream of the run derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// TOML configuration; omitted keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: runs/<subcommand>].
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set guidance.scale=0.5`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the score corpus, the classifier corpus and test transcripts.
    GenCorpus(Common),
    /// Train the score network (denoising score matching).
    TrainScore(Common),
    /// Train the noisy-input frame classifier.
    TrainClassifier(Common),
    /// Train the log-duration regressor.
    TrainDuration(Common),
    /// Unconditional samples.
    Sample(Common),
    /// One guided synthesis per test transcript.
    Synth(Common),
    /// CER over the fixed-scale and norm-based scale grids.
    SweepScale(Common),
    /// Masked regeneration of a single-class sequence.
    Inpaint(Common),
    /// Score and classifier-gradient norms over diffusion time.
    DiagNorms(Common),
    /// Classifier accuracy over diffusion time.
    DiagAccuracy(Common),
    /// Mean CER over several syntheses per test transcript.
    EvalCer(Common),
}

type Handler = fn(&Experiment, &RunDir) -> anyhow::Result<()>;

impl Command {
    fn parts(&self) -> (&'static str, &Common, Handler) {
        match self {
            Command::GenCorpus(c) => ("gen-corpus", c, commands::gen_corpus),
            Command::TrainScore(c) => ("train-score", c, commands::train_score),
            Command::TrainClassifier(c) => ("train-classifier", c, commands::train_classifier),
            Command::TrainDuration(c) => ("train-duration", c, commands::train_duration),
            Command::Sample(c) => ("sample", c, commands::sample_cmd),
            Command::Synth(c) => ("synth", c, commands::synth),
            Command::SweepScale(c) => ("sweep-scale", c, commands::sweep_scale),
            Command::Inpaint(c) => ("inpaint", c, commands::inpaint_cmd),
            Command::DiagNorms(c) => ("diag-norms", c, commands::diag_norms),
            Command::DiagAccuracy(c) => ("diag-accuracy", c, commands::diag_accuracy),
            Command::EvalCer(c) => ("eval-cer", c, commands::eval_cer_cmd),
        }
    }
}

fn execute(cmd: &Command) -> anyhow::Result<()> {
    let start = Instant::now();
    let (name, common, handler) = cmd.parts();
    let config = Config::load(common.config.as_deref(), &common.set)?;
    let out_dir = common
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(name));
    let exp = Experiment::new(config, common.seed)?;
    let out = RunDir::create(&out_dir)?;
    out.write("config.toml", exp.config.to_toml())?;
    out.write_json(
        "run.json",
        &json!({ "command": name, "seed": common.seed, "version": VERSION_TAG }),
    )?;
    handler(&exp, &out)?;
    // Kept apart from the results so that those stay byte-identical.
    out.write_json(
        "timing.json",
        &json!({ "wall_clock_seconds": start.elapsed().as_secs_f64() }),
    )
}

/// Runs one command line; returns the process exit status (2 for usage
/// errors, 1 for invalid configurations and runtime failures).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
