//! `uqseg`: generate data, train, predict, corrupt and evaluate.

mod commands;
mod run;

use clap::{Parser, Subcommand};

use commands::{corrupt, eval, gen, predict, train};
use run::{CliResult, Failure};

#[derive(Debug, Parser)]
#[command(name = "uqseg", version, args_override_self = true)]
#[command(about = "Per-pixel uncertainty pipelines for segmentation")]
struct Cli {
    /// Worker threads; results do not depend on it
    #[arg(long, global = true, env = "UQSEG_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset
    Gen(gen::GenArgs),
    /// Train a model or an ensemble
    Train(train::TrainArgs),
    /// Predict probabilities and uncertainty maps for a split
    Predict(predict::PredictArgs),
    /// Corrupt a split with structured noise
    Corrupt(corrupt::CorruptArgs),
    /// Evaluate predictions: seg, ue, reject, noise or image
    Eval(eval::EvalArgs),
}

fn dispatch(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::usage(e.to_string()))?;
    }
    match cli.command {
        Command::Gen(a) => gen::run(a),
        Command::Train(a) => train::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Corrupt(a) => corrupt::run(a),
        Command::Eval(a) => eval::run(a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let first = e.to_string();
            let first = first
                .lines()
                .next()
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            eprintln!("{}", Failure::usage(first).line());
            std::process::exit(3);
        }
    };
    if let Err(f) = dispatch(cli) {
        eprintln!("{}", f.line());
        std::process::exit(f.code);
    }
}
