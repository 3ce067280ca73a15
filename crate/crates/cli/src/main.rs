//! `vhs2hdtv` — dataset preparation, training, translation, quality
//! evaluation, and comparison grids from one binary.
//!
//! Exit codes: 0 success, 1 usage (bad flags, bad config, bad overrides),
//! 2 runtime failure, 3 training divergence.

mod evaluate;
mod font;
mod grid;
mod overrides;
mod prepare;
mod train;
mod translate;

use clap::{Parser, Subcommand};
use vhs2hdtv_core::Error;

#[derive(Parser)]
#[command(
    name = "vhs2hdtv",
    version,
    about = "Unpaired VHS-to-HDTV video translation pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Index two frame domains into a train/test manifest.
    Prepare(prepare::Args),
    /// Run the adversarial training loop against a manifest.
    Train(train::Args),
    /// Translate frames with a trained generator.
    Translate(translate::Args),
    /// Score directories of frames with no-reference quality metrics.
    Evaluate(evaluate::Args),
    /// Render labeled side-by-side comparison montages.
    Grid(grid::Args),
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Diverged(_) => 3,
        Error::Config(_) => 1,
        _ => 2,
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints --help/--version on stdout and exits cleanly;
            // genuine usage errors go to stderr with exit code 1.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Prepare(args) => prepare::run(args),
        Command::Train(args) => train::run(args),
        Command::Translate(args) => translate::run(args),
        Command::Evaluate(args) => evaluate::run(args),
        Command::Grid(args) => grid::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e);
        std::process::exit(exit_code(&e));
    }
}
