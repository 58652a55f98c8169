//! `solarload`: simulate solar-loaded thermal sequences, fit cooling traces,
//! correct single frames, train the bias regressor and evaluate corrections.

mod correct;
mod evaluate;
mod fit;
mod report;
mod simulate;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "solarload", version, about = "Solar-loading correction for thermal skin thermometry")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a synthetic face sequence (rest, sun exposure, cool-down) to a dataset directory.
    Simulate(simulate::SimulateArgs),
    /// Fit the exponential cooling model to a temperature trace CSV.
    FitTransient(fit::FitArgs),
    /// Correct one frame of a dataset with no temporal context.
    Correct(correct::CorrectArgs),
    /// Train the bias regressor on dataset directories.
    Train(train::TrainArgs),
    /// Score uncorrected and corrected facial means per phase and by skin tone.
    Evaluate(evaluate::EvaluateArgs),
    /// Compare error distributions of dark and light subjects from error CSVs.
    Equity(evaluate::EquityArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => simulate::run(&args),
        Command::FitTransient(args) => fit::run(&args),
        Command::Correct(args) => correct::run(&args),
        Command::Train(args) => train::run(&args),
        Command::Evaluate(args) => evaluate::run(&args),
        Command::Equity(args) => evaluate::run_equity(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
