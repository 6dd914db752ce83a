mod commands;
mod data;
mod error;
mod manifest;
mod stream;

use clap::{Parser, Subcommand};
use error::CliResult;

/// Recurrent Weibull survival models for sparse longitudinal records.
///
/// Exit status: 0 success, 1 usage error, 2 data or validation error,
/// 3 numerical failure.
#[derive(Debug, Parser)]
#[command(name = "survgru", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthetic cohorts.
    #[command(subcommand)]
    Cohort(CohortCmd),
    /// Splits and encoding.
    #[command(subcommand)]
    Prep(PrepCmd),
    /// Model fitting.
    #[command(subcommand)]
    Train(TrainCmd),
    /// Evaluation.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Model interpretation.
    #[command(subcommand)]
    Explain(ExplainCmd),
    /// Prediction.
    #[command(subcommand)]
    Predict(PredictCmd),
}

#[derive(Debug, Subcommand)]
enum CohortCmd {
    /// Simulate a cohort with time-varying hazards.
    Generate(commands::GenerateArgs),
}

#[derive(Debug, Subcommand)]
enum PrepCmd {
    /// Assign holdout and folds, compute norms and encode every patient.
    Encode(commands::EncodeArgs),
}

#[derive(Debug, Subcommand)]
enum TrainCmd {
    /// Cross-validated GRU-D Weibull networks.
    Grud(commands::TrainGrudArgs),
    /// Weibull accelerated failure time model on index-date values.
    Aft(commands::TrainBaselineArgs),
    /// Multi-task logistic regression on index-date values.
    Mtlr(commands::TrainBaselineArgs),
}

#[derive(Debug, Subcommand)]
enum EvalCmd {
    /// Metrics at every grid step of follow-up.
    Sweep(commands::SweepArgs),
}

#[derive(Debug, Subcommand)]
enum ExplainCmd {
    /// Permutation importance of one feature over follow-up.
    Importance(commands::ImportanceArgs),
    /// Partial dependence of the predicted median on one feature.
    Pdp(commands::PdpArgs),
}

#[derive(Debug, Subcommand)]
enum PredictCmd {
    /// Predict from observation lines on stdin as they arrive.
    Stream(stream::StreamArgs),
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Cohort(CohortCmd::Generate(a)) => commands::cohort_generate(&a),
        Command::Prep(PrepCmd::Encode(a)) => commands::prep_encode(&a),
        Command::Train(TrainCmd::Grud(a)) => commands::train_grud(&a),
        Command::Train(TrainCmd::Aft(a)) => commands::train_aft(&a),
        Command::Train(TrainCmd::Mtlr(a)) => commands::train_mtlr(&a),
        Command::Eval(EvalCmd::Sweep(a)) => commands::eval_sweep(&a),
        Command::Explain(ExplainCmd::Importance(a)) => commands::explain_importance(&a),
        Command::Explain(ExplainCmd::Pdp(a)) => commands::explain_pdp(&a),
        Command::Predict(PredictCmd::Stream(a)) => stream::predict_stream(&a),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            std::process::exit(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
