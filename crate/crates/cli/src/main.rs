//! `llmchem`: performance histories in, chemistry tables, recommendations,
//! ΔCI maps and metric reports out.

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CheckArgs, ChemArgs, EvalArgs, IngestArgs, MapArgs, RecommendArgs, ScoreArgs};
use config::ConfigArgs;

#[derive(Debug, Parser)]
#[command(name = "llmchem", version, about = "Model chemistry from performance histories")]
struct Cli {
    #[command(flatten)]
    config: ConfigArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse history CSVs and build profile stores
    Ingest(IngestArgs),
    /// Consensus grading and accuracy blending
    Score(ScoreArgs),
    /// Pairwise chemistry table for a profile store
    Chem(ChemArgs),
    /// Hill-climbing subset recommendation
    Recommend(RecommendArgs),
    /// ΔCI grid for adding one model to an ensemble
    Map(MapArgs),
    /// Effectiveness, complementarity or chemistry correlation per ensemble
    Eval(EvalArgs),
    /// Property audits on a profile store
    Check(CheckArgs),
}

/// How a run ended, mapped onto the process exit status.
pub enum Outcome {
    Ok,
    InvariantFailed,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let status = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(status);
        }
    };
    let cfg = match cli.config.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    println!("config: {cfg}");
    let result = match &cli.command {
        Command::Ingest(a) => commands::ingest(a, &cfg),
        Command::Score(a) => commands::score(a, &cfg),
        Command::Chem(a) => commands::chem(a, &cfg),
        Command::Recommend(a) => commands::recommend(a, &cfg),
        Command::Map(a) => commands::map(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::Check(a) => commands::check(a, &cfg),
    };
    match result {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::InvariantFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
