//! `portal-synth`: sample ICD-9 codes, generate prompts and messages,
//! evaluate corpora, and run the blind ranking study.

mod commands;
mod provenance;
mod provider;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::Outcome;

#[derive(Parser)]
#[command(name = "portal-synth", version, about = "Synthetic patient-portal message pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample ICD-9 codes by chapter histogram
    Sample(commands::sample::SampleArgs),
    /// Turn code descriptions into message prompts
    Stage1(commands::stage1::Stage1Args),
    /// Generate messages from prompts, grounded or zero-shot
    Stage2(commands::stage2::Stage2Args),
    /// Score system corpora against a reference corpus
    Eval(commands::eval::EvalArgs),
    /// Build, serve, or summarize a blind ranking study
    #[command(subcommand)]
    Annotate(commands::annotate::AnnotateCommand),
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .init();

    let cli = Cli::parse();
    let result = match cli.command {
        Command::Sample(args) => commands::sample::run(args),
        Command::Stage1(args) => commands::stage1::run(args).await,
        Command::Stage2(args) => commands::stage2::run(args).await,
        Command::Eval(args) => commands::eval::run(args).await,
        Command::Annotate(cmd) => commands::annotate::run(cmd).await,
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Partial { failed }) => {
            eprintln!("error: {failed} item(s) failed; see the failure report");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
