use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde_json::json;

use portal_synth::annotation::{create_tasks, serve, AnnotationError, AnnotationStore, AppState, TaskSet};
use portal_synth::corpus::load_prompts;

use super::{load_named_corpora, parse_named, Outcome};
use crate::provenance::{write_json, Provenance};

#[derive(Debug, Subcommand)]
pub enum AnnotateCommand {
    /// Sample prompts and write blinded ranking tasks
    Build(BuildArgs),
    /// Serve the ranking API (and optionally the UI bundle)
    Serve(ServeArgs),
    /// Print mean ranks per system from the submission log
    Summary(SummaryArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    pub prompts: PathBuf,
    /// System corpus as name=path; repeatable
    #[arg(long = "system", value_parser = parse_named, required = true)]
    pub systems: Vec<(String, PathBuf)>,
    #[arg(long, default_value_t = 10)]
    pub n_tasks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    /// Submission log (JSON Lines, appended)
    #[arg(long)]
    pub log: PathBuf,
    /// Directory with the built UI bundle
    #[arg(long)]
    pub ui_dir: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub bind: String,
}

#[derive(Debug, Args)]
pub struct SummaryArgs {
    #[arg(long)]
    pub tasks: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
    /// Also write the summary with provenance to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub async fn run(cmd: AnnotateCommand) -> Result<Outcome> {
    match cmd {
        AnnotateCommand::Build(args) => build(args),
        AnnotateCommand::Serve(args) => serve_cmd(args).await,
        AnnotateCommand::Summary(args) => summary(args),
    }
}

fn build(args: BuildArgs) -> Result<Outcome> {
    let mut prov = Provenance::new("annotate build", args.seed);
    prov.input("prompts", &args.prompts)?;
    let prompts = load_prompts(&args.prompts)?;
    let systems: BTreeMap<String, _> = load_named_corpora(&args.systems, &mut prov)?
        .into_iter()
        .map(|c| (c.name().to_string(), c))
        .collect();
    prov.param("n_tasks", args.n_tasks);
    let tasks = create_tasks(&prompts, &systems, args.n_tasks, args.seed)?;
    let set = TaskSet {
        seed: args.seed,
        tasks,
        provenance: Some(prov.to_value()),
    };
    set.save(&args.out)?;
    eprintln!("wrote {} tasks → {}", set.tasks.len(), args.out.display());
    Ok(Outcome::Success)
}

async fn serve_cmd(args: ServeArgs) -> Result<Outcome> {
    let set = TaskSet::load(&args.tasks)?;
    let store = AnnotationStore::open(set.tasks, &args.log)?;
    let state = AppState::new(store, set.seed);
    let listener = tokio::net::TcpListener::bind(&args.bind)
        .await
        .with_context(|| format!("binding {}", args.bind))?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    serve(listener, state, args.ui_dir, async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(Outcome::Success)
}

fn summary(args: SummaryArgs) -> Result<Outcome> {
    let set = TaskSet::load(&args.tasks)?;
    let store = AnnotationStore::replay(set.tasks, &args.log)?;
    let summary = match store.summary() {
        Err(AnnotationError::NoSubmissions) => anyhow::bail!("no submissions in {}", args.log.display()),
        other => other?,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    if let Some(out) = &args.out {
        let mut prov = Provenance::new("annotate summary", set.seed);
        prov.input("tasks", &args.tasks)?;
        prov.input("log", &args.log)?;
        write_json(out, &json!({ "provenance": prov.to_value(), "summary": summary }))?;
    }
    Ok(Outcome::Success)
}
