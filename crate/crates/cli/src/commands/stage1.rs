use std::path::PathBuf;

use anyhow::Result;
use clap::Args;

use portal_synth::corpus::save_prompts;
use portal_synth::icd9::parse_icd9_db;
use portal_synth::stage1::{generate_prompts, Stage1Template};

use super::Outcome;
use crate::provenance::{report_failures, Provenance};
use crate::provider::ProviderArgs;

#[derive(Debug, Args)]
pub struct Stage1Args {
    /// Code list (TSV, as written by `sample`)
    #[arg(long)]
    pub codes: PathBuf,
    /// Template override (JSON: instruction, exemplars, k)
    #[arg(long)]
    pub template: Option<PathBuf>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub async fn run(args: Stage1Args) -> Result<Outcome> {
    let mut prov = Provenance::new("stage1", args.seed);
    prov.input("codes", &args.codes)?;
    let codes = parse_icd9_db(&args.codes)?;
    let template = match &args.template {
        Some(path) => {
            prov.input("template", path)?;
            Stage1Template::load(path)?
        }
        None => Stage1Template::default(),
    };
    let (completer, described) = args.provider.build()?;
    prov.param("provider", described);
    prov.param("k", template.k);

    let batch = generate_prompts(&codes, &template, completer.as_ref(), args.seed).await?;
    save_prompts(&batch.records, &args.out)?;
    prov.write_sidecar(&args.out)?;
    report_failures(&args.out, &batch.failures)?;
    eprintln!("wrote {} prompts → {}", batch.records.len(), args.out.display());
    Ok(match batch.failures.len() {
        0 => Outcome::Success,
        failed => Outcome::Partial { failed },
    })
}
