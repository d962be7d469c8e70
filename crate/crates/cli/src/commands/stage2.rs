use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use portal_synth::corpus::{
    load_grounding_pack, load_prompts, save_corpus, validate_grounding_pack, DEFAULT_PACK_SIZE,
};
use portal_synth::stage2::{generate_messages, Stage2Template};

use super::{file_stem, Outcome};
use crate::provenance::{report_failures, Provenance};
use crate::provider::ProviderArgs;

#[derive(Debug, Args)]
pub struct Stage2Args {
    /// Prompt records (JSON Lines, as written by `stage1`)
    #[arg(long)]
    pub prompts: PathBuf,
    /// Grounding pack (JSON Lines: prompt, message)
    #[arg(long, required_unless_present = "zeroshot")]
    pub pack: Option<PathBuf>,
    /// Generate without exemplars
    #[arg(long, conflicts_with = "pack")]
    pub zeroshot: bool,
    /// Template override (JSON: instruction, sentinel)
    #[arg(long)]
    pub template: Option<PathBuf>,
    /// Required number of exemplars in the pack
    #[arg(long, default_value_t = DEFAULT_PACK_SIZE)]
    pub pack_size: usize,
    /// Tag stored on each message; defaults to the generation mode
    #[arg(long)]
    pub source_tag: Option<String>,
    #[command(flatten)]
    pub provider: ProviderArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub async fn run(args: Stage2Args) -> Result<Outcome> {
    let mut prov = Provenance::new("stage2", args.seed);
    prov.input("prompts", &args.prompts)?;
    let prompts = load_prompts(&args.prompts)?;
    let template = match &args.template {
        Some(path) => {
            prov.input("template", path)?;
            Stage2Template::load(path)?
        }
        None => Stage2Template::default(),
    };
    let pack = match &args.pack {
        Some(path) => {
            prov.input("pack", path)?;
            let pack = load_grounding_pack(path)?;
            let report = validate_grounding_pack(&pack, args.pack_size, &template.sentinel);
            if !report.is_valid() {
                for v in &report.violations {
                    eprintln!("pack: {v}");
                }
                bail!("grounding pack {} is invalid", path.display());
            }
            Some(pack)
        }
        None => None,
    };
    let mode = if pack.is_some() { "grounded" } else { "zeroshot" };
    let source_tag = args.source_tag.clone().unwrap_or_else(|| mode.to_string());
    let (completer, described) = args.provider.build()?;
    prov.param("provider", described);
    prov.param("mode", mode);
    prov.param("source_tag", &source_tag);
    prov.param("sentinel", &template.sentinel);

    let batch = generate_messages(
        &prompts,
        &template,
        pack.as_ref(),
        completer.as_ref(),
        args.seed,
        &file_stem(&args.out),
        &source_tag,
    )
    .await?;
    save_corpus(&batch.corpus, &args.out)?;
    prov.write_sidecar(&args.out)?;
    report_failures(&args.out, &batch.failures)?;
    eprintln!("wrote {} {mode} messages → {}", batch.corpus.len(), args.out.display());
    Ok(match batch.failures.len() {
        0 => Outcome::Success,
        failed => Outcome::Partial { failed },
    })
}
