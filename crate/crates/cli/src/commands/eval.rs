use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, ValueEnum};
use serde_json::json;

use portal_synth::corpus::{filter_by_length, load_corpus};
use portal_synth::metrics::{evaluate_systems, normalize_report, BuiltinEmbedder, Embedder, RemoteEmbedder};

use super::{load_named_corpora, parse_named, Outcome};
use crate::provenance::{write_json, Provenance};

const PROXY_NOTE: &str = "Perplexity comes from an add-k smoothed bigram model trained on each system corpus and scored on the reference. Depth uses the configured embedder. Both stand in for transformer language-model perplexity and sentence-embedding depth, so absolute values are not comparable with scores from those models.";

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EmbedderKind {
    /// Hashed character n-grams, offline
    Builtin,
    /// OpenAI-compatible embeddings endpoint
    Remote,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Reference corpus (JSON Lines)
    #[arg(long)]
    pub reference: PathBuf,
    /// System corpus as name=path; repeatable
    #[arg(long = "system", value_parser = parse_named, required = true)]
    pub systems: Vec<(String, PathBuf)>,
    /// Keep reference messages with MIN..=MAX characters, e.g. 500,1500
    #[arg(long, value_parser = parse_bounds)]
    pub filter_ref_length: Option<(usize, usize)>,
    #[arg(long, value_enum, default_value_t = EmbedderKind::Builtin)]
    pub embedder: EmbedderKind,
    #[arg(long, default_value = "http://127.0.0.1:8000/v1/embeddings")]
    pub embed_endpoint: String,
    #[arg(long, default_value = "text-embedding-3-small")]
    pub embed_model: String,
    #[arg(long, default_value = "OPENAI_API_KEY")]
    pub embed_api_key_env: String,
    /// Add-k smoothing constant for the bigram model
    #[arg(long, default_value_t = 1.0)]
    pub smoothing_k: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_bounds(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s
        .split_once(',')
        .ok_or_else(|| format!("expected MIN,MAX, got {s:?}"))?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("{lo:?}: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("{hi:?}: {e}"))?;
    if lo > hi {
        return Err(format!("min {lo} exceeds max {hi}"));
    }
    Ok((lo, hi))
}

pub async fn run(args: EvalArgs) -> Result<Outcome> {
    let mut prov = Provenance::new("eval", args.seed);
    prov.input("reference", &args.reference)?;
    let mut reference = load_corpus(&args.reference)?;
    if let Some((lo, hi)) = args.filter_ref_length {
        let before = reference.len();
        reference = filter_by_length(&reference, lo, hi)?;
        eprintln!(
            "reference length filter {lo}..={hi}: kept {} of {before}",
            reference.len()
        );
    }
    if reference.is_empty() {
        bail!("reference corpus is empty after filtering");
    }
    let systems = load_named_corpora(&args.systems, &mut prov)?;
    let embedder: Box<dyn Embedder> = match args.embedder {
        EmbedderKind::Builtin => Box::new(BuiltinEmbedder::default()),
        EmbedderKind::Remote => Box::new(RemoteEmbedder::new(
            &args.embed_endpoint,
            &args.embed_model,
            &args.embed_api_key_env,
        )?),
    };
    prov.param("filter_ref_length", args.filter_ref_length);
    prov.param("reference_messages", reference.len());
    prov.param("embedder", embedder.describe());
    prov.param("smoothing_k", args.smoothing_k);

    let raw = evaluate_systems(&reference, &systems, embedder.as_ref(), args.smoothing_k).await?;
    let report = normalize_report(&raw);
    write_json(
        &args.out,
        &json!({ "provenance": prov.to_value(), "note": PROXY_NOTE, "entries": report.entries }),
    )?;
    for e in &report.entries {
        eprintln!(
            "{}: perplexity {:.3} (score {:.3}), Q {:.3} (score {:.3})",
            e.system, e.mean_perplexity, e.score_perplexity, e.q_value, e.score_depth
        );
    }
    Ok(Outcome::Success)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert_eq!(parse_bounds("500,1500").unwrap(), (500, 1500));
        assert_eq!(parse_bounds(" 1 , 1 ").unwrap(), (1, 1));
        assert!(parse_bounds("1500,500").is_err());
        assert!(parse_bounds("500").is_err());
        assert!(parse_bounds("a,b").is_err());
    }
}
