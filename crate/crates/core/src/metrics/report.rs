use serde::{Deserialize, Serialize};

use super::lm::train_lm_with_k;
use super::{mean_perplexity, q_value, Embedder, EmbeddingVector, MetricsError};
use crate::corpus::Corpus;

/// Unnormalized metrics for one system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScore {
    pub system: String,
    pub mean_perplexity: f64,
    pub q_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub system: String,
    pub mean_perplexity: f64,
    pub q_value: f64,
    /// `1 - minmax(perplexity)`; higher is better.
    pub score_perplexity: f64,
    /// `minmax(q_value)`; higher is better.
    pub score_depth: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub entries: Vec<ReportEntry>,
}

/// Min-max scaled values, or `None` for every entry when all values are equal.
fn min_max(values: &[f64]) -> Vec<Option<f64>> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|&v| (hi > lo).then(|| (v - lo) / (hi - lo)))
        .collect()
}

/// Min-max normalizes each metric across systems. When every system has the
/// same value (including the single-system case) the score is 1.
pub fn normalize_report(raw: &[RawScore]) -> EvalReport {
    let ppl = min_max(&raw.iter().map(|r| r.mean_perplexity).collect::<Vec<_>>());
    let q = min_max(&raw.iter().map(|r| r.q_value).collect::<Vec<_>>());
    let entries = raw
        .iter()
        .zip(ppl.into_iter().zip(q))
        .map(|(r, (p, q))| ReportEntry {
            system: r.system.clone(),
            mean_perplexity: r.mean_perplexity,
            q_value: r.q_value,
            score_perplexity: p.map_or(1.0, |p| 1.0 - p),
            score_depth: q.unwrap_or(1.0),
        })
        .collect();
    EvalReport { entries }
}

async fn embed_all(corpus: &Corpus, embedder: &dyn Embedder) -> Result<Vec<EmbeddingVector>, MetricsError> {
    let mut out = Vec::with_capacity(corpus.len());
    for m in corpus.messages() {
        out.push(embedder.embed(m.text()).await?);
    }
    Ok(out)
}

/// For each system: train a bigram model on its corpus and score the
/// reference; embed both corpora and compute `Q(reference, system)`.
/// Systems are named by their corpus names.
pub async fn evaluate_systems(
    reference: &Corpus,
    systems: &[Corpus],
    embedder: &dyn Embedder,
    smoothing_k: f64,
) -> Result<Vec<RawScore>, MetricsError> {
    if systems.is_empty() {
        return Err(MetricsError::NoSystems);
    }
    if reference.is_empty() {
        return Err(MetricsError::EmptyReference);
    }
    let reference_vecs = embed_all(reference, embedder).await?;
    let mut scores = Vec::with_capacity(systems.len());
    for system in systems {
        let lm = train_lm_with_k(system, smoothing_k)?;
        let mean_perplexity = mean_perplexity(&lm, reference)?;
        let system_vecs = embed_all(system, embedder).await?;
        scores.push(RawScore {
            system: system.name().to_string(),
            mean_perplexity,
            q_value: q_value(&reference_vecs, &system_vecs)?,
        });
    }
    Ok(scores)
}
