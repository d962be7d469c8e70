//! Corpus evaluation: bigram language-model perplexity, statistical-depth
//! Q-values over text embeddings, and min-max normalized reports.

mod depth;
mod embed;
mod lm;
mod report;
mod tokenize;

pub use depth::{depth, q_value};
pub use embed::{BuiltinEmbedder, Embedder, EmbeddingVector, RemoteEmbedder, DEFAULT_DIMENSION};
pub use lm::{mean_perplexity, perplexity, train_lm, NGramLm, BOS, EOS, UNK};
pub use report::{evaluate_systems, normalize_report, EvalReport, RawScore, ReportEntry};
pub use tokenize::tokenize;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("text {0:?} has no tokens")]
    NoTokens(String),
    #[error("empty text")]
    EmptyText,
    #[error("embedding has zero norm")]
    ZeroVector,
    #[error("embedding is not unit norm (norm {0})")]
    NotUnit(f64),
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("reference set is empty")]
    EmptyReference,
    #[error("no systems to evaluate")]
    NoSystems,
    #[error("smoothing constant must be positive, got {0}")]
    InvalidSmoothing(f64),
    #[error("embedding endpoint: {0}")]
    Remote(String),
}
