//! Add-k smoothed bigram language model.

use std::collections::{BTreeMap, HashMap};

use super::{tokenize, MetricsError};
use crate::corpus::{Corpus, Message};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

const UNK_ID: u32 = 0;
const EOS_ID: u32 = 1;
// context-only, never part of the vocabulary
const BOS_ID: u32 = u32::MAX;

/// Bigram model over `(BOS, t1, ..., tn, EOS)` sequences with
/// `p(t|c) = (count(c,t) + k) / (count(c) + k·V)`, where `V` counts the
/// vocabulary including UNK and EOS.
#[derive(Debug, Clone)]
pub struct NGramLm {
    ids: HashMap<String, u32>,
    tokens: Vec<String>,
    bigrams: HashMap<(u32, u32), u64>,
    contexts: HashMap<u32, u64>,
    k: f64,
}

impl NGramLm {
    /// A model with the given vocabulary (plus UNK and EOS) and no counts.
    pub fn with_vocabulary<I, S>(tokens: I, k: f64) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        if !(k > 0.0 && k.is_finite()) {
            return Err(MetricsError::InvalidSmoothing(k));
        }
        let mut lm = Self {
            ids: HashMap::new(),
            tokens: Vec::new(),
            bigrams: HashMap::new(),
            contexts: HashMap::new(),
            k,
        };
        lm.intern(UNK.to_string());
        lm.intern(EOS.to_string());
        for t in tokens {
            lm.intern(t.into());
        }
        Ok(lm)
    }

    /// Trains on raw texts. Fails if no text yields a token.
    pub fn from_texts<'a, I>(texts: I, k: f64) -> Result<Self, MetricsError>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut lm = Self::with_vocabulary(std::iter::empty::<String>(), k)?;
        let mut any = false;
        let mut first_empty = None;
        for text in texts {
            let tokens = tokenize(text);
            if tokens.is_empty() {
                first_empty.get_or_insert_with(|| text.to_string());
                continue;
            }
            any = true;
            let mut prev = BOS_ID;
            for t in tokens {
                let id = lm.intern(t);
                lm.observe(prev, id);
                prev = id;
            }
            lm.observe(prev, EOS_ID);
        }
        if !any {
            return Err(match first_empty {
                Some(t) => MetricsError::NoTokens(t),
                None => MetricsError::EmptyCorpus,
            });
        }
        Ok(lm)
    }

    fn intern(&mut self, token: String) -> u32 {
        if let Some(&id) = self.ids.get(&token) {
            return id;
        }
        let id = self.tokens.len() as u32;
        self.ids.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    fn observe(&mut self, context: u32, token: u32) {
        *self.bigrams.entry((context, token)).or_default() += 1;
        *self.contexts.entry(context).or_default() += 1;
    }

    pub fn order(&self) -> usize {
        2
    }

    pub fn smoothing_k(&self) -> f64 {
        self.k
    }

    /// `V`: vocabulary size including UNK and EOS.
    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(String::as_str)
    }

    fn id_of(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    fn context_id(&self, context: &str) -> u32 {
        if context == BOS {
            BOS_ID
        } else {
            self.id_of(context)
        }
    }

    fn name_of(&self, id: u32) -> &str {
        if id == BOS_ID {
            BOS
        } else {
            &self.tokens[id as usize]
        }
    }

    pub fn bigram_count(&self, context: &str, token: &str) -> u64 {
        let key = (self.context_id(context), self.id_of(token));
        self.bigrams.get(&key).copied().unwrap_or(0)
    }

    pub fn context_count(&self, context: &str) -> u64 {
        self.contexts.get(&self.context_id(context)).copied().unwrap_or(0)
    }

    /// All observed bigrams keyed by token text.
    pub fn bigram_counts(&self) -> BTreeMap<(String, String), u64> {
        self.bigrams
            .iter()
            .map(|(&(c, t), &n)| ((self.name_of(c).to_string(), self.name_of(t).to_string()), n))
            .collect()
    }

    /// Contexts with at least one observation, BOS included.
    pub fn observed_contexts(&self) -> impl Iterator<Item = &str> {
        self.contexts.keys().map(|&c| self.name_of(c))
    }

    fn prob_ids(&self, context: u32, token: u32) -> f64 {
        let joint = self.bigrams.get(&(context, token)).copied().unwrap_or(0) as f64;
        let ctx = self.contexts.get(&context).copied().unwrap_or(0) as f64;
        (joint + self.k) / (ctx + self.k * self.vocab_size() as f64)
    }

    /// Smoothed `p(token | context)`; unknown words map to UNK.
    pub fn prob(&self, context: &str, token: &str) -> f64 {
        self.prob_ids(self.context_id(context), self.id_of(token))
    }

    /// Perplexity of a raw text.
    pub fn perplexity_text(&self, text: &str) -> Result<f64, MetricsError> {
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(MetricsError::NoTokens(text.to_string()));
        }
        let mut log_sum = 0.0;
        let mut prev = BOS_ID;
        for t in &tokens {
            let id = self.id_of(t);
            log_sum += self.prob_ids(prev, id).ln();
            prev = id;
        }
        log_sum += self.prob_ids(prev, EOS_ID).ln();
        let events = (tokens.len() + 1) as f64;
        Ok((-log_sum / events).exp())
    }
}

/// Trains with add-one smoothing.
pub fn train_lm(corpus: &Corpus) -> Result<NGramLm, MetricsError> {
    train_lm_with_k(corpus, 1.0)
}

pub fn train_lm_with_k(corpus: &Corpus, k: f64) -> Result<NGramLm, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    NGramLm::from_texts(corpus.messages().iter().map(Message::text), k)
}

pub fn perplexity(lm: &NGramLm, message: &Message) -> Result<f64, MetricsError> {
    lm.perplexity_text(message.text())
}

/// Arithmetic mean of per-message perplexities.
pub fn mean_perplexity(lm: &NGramLm, corpus: &Corpus) -> Result<f64, MetricsError> {
    if corpus.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut total = 0.0;
    for m in corpus.messages() {
        total += perplexity(lm, m)?;
    }
    Ok(total / corpus.len() as f64)
}
