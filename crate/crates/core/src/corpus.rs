//! Messages, prompt records, corpora and grounding packs, with JSON Lines
//! persistence.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Source tag used when a corpus record does not carry one.
pub const DEFAULT_SOURCE_TAG: &str = "unknown";

/// Number of exemplars a grounding pack is expected to hold.
pub const DEFAULT_PACK_SIZE: usize = 10;

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("duplicate message id {id:?}")]
    DuplicateId { id: String },
    #[error("message {id:?} has empty text")]
    EmptyText { id: String },
    #[error("prompt {id:?} has empty text")]
    EmptyPrompt { id: String },
    #[error("invalid length bounds: min {min} > max {max}")]
    InvalidBounds { min: usize, max: usize },
}

/// A single patient message. `char_len` counts Unicode scalar values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    id: String,
    text: String,
    source_tag: String,
    char_len: usize,
}

impl Message {
    pub fn new(
        id: impl Into<String>,
        text: impl Into<String>,
        source_tag: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { id });
        }
        let char_len = text.chars().count();
        Ok(Self {
            id,
            text,
            source_tag: source_tag.into(),
            char_len,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn source_tag(&self) -> &str {
        &self.source_tag
    }

    pub fn char_len(&self) -> usize {
        self.char_len
    }
}

/// A message prompt, usually produced from an ICD-9 description.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRecord {
    id: String,
    icd9_code: String,
    prompt_text: String,
}

impl PromptRecord {
    pub fn new(
        id: impl Into<String>,
        icd9_code: impl Into<String>,
        prompt_text: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let id = id.into();
        let prompt_text = prompt_text.into();
        if prompt_text.trim().is_empty() {
            return Err(CorpusError::EmptyPrompt { id });
        }
        Ok(Self {
            id,
            icd9_code: icd9_code.into(),
            prompt_text,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn icd9_code(&self) -> &str {
        &self.icd9_code
    }

    pub fn prompt_text(&self) -> &str {
        &self.prompt_text
    }
}

/// A named, ordered collection of messages with unique ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    messages: Vec<Message>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, messages: Vec<Message>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(messages.len());
        for m in &messages {
            if !seen.insert(m.id.as_str()) {
                return Err(CorpusError::DuplicateId { id: m.id.clone() });
            }
        }
        Ok(Self {
            name: name.into(),
            messages,
        })
    }

    /// Builds a corpus from bare texts, numbering ids from zero.
    pub fn from_texts<I, S>(name: &str, source_tag: &str, texts: I) -> Result<Self, CorpusError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let messages = texts
            .into_iter()
            .enumerate()
            .map(|(i, t)| Message::new(format!("{name}-{i:05}"), t, source_tag))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(name, messages)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Message> {
        self.messages.iter().find(|m| m.id == id)
    }
}

#[derive(Serialize, Deserialize)]
struct MessageLine {
    id: String,
    text: String,
    #[serde(default = "default_tag")]
    source_tag: String,
}

fn default_tag() -> String {
    DEFAULT_SOURCE_TAG.to_string()
}

#[derive(Serialize, Deserialize)]
struct PromptLine {
    id: String,
    #[serde(default)]
    icd9_code: String,
    prompt: String,
}

#[derive(Serialize, Deserialize)]
struct ExemplarLine {
    prompt: String,
    message: String,
}

/// Reads a JSON Lines file, skipping blank lines. The callback receives the
/// 1-based line number of each record.
fn read_jsonl<T, F>(path: &Path, mut on_record: F) -> Result<(), CorpusError>
where
    T: for<'de> Deserialize<'de>,
    F: FnMut(usize, T) -> Result<(), CorpusError>,
{
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: line_no,
            reason: e.to_string(),
        })?;
        on_record(line_no, record)?;
    }
    Ok(())
}

fn write_jsonl<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(&record).expect("string-only records serialize");
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// Loads a corpus; the corpus is named after the file stem.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let path = path.as_ref();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut messages = Vec::new();
    let mut seen = HashSet::new();
    read_jsonl(path, |line, rec: MessageLine| {
        if !seen.insert(rec.id.clone()) {
            return Err(CorpusError::Malformed {
                path: path.to_path_buf(),
                line,
                reason: format!("duplicate id {:?}", rec.id),
            });
        }
        let msg = Message::new(rec.id, rec.text, rec.source_tag).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        messages.push(msg);
        Ok(())
    })?;
    Corpus::new(name, messages)
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_jsonl(
        path.as_ref(),
        corpus.messages.iter().map(|m| MessageLine {
            id: m.id.clone(),
            text: m.text.clone(),
            source_tag: m.source_tag.clone(),
        }),
    )
}

pub fn load_prompts(path: impl AsRef<Path>) -> Result<Vec<PromptRecord>, CorpusError> {
    let path = path.as_ref();
    let mut prompts = Vec::new();
    read_jsonl(path, |line, rec: PromptLine| {
        let record = PromptRecord::new(rec.id, rec.icd9_code, rec.prompt).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line,
            reason: e.to_string(),
        })?;
        prompts.push(record);
        Ok(())
    })?;
    Ok(prompts)
}

pub fn save_prompts(prompts: &[PromptRecord], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_jsonl(
        path.as_ref(),
        prompts.iter().map(|p| PromptLine {
            id: p.id.clone(),
            icd9_code: p.icd9_code.clone(),
            prompt: p.prompt_text.clone(),
        }),
    )
}

/// Keeps messages whose length lies in `[min_chars, max_chars]`.
pub fn filter_by_length(corpus: &Corpus, min_chars: usize, max_chars: usize) -> Result<Corpus, CorpusError> {
    if min_chars > max_chars {
        return Err(CorpusError::InvalidBounds {
            min: min_chars,
            max: max_chars,
        });
    }
    Ok(Corpus {
        name: corpus.name.clone(),
        messages: corpus
            .messages
            .iter()
            .filter(|m| (min_chars..=max_chars).contains(&m.char_len))
            .cloned()
            .collect(),
    })
}

/// One (prompt, message) pair shown to the model in context.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Exemplar {
    pub prompt: String,
    pub message: String,
}

impl Exemplar {
    pub fn new(prompt: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            message: message.into(),
        }
    }
}

/// The de-identified exemplar pairs used for grounded generation.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundingPack {
    pub exemplars: Vec<Exemplar>,
}

impl GroundingPack {
    pub fn new(exemplars: Vec<Exemplar>) -> Self {
        Self { exemplars }
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }
}

pub fn load_grounding_pack(path: impl AsRef<Path>) -> Result<GroundingPack, CorpusError> {
    let mut exemplars = Vec::new();
    read_jsonl(path.as_ref(), |_, rec: ExemplarLine| {
        exemplars.push(Exemplar::new(rec.prompt, rec.message));
        Ok(())
    })?;
    Ok(GroundingPack { exemplars })
}

pub fn save_grounding_pack(pack: &GroundingPack, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    write_jsonl(
        path.as_ref(),
        pack.exemplars.iter().map(|e| ExemplarLine {
            prompt: e.prompt.clone(),
            message: e.message.clone(),
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PackViolation {
    WrongSize { expected: usize, actual: usize },
    EmptyPrompt { index: usize },
    EmptyMessage { index: usize },
    SentinelInPrompt { index: usize },
    SentinelInMessage { index: usize },
}

impl fmt::Display for PackViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::WrongSize { expected, actual } => {
                write!(f, "pack holds {actual} exemplars, expected {expected}")
            }
            Self::EmptyPrompt { index } => write!(f, "exemplar {index}: empty prompt"),
            Self::EmptyMessage { index } => write!(f, "exemplar {index}: empty message"),
            Self::SentinelInPrompt { index } => write!(f, "exemplar {index}: prompt contains the sentinel"),
            Self::SentinelInMessage { index } => {
                write!(f, "exemplar {index}: message contains the sentinel")
            }
        }
    }
}

/// Outcome of [`validate_grounding_pack`]; empty means valid.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PackReport {
    pub violations: Vec<PackViolation>,
}

impl PackReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for PackReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub fn validate_grounding_pack(pack: &GroundingPack, expected_size: usize, sentinel: &str) -> PackReport {
    let mut violations = Vec::new();
    if pack.len() != expected_size {
        violations.push(PackViolation::WrongSize {
            expected: expected_size,
            actual: pack.len(),
        });
    }
    for (index, ex) in pack.exemplars.iter().enumerate() {
        if ex.prompt.trim().is_empty() {
            violations.push(PackViolation::EmptyPrompt { index });
        }
        if ex.message.trim().is_empty() {
            violations.push(PackViolation::EmptyMessage { index });
        }
        // an empty sentinel would match everywhere; stage2 rejects it separately
        if !sentinel.is_empty() {
            if ex.prompt.contains(sentinel) {
                violations.push(PackViolation::SentinelInPrompt { index });
            }
            if ex.message.contains(sentinel) {
                violations.push(PackViolation::SentinelInMessage { index });
            }
        }
    }
    PackReport { violations }
}
