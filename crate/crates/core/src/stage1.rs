//! Stage 1: turn ICD-9 code descriptions into patient-message prompts with a
//! k-shot instruction prompt.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::PromptRecord;
use crate::icd9::Icd9Code;
use crate::llm::{dispatch_ordered, Completer, CompletionRequest};

pub const DEFAULT_INSTRUCTION: &str = "Given an ICD9 code for a given patient, write a short description of a message that a patient might send to their doctor which may or may not be related to the code. Here are examples.";

pub const DEFAULT_K: usize = 4;

const CODE_PREFIX: &str = "Example Code:";
const DESCRIPTION_PREFIX: &str = "Example Message Description:";

/// The first pair is the published example; the other three are written in
/// the same style.
const DEFAULT_EXEMPLARS: &[(&str, &str)] = &[
    (
        "Shoulder joint replacement",
        "Patient heard a snap while trying to lift heavy boxes after shoulder surgery, and is experiencing pain.",
    ),
    (
        "Unspecified essential hypertension",
        "Patient has been checking their blood pressure at home, the readings are higher than usual, and they want to know if their medication should be adjusted.",
    ),
    (
        "Diabetes mellitus without mention of complication, type II or unspecified type, not stated as uncontrolled",
        "Patient ran out of glucose test strips and is asking for a refill before leaving on a trip.",
    ),
    (
        "Acute bronchitis",
        "Patient still has a cough two weeks after being seen and wonders whether they need an antibiotic.",
    ),
];

#[derive(Debug, thiserror::Error)]
pub enum Stage1Error {
    #[error("code description is empty")]
    EmptyDescription,
    #[error("template has {available} exemplars but k = {k}")]
    TooFewExemplars { available: usize, k: usize },
    #[error("exemplar {0} has an empty field")]
    EmptyExemplar(usize),
    #[error("model output is empty after cleanup")]
    EmptyOutput,
    #[error("no codes given")]
    NoCodes,
    #[error("all {0} items failed")]
    AllFailed(usize),
    #[error("template file {path}: {reason}")]
    TemplateFile { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Exemplar {
    /// ICD-9 code description.
    pub code: String,
    /// The message prompt it maps to.
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage1Template {
    pub instruction: String,
    pub exemplars: Vec<Stage1Exemplar>,
    pub k: usize,
}

impl Default for Stage1Template {
    fn default() -> Self {
        Self {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            exemplars: DEFAULT_EXEMPLARS
                .iter()
                .map(|&(code, prompt)| Stage1Exemplar {
                    code: code.into(),
                    prompt: prompt.into(),
                })
                .collect(),
            k: DEFAULT_K,
        }
    }
}

impl Stage1Template {
    /// Loads a JSON override with `instruction`, `exemplars` and `k`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Stage1Error> {
        let path = path.as_ref();
        let err = |reason: String| Stage1Error::TemplateFile {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let template: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), Stage1Error> {
        if self.exemplars.len() < self.k {
            return Err(Stage1Error::TooFewExemplars {
                available: self.exemplars.len(),
                k: self.k,
            });
        }
        if let Some(i) = self.exemplars[..self.k]
            .iter()
            .position(|e| e.code.trim().is_empty() || e.prompt.trim().is_empty())
        {
            return Err(Stage1Error::EmptyExemplar(i));
        }
        Ok(())
    }
}

/// Instruction, the first `k` exemplar blocks, then the target description
/// with an open `Example Message Description:` cue.
pub fn build_stage1_prompt(template: &Stage1Template, code_description: &str) -> Result<String, Stage1Error> {
    let description = code_description.trim();
    if description.is_empty() {
        return Err(Stage1Error::EmptyDescription);
    }
    template.validate()?;
    let mut out = String::with_capacity(1024);
    out.push_str(template.instruction.trim_end());
    out.push_str("\n\n");
    for ex in &template.exemplars[..template.k] {
        out.push_str(&format!(
            "{CODE_PREFIX} {}\n{DESCRIPTION_PREFIX} {}\n\n",
            ex.code.trim(),
            ex.prompt.trim()
        ));
    }
    out.push_str(&format!("{CODE_PREFIX} {description}\n{DESCRIPTION_PREFIX}"));
    Ok(out)
}

/// Cleans a raw completion into a single-paragraph prompt: trims, then cuts
/// at the first blank line or the first template marker.
pub fn parse_stage1_output(raw: &str) -> Result<String, Stage1Error> {
    let mut text = raw.trim();
    if let Some(pos) = find_blank_line(text) {
        text = &text[..pos];
    }
    for marker in [CODE_PREFIX, DESCRIPTION_PREFIX] {
        if let Some(pos) = text.find(marker) {
            text = &text[..pos];
        }
    }
    let text = text.trim();
    if text.is_empty() {
        return Err(Stage1Error::EmptyOutput);
    }
    Ok(text.to_string())
}

fn find_blank_line(text: &str) -> Option<usize> {
    let mut offset = 0;
    let mut prev_newline: Option<usize> = None;
    for line in text.split_inclusive('\n') {
        if line.trim().is_empty() {
            return Some(prev_newline.unwrap_or(offset));
        }
        offset += line.len();
        prev_newline = line.ends_with('\n').then_some(offset - 1);
    }
    None
}

#[derive(Debug)]
pub struct ItemFailure {
    pub index: usize,
    pub id: String,
    pub error: String,
}

#[derive(Debug)]
pub struct PromptBatch {
    pub records: Vec<PromptRecord>,
    pub failures: Vec<ItemFailure>,
}

pub fn prompt_id(index: usize) -> String {
    format!("prompt-{index:05}")
}

/// Generates one prompt per code. Item `i` uses seed `seed ^ i`. Failed items
/// are reported in `failures` and left out of `records`.
pub async fn generate_prompts(
    codes: &[Icd9Code],
    template: &Stage1Template,
    completer: &dyn Completer,
    seed: u64,
) -> Result<PromptBatch, Stage1Error> {
    if codes.is_empty() {
        return Err(Stage1Error::NoCodes);
    }
    template.validate()?;
    let results = dispatch_ordered(codes.len(), completer.max_parallel(), |i| async move {
        let code = &codes[i];
        let prompt = build_stage1_prompt(template, code.description()).map_err(|e| e.to_string())?;
        let request = CompletionRequest::new(prompt, seed ^ i as u64).with_stop(CODE_PREFIX);
        let completion = completer.complete(&request).await.map_err(|e| e.to_string())?;
        let text = parse_stage1_output(&completion.text).map_err(|e| e.to_string())?;
        PromptRecord::new(prompt_id(i), code.code(), text).map_err(|e| e.to_string())
    })
    .await;

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err(error) => {
                tracing::warn!(index, %error, "stage-1 item failed");
                failures.push(ItemFailure {
                    index,
                    id: prompt_id(index),
                    error,
                });
            }
        }
    }
    if records.is_empty() {
        return Err(Stage1Error::AllFailed(failures.len()));
    }
    Ok(PromptBatch { records, failures })
}
