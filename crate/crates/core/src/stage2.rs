//! Stage 2: turn message prompts into patient messages, either zero-shot or
//! grounded on an in-context pack of (prompt, message) exemplars.
//!
//! Grounded prompts reuse the zero-shot instruction text up to the
//! `Prompt: [prompt]` line, then list the pack's exemplars in a
//! seed-determined order, each closed by the sentinel, then the target.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{validate_grounding_pack, Corpus, GroundingPack, Message, PackReport, PromptRecord};
use crate::llm::{dispatch_ordered, Completer, CompletionRequest};
use crate::stage1::ItemFailure;

pub const DEFAULT_SENTINEL: &str = "### End Of Message ###";

pub const PROMPT_PLACEHOLDER: &str = "[prompt]";

pub const MESSAGE_CUE: &str = "Patient Message:";

pub const DEFAULT_INSTRUCTION: &str = "Pretend you are a medical patient. Write a message to your doctor using the prompt:

### Rules ###

- Assume the doctor you are messaging has been your physician for years. It is permissible to speak informally when appropriate.

- Do not restate the prompt in the message.

- You may add additional health context (e.g. symptoms or medications) to the message as needed.

Prompt: [prompt]

Patient Message:";

#[derive(Debug, thiserror::Error)]
pub enum Stage2Error {
    #[error("target prompt is empty")]
    EmptyTarget,
    #[error("target prompt contains the sentinel")]
    SentinelInTarget,
    #[error("invalid grounding pack: {0}")]
    InvalidPack(PackReport),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("generation is empty after truncation")]
    EmptyGeneration,
    #[error("no prompts given")]
    NoPrompts,
    #[error("all {0} items failed")]
    AllFailed(usize),
    #[error("message: {0}")]
    Corpus(#[from] crate::corpus::CorpusError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stage2Template {
    pub instruction: String,
    pub sentinel: String,
}

impl Default for Stage2Template {
    fn default() -> Self {
        Self {
            instruction: DEFAULT_INSTRUCTION.to_string(),
            sentinel: DEFAULT_SENTINEL.to_string(),
        }
    }
}

impl Stage2Template {
    /// Loads a JSON override with `instruction` and `sentinel`.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Stage2Error> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Stage2Error::InvalidTemplate(format!("{}: {e}", path.display())))?;
        let t: Self = serde_json::from_str(&text)
            .map_err(|e| Stage2Error::InvalidTemplate(format!("{}: {e}", path.display())))?;
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), Stage2Error> {
        if self.sentinel.trim().is_empty() {
            return Err(Stage2Error::InvalidTemplate("sentinel is empty".into()));
        }
        if self.instruction.matches(PROMPT_PLACEHOLDER).count() != 1 {
            return Err(Stage2Error::InvalidTemplate(format!(
                "instruction must contain {PROMPT_PLACEHOLDER} exactly once"
            )));
        }
        if self.instruction.contains(&self.sentinel) {
            return Err(Stage2Error::InvalidTemplate("instruction contains the sentinel".into()));
        }
        Ok(())
    }

    /// Instruction and rules: everything before the line holding the placeholder.
    pub fn header(&self) -> &str {
        let pos = self
            .instruction
            .find(PROMPT_PLACEHOLDER)
            .unwrap_or(self.instruction.len());
        let line_start = self.instruction[..pos].rfind('\n').map_or(0, |i| i + 1);
        self.instruction[..line_start].trim_end()
    }

    fn check_target<'a>(&self, target: &'a str) -> Result<&'a str, Stage2Error> {
        let target = target.trim();
        if target.is_empty() {
            return Err(Stage2Error::EmptyTarget);
        }
        if target.contains(&self.sentinel) {
            return Err(Stage2Error::SentinelInTarget);
        }
        Ok(target)
    }
}

pub fn build_zeroshot_prompt(template: &Stage2Template, target_prompt: &str) -> Result<String, Stage2Error> {
    template.validate()?;
    let target = template.check_target(target_prompt)?;
    let mut out = template.instruction.replacen(PROMPT_PLACEHOLDER, target, 1);
    let trimmed = out.trim_end().len();
    out.truncate(trimmed);
    if !out.ends_with(MESSAGE_CUE) {
        out.push_str("\n\n");
        out.push_str(MESSAGE_CUE);
    }
    Ok(out)
}

/// Seeded permutation of `0..n`.
pub fn exemplar_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
}

pub fn format_exemplar(prompt: &str, message: &str, sentinel: &str) -> String {
    format!(
        "Prompt: {}\n{MESSAGE_CUE} {}\n{sentinel}",
        prompt.trim(),
        message.trim()
    )
}

/// Pack contents are validated but not the pack size; callers decide how many
/// exemplars they require.
pub fn build_grounded_prompt(
    template: &Stage2Template,
    pack: &GroundingPack,
    target_prompt: &str,
    seed: u64,
) -> Result<String, Stage2Error> {
    template.validate()?;
    let report = validate_grounding_pack(pack, pack.len().max(1), &template.sentinel);
    if !report.is_valid() {
        return Err(Stage2Error::InvalidPack(report));
    }
    let target = template.check_target(target_prompt)?;
    let mut out = String::with_capacity(4096);
    out.push_str(template.header());
    out.push_str("\n\n");
    for i in exemplar_order(pack.len(), seed) {
        let ex = &pack.exemplars[i];
        out.push_str(&format_exemplar(&ex.prompt, &ex.message, &template.sentinel));
        out.push_str("\n\n");
    }
    out.push_str(&format!("Prompt: {target}\n{MESSAGE_CUE}"));
    Ok(out)
}

/// Everything before the first sentinel, trimmed.
pub fn truncate_at_sentinel(raw: &str, sentinel: &str) -> Result<String, Stage2Error> {
    let head = match raw.find(sentinel) {
        Some(pos) if !sentinel.is_empty() => &raw[..pos],
        _ => raw,
    };
    let head = head.trim();
    if head.is_empty() {
        return Err(Stage2Error::EmptyGeneration);
    }
    Ok(head.to_string())
}

#[derive(Debug)]
pub struct MessageBatch {
    pub corpus: Corpus,
    pub failures: Vec<ItemFailure>,
}

/// Generates one message per prompt, grounded when `pack` is given. Item `i`
/// shuffles with seed `base_seed ^ i`. Messages take the id of their prompt.
pub async fn generate_messages(
    prompts: &[PromptRecord],
    template: &Stage2Template,
    pack: Option<&GroundingPack>,
    completer: &dyn Completer,
    base_seed: u64,
    corpus_name: &str,
    source_tag: &str,
) -> Result<MessageBatch, Stage2Error> {
    if prompts.is_empty() {
        return Err(Stage2Error::NoPrompts);
    }
    template.validate()?;
    if let Some(pack) = pack {
        let report = validate_grounding_pack(pack, pack.len().max(1), &template.sentinel);
        if !report.is_valid() {
            return Err(Stage2Error::InvalidPack(report));
        }
    }
    let results = dispatch_ordered(prompts.len(), completer.max_parallel(), |i| async move {
        let record = &prompts[i];
        let seed = base_seed ^ i as u64;
        let prompt = match pack {
            Some(pack) => build_grounded_prompt(template, pack, record.prompt_text(), seed),
            None => build_zeroshot_prompt(template, record.prompt_text()),
        }
        .map_err(|e| e.to_string())?;
        let request = CompletionRequest::new(prompt, seed).with_stop(template.sentinel.clone());
        let completion = completer.complete(&request).await.map_err(|e| e.to_string())?;
        let text = truncate_at_sentinel(&completion.text, &template.sentinel).map_err(|e| e.to_string())?;
        Message::new(record.id(), text, source_tag).map_err(|e| e.to_string())
    })
    .await;

    let mut messages = Vec::with_capacity(prompts.len());
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => messages.push(m),
            Err(error) => {
                tracing::warn!(index, %error, "stage-2 item failed");
                failures.push(ItemFailure {
                    index,
                    id: prompts[index].id().to_string(),
                    error,
                });
            }
        }
    }
    if messages.is_empty() {
        return Err(Stage2Error::AllFailed(failures.len()));
    }
    Ok(MessageBatch {
        corpus: Corpus::new(corpus_name, messages)?,
        failures,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Exemplar;
    use crate::fixtures::{demo_grounding_pack, DIABETIC_COMA_PROMPT};
    use crate::llm::{Completion, FinishReason, LlmError, MockCompleter};
    use async_trait::async_trait;
    use std::sync::Mutex;

    const RULES: [&str; 3] = [
        "- Assume the doctor you are messaging has been your physician for years. It is permissible to speak informally when appropriate.",
        "- Do not restate the prompt in the message.",
        "- You may add additional health context (e.g. symptoms or medications) to the message as needed.",
    ];

    #[test]
    fn zeroshot_substitution() {
        let t = Stage2Template::default();
        let p = build_zeroshot_prompt(&t, "X").unwrap();
        assert_eq!(p.matches("Prompt: X").count(), 1);
        assert!(p.ends_with("Patient Message:"));
        assert!(p.starts_with("Pretend you are a medical patient."));
        for rule in RULES {
            assert!(p.contains(rule), "{rule}");
        }
        assert!(!p.contains(PROMPT_PLACEHOLDER));
        assert!(matches!(build_zeroshot_prompt(&t, " "), Err(Stage2Error::EmptyTarget)));
    }

    #[test]
    fn template_without_cue_gets_one() {
        let t = Stage2Template {
            instruction: "Write it.\nPrompt: [prompt]".into(),
            sentinel: "<END>".into(),
        };
        assert_eq!(
            build_zeroshot_prompt(&t, "Y").unwrap(),
            "Write it.\nPrompt: Y\n\nPatient Message:"
        );
    }

    #[test]
    fn template_validation() {
        let t = Stage2Template {
            sentinel: " ".into(),
            ..Default::default()
        };
        assert!(t.validate().is_err());
        let t = Stage2Template {
            instruction: "no placeholder".into(),
            ..Default::default()
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn header_is_instruction_and_rules() {
        let t = Stage2Template::default();
        let h = t.header();
        assert!(h.starts_with("Pretend you are"));
        assert!(h.ends_with("to the message as needed."));
    }

    #[test]
    fn grounded_layout() {
        let t = Stage2Template::default();
        let pack = demo_grounding_pack();
        let p = build_grounded_prompt(&t, &pack, DIABETIC_COMA_PROMPT, 11).unwrap();
        assert_eq!(p.matches(DEFAULT_SENTINEL).count(), 10);
        assert_eq!(p.matches(DIABETIC_COMA_PROMPT).count(), 1);
        assert!(p.ends_with(&format!("Prompt: {DIABETIC_COMA_PROMPT}\nPatient Message:")));
        let last_sentinel = p.rfind(DEFAULT_SENTINEL).unwrap();
        assert!(p.find(DIABETIC_COMA_PROMPT).unwrap() > last_sentinel);
        for rule in RULES {
            assert_eq!(p.matches(rule).count(), 1);
        }
        let zs = build_zeroshot_prompt(&t, DIABETIC_COMA_PROMPT).unwrap();
        assert!(p.starts_with(t.header()) && zs.starts_with(t.header()));
    }

    #[test]
    fn single_exemplar_identity() {
        let pack = GroundingPack::new(vec![Exemplar::new("p", "m")]);
        for seed in 0..20 {
            assert_eq!(exemplar_order(1, seed), vec![0]);
            let p = build_grounded_prompt(&Stage2Template::default(), &pack, "t", seed).unwrap();
            assert!(p.contains("Prompt: p\nPatient Message: m\n### End Of Message ###\n\nPrompt: t\nPatient Message:"));
        }
    }

    #[test]
    fn shuffles_differ_across_seeds() {
        let orders: std::collections::HashSet<Vec<usize>> = (0..20).map(|s| exemplar_order(10, s)).collect();
        assert!(orders.len() > 1);
        for o in orders {
            let mut sorted = o.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn invalid_pack_rejected() {
        let mut pack = demo_grounding_pack();
        pack.exemplars[2].message.push_str("\n### End Of Message ###");
        assert!(matches!(
            build_grounded_prompt(&Stage2Template::default(), &pack, "t", 0),
            Err(Stage2Error::InvalidPack(_))
        ));
        assert!(matches!(
            build_grounded_prompt(&Stage2Template::default(), &GroundingPack::default(), "t", 0),
            Err(Stage2Error::InvalidPack(_))
        ));
        assert!(matches!(
            build_grounded_prompt(
                &Stage2Template::default(),
                &demo_grounding_pack(),
                "a ### End Of Message ### b",
                0
            ),
            Err(Stage2Error::SentinelInTarget)
        ));
    }

    #[test]
    fn truncation() {
        assert_eq!(
            truncate_at_sentinel(
                "Hi Dr,\nThanks,\n### End Of Message ###\nPrompt: next",
                DEFAULT_SENTINEL
            )
            .unwrap(),
            "Hi Dr,\nThanks,"
        );
        assert_eq!(
            truncate_at_sentinel("no sentinel here", DEFAULT_SENTINEL).unwrap(),
            "no sentinel here"
        );
        assert!(matches!(
            truncate_at_sentinel("### End Of Message ###", DEFAULT_SENTINEL),
            Err(Stage2Error::EmptyGeneration)
        ));
    }

    fn prompts(n: usize) -> Vec<PromptRecord> {
        (0..n)
            .map(|i| PromptRecord::new(format!("p{i}"), "", format!("Patient issue number {i}.")).unwrap())
            .collect()
    }

    #[tokio::test]
    async fn grounded_batch_with_mock() {
        let pack = demo_grounding_pack();
        let batch = generate_messages(
            &prompts(3),
            &Stage2Template::default(),
            Some(&pack),
            &MockCompleter::default(),
            9,
            "grounded",
            "grounded",
        )
        .await
        .unwrap();
        assert_eq!(batch.corpus.len(), 3);
        for (i, m) in batch.corpus.messages().iter().enumerate() {
            assert_eq!(m.id(), format!("p{i}"));
            assert!(!m.text().contains(DEFAULT_SENTINEL));
            assert_eq!(m.source_tag(), "grounded");
        }
    }

    /// Records the prompts it receives.
    struct Recorder(Mutex<Vec<CompletionRequest>>);

    #[async_trait]
    impl Completer for Recorder {
        async fn complete(&self, request: &CompletionRequest) -> Result<Completion, LlmError> {
            self.0.lock().unwrap().push(request.clone());
            if request.prompt.contains("Prompt: fail me") {
                return Err(LlmError::Other("scripted".into()));
            }
            Ok(Completion {
                text: "Hello\n### End Of Message ###\nPrompt: extra".into(),
                finish_reason: FinishReason::Stop,
            })
        }
    }

    #[tokio::test]
    async fn prompt_flows_through_and_failures_are_reported() {
        let recorder = Recorder(Mutex::new(Vec::new()));
        let mut ps = prompts(1);
        ps.push(PromptRecord::new("coma", "250.30", DIABETIC_COMA_PROMPT).unwrap());
        ps.push(PromptRecord::new("bad", "", "fail me").unwrap());
        let pack = demo_grounding_pack();
        let batch = generate_messages(
            &ps,
            &Stage2Template::default(),
            Some(&pack),
            &recorder,
            0,
            "g",
            "grounded",
        )
        .await
        .unwrap();
        assert_eq!(batch.corpus.len(), 2);
        assert_eq!(batch.corpus.messages()[1].text(), "Hello");
        assert_eq!(batch.failures.len(), 1);
        assert_eq!(batch.failures[0].id, "bad");
        let seen = recorder.0.lock().unwrap();
        let coma = seen.iter().find(|r| r.prompt.contains("diabetic coma")).unwrap();
        assert!(coma
            .prompt
            .ends_with(&format!("Prompt: {DIABETIC_COMA_PROMPT}\nPatient Message:")));
        assert_eq!(coma.stop, vec![DEFAULT_SENTINEL.to_string()]);
        assert_eq!(coma.seed, 1);
    }

    #[tokio::test]
    async fn zeroshot_batch_and_determinism() {
        let t = Stage2Template::default();
        let run = || async {
            generate_messages(&prompts(5), &t, None, &MockCompleter::default(), 77, "zs", "zeroshot")
                .await
                .unwrap()
                .corpus
        };
        let a = run().await;
        assert_eq!(a, run().await);
        assert_eq!(a.messages()[0].source_tag(), "zeroshot");
    }
}
