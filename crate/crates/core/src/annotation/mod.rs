//! Blind ranking study: task construction, submission validation, an
//! append-only submission log, and mean-rank aggregation.
//!
//! Each task shows one output per system under a letter label. The label to
//! system mapping (the blinding) stays server-side; clients only ever see
//! [`TaskView`]s. Display order is additionally shuffled per annotator.

mod server;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PromptRecord};
use crate::hash::Fnv1a;

pub use server::{router, serve, AppState};

#[derive(Debug, thiserror::Error)]
pub enum AnnotationError {
    #[error("ranking needs at least 2 systems, got {0}")]
    TooFewSystems(usize),
    #[error("at most 26 systems are supported, got {0}")]
    TooManySystems(usize),
    #[error("requested {requested} tasks but only {available} prompts are available")]
    TooManyTasks { requested: usize, available: usize },
    #[error("system {system:?} has no output for prompt {prompt_id:?}")]
    MissingOutput { system: String, prompt_id: String },
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("annotator id is empty")]
    EmptyAnnotator,
    #[error("invalid ranks: {0}")]
    InvalidRanks(String),
    #[error("no submissions")]
    NoSubmissions,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlindedOutput {
    pub label: String,
    pub text: String,
}

/// A task as stored server-side, blinding included.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankingTask {
    pub task_id: String,
    pub prompt_id: String,
    pub prompt_text: String,
    pub outputs: Vec<BlindedOutput>,
    /// label → system name
    pub blinding: BTreeMap<String, String>,
}

/// What an annotator's client receives. Carries no system names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub task_id: String,
    pub prompt_text: String,
    pub outputs: Vec<BlindedOutput>,
    pub submitted: bool,
}

impl RankingTask {
    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.outputs.iter().map(|o| o.label.as_str())
    }

    /// Blinded view with outputs in an order seeded by (task, annotator, seed).
    pub fn view_for(&self, annotator_id: &str, seed: u64, submitted: bool) -> TaskView {
        let key = Fnv1a::default()
            .write_field(self.task_id.as_bytes())
            .write_field(annotator_id.as_bytes())
            .write_field(&seed.to_le_bytes())
            .finish();
        let mut outputs = self.outputs.clone();
        outputs.shuffle(&mut ChaCha8Rng::seed_from_u64(key));
        TaskView {
            task_id: self.task_id.clone(),
            prompt_text: self.prompt_text.clone(),
            outputs,
            submitted,
        }
    }

    pub fn validate_ranks(&self, ranks: &BTreeMap<String, u32>) -> Result<(), AnnotationError> {
        let labels: BTreeSet<&str> = self.labels().collect();
        let given: BTreeSet<&str> = ranks.keys().map(String::as_str).collect();
        if labels != given {
            return Err(AnnotationError::InvalidRanks(format!(
                "expected labels {:?}, got {:?}",
                labels, given
            )));
        }
        let mut values: Vec<u32> = ranks.values().copied().collect();
        values.sort_unstable();
        let n = values.len() as u32;
        if values != (1..=n).collect::<Vec<_>>() {
            return Err(AnnotationError::InvalidRanks(format!(
                "ranks {values:?} are not a permutation of 1..={n}"
            )));
        }
        Ok(())
    }
}

/// Tasks plus the seed used for per-annotator display order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub seed: u64,
    pub tasks: Vec<RankingTask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<serde_json::Value>,
}

impl TaskSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| AnnotationError::Malformed {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), AnnotationError> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("task set serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn label(i: usize) -> String {
    char::from(b'A' + i as u8).to_string()
}

/// Samples `n_tasks` prompts without replacement and pairs each with every
/// system's output for it. System corpora are matched to prompts by message
/// id. Labels are assigned to systems by a seeded shuffle per task.
pub fn create_tasks(
    prompts: &[PromptRecord],
    systems: &BTreeMap<String, Corpus>,
    n_tasks: usize,
    seed: u64,
) -> Result<Vec<RankingTask>, AnnotationError> {
    if systems.len() < 2 {
        return Err(AnnotationError::TooFewSystems(systems.len()));
    }
    if systems.len() > 26 {
        return Err(AnnotationError::TooManySystems(systems.len()));
    }
    if n_tasks > prompts.len() {
        return Err(AnnotationError::TooManyTasks {
            requested: n_tasks,
            available: prompts.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = index::sample(&mut rng, prompts.len(), n_tasks);
    let names: Vec<&String> = systems.keys().collect();
    let mut tasks = Vec::with_capacity(n_tasks);
    for (t, idx) in picked.into_iter().enumerate() {
        let prompt = &prompts[idx];
        let mut order = names.clone();
        order.shuffle(&mut rng);
        let mut outputs = Vec::with_capacity(order.len());
        let mut blinding = BTreeMap::new();
        for (i, name) in order.into_iter().enumerate() {
            let message = systems[name]
                .get(prompt.id())
                .ok_or_else(|| AnnotationError::MissingOutput {
                    system: name.clone(),
                    prompt_id: prompt.id().to_string(),
                })?;
            outputs.push(BlindedOutput {
                label: label(i),
                text: message.text().to_string(),
            });
            blinding.insert(label(i), name.clone());
        }
        tasks.push(RankingTask {
            task_id: format!("task-{:03}", t + 1),
            prompt_id: prompt.id().to_string(),
            prompt_text: prompt.prompt_text().to_string(),
            outputs,
            blinding,
        });
    }
    Ok(tasks)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub task_id: String,
    pub annotator_id: String,
    /// label → rank, 1 = best
    pub ranks: BTreeMap<String, u32>,
    pub submitted_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemRank {
    pub mean_rank: f64,
    pub observations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub systems: BTreeMap<String, SystemRank>,
    pub submissions: usize,
}

/// Un-blinds each submission and averages the ranks each system received.
pub fn mean_ranks<'a, I>(submissions: I, tasks: &BTreeMap<String, RankingTask>) -> Result<RankSummary, AnnotationError>
where
    I: IntoIterator<Item = &'a Submission>,
{
    let mut sums: BTreeMap<String, (u64, usize)> = BTreeMap::new();
    let mut count = 0;
    for sub in submissions {
        let task = tasks
            .get(&sub.task_id)
            .ok_or_else(|| AnnotationError::UnknownTask(sub.task_id.clone()))?;
        for (label, &rank) in &sub.ranks {
            let system = task
                .blinding
                .get(label)
                .ok_or_else(|| AnnotationError::InvalidRanks(format!("unknown label {label:?}")))?;
            let entry = sums.entry(system.clone()).or_default();
            entry.0 += u64::from(rank);
            entry.1 += 1;
        }
        count += 1;
    }
    if count == 0 {
        return Err(AnnotationError::NoSubmissions);
    }
    let systems = sums
        .into_iter()
        .map(|(name, (sum, n))| {
            (
                name,
                SystemRank {
                    mean_rank: sum as f64 / n as f64,
                    observations: n,
                },
            )
        })
        .collect();
    Ok(RankSummary {
        systems,
        submissions: count,
    })
}

/// Tasks plus the effective (latest per task and annotator) submissions,
/// optionally backed by an append-only JSON Lines log.
#[derive(Debug)]
pub struct AnnotationStore {
    tasks: BTreeMap<String, RankingTask>,
    effective: BTreeMap<(String, String), Submission>,
    log: Option<(PathBuf, File)>,
}

impl AnnotationStore {
    pub fn in_memory(tasks: Vec<RankingTask>) -> Self {
        Self {
            tasks: tasks.into_iter().map(|t| (t.task_id.clone(), t)).collect(),
            effective: BTreeMap::new(),
            log: None,
        }
    }

    /// Replays a log read-only. A missing log means no submissions.
    pub fn replay(tasks: Vec<RankingTask>, log_path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = log_path.as_ref();
        let mut store = Self::in_memory(tasks);
        for (line, sub) in read_log(path)? {
            store.apply(sub).map_err(|e| AnnotationError::Malformed {
                path: path.to_path_buf(),
                line,
                reason: e.to_string(),
            })?;
        }
        Ok(store)
    }

    /// Replays an existing log (if any) and appends new submissions to it.
    pub fn open(tasks: Vec<RankingTask>, log_path: impl AsRef<Path>) -> Result<Self, AnnotationError> {
        let path = log_path.as_ref().to_path_buf();
        let mut store = Self::replay(tasks, &path)?;
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|source| AnnotationError::Io {
                path: path.clone(),
                source,
            })?;
        store.log = Some((path, file));
        Ok(store)
    }

    pub fn tasks(&self) -> &BTreeMap<String, RankingTask> {
        &self.tasks
    }

    fn check(&self, sub: &Submission) -> Result<(), AnnotationError> {
        if sub.annotator_id.trim().is_empty() {
            return Err(AnnotationError::EmptyAnnotator);
        }
        let task = self
            .tasks
            .get(&sub.task_id)
            .ok_or_else(|| AnnotationError::UnknownTask(sub.task_id.clone()))?;
        task.validate_ranks(&sub.ranks)
    }

    fn apply(&mut self, sub: Submission) -> Result<bool, AnnotationError> {
        self.check(&sub)?;
        let key = (sub.task_id.clone(), sub.annotator_id.clone());
        Ok(self.effective.insert(key, sub).is_some())
    }

    /// Validates, appends to the log, and makes `sub` the effective
    /// submission for its (task, annotator). Returns whether an earlier
    /// submission was replaced.
    pub fn record_submission(&mut self, sub: Submission) -> Result<bool, AnnotationError> {
        self.check(&sub)?;
        if let Some((path, file)) = &mut self.log {
            let mut line = serde_json::to_string(&sub).expect("submission serializes");
            line.push('\n');
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| AnnotationError::Io {
                    path: path.clone(),
                    source,
                })?;
        }
        self.apply(sub)
    }

    pub fn effective(&self) -> &BTreeMap<(String, String), Submission> {
        &self.effective
    }

    pub fn has_submitted(&self, task_id: &str, annotator_id: &str) -> bool {
        self.effective
            .contains_key(&(task_id.to_string(), annotator_id.to_string()))
    }

    pub fn summary(&self) -> Result<RankSummary, AnnotationError> {
        mean_ranks(self.effective.values(), &self.tasks)
    }
}

fn read_log(path: &Path) -> Result<Vec<(usize, Submission)>, AnnotationError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(AnnotationError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| AnnotationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let sub = serde_json::from_str(&line).map_err(|e| AnnotationError::Malformed {
            path: path.to_path_buf(),
            line: idx + 1,
            reason: e.to_string(),
        })?;
        out.push((idx + 1, sub));
    }
    Ok(out)
}
