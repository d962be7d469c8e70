//! ICD-9 code database parsing, chapter binning and chapter-weighted sampling.
//!
//! Codes are sampled in two steps: a chapter is drawn in proportion to the
//! histogram weights, then a code is drawn uniformly from the database codes
//! falling in that chapter. Draws are with replacement.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum Icd9Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("{0}: database contains no codes")]
    EmptyDatabase(PathBuf),
    #[error("invalid ICD-9 code {0:?}")]
    InvalidCode(String),
    #[error("code {0} is not covered by any chapter")]
    Uncovered(String),
    #[error("invalid chapter table: {0}")]
    InvalidChapters(String),
    #[error("histogram has no positive counts")]
    AllZero,
    #[error("histogram references unknown chapter {0}")]
    UnknownChapter(u32),
    #[error("chapter {0} has positive weight but no codes in the database")]
    EmptyChapter(u32),
}

/// Root of a code: the three digits before the decimal point, tagged with
/// the supplementary prefix for E and V codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CodeRoot {
    Numeric(u16),
    Supplementary(char, u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Icd9Code {
    code: String,
    description: String,
    root: CodeRoot,
}

impl Icd9Code {
    pub fn new(code: &str, description: &str) -> Result<Self, Icd9Error> {
        let root = parse_root(code).ok_or_else(|| Icd9Error::InvalidCode(code.to_string()))?;
        let description = description.trim();
        if description.is_empty() {
            return Err(Icd9Error::InvalidCode(format!("{code} (empty description)")));
        }
        Ok(Self {
            code: code.to_string(),
            description: description.to_string(),
            root,
        })
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn root(&self) -> CodeRoot {
        self.root
    }
}

impl fmt::Display for Icd9Code {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.description)
    }
}

fn all_digits(s: &str) -> bool {
    s.bytes().all(|b| b.is_ascii_digit())
}

// Accepts `ddd`, `ddd.d`, `ddd.dd`, `Vdd[.d[d]]`, `Eddd[.d[d]]`.
fn parse_root(code: &str) -> Option<CodeRoot> {
    let (head, tail) = match code.split_once('.') {
        Some((h, t)) => (h, Some(t)),
        None => (code, None),
    };
    if let Some(t) = tail {
        if t.is_empty() || t.len() > 2 || !all_digits(t) {
            return None;
        }
    }
    let mut chars = head.chars();
    match chars.next()? {
        prefix @ ('E' | 'V') => {
            let digits = chars.as_str();
            let ok_len = if prefix == 'V' {
                digits.len() == 2
            } else {
                digits.len() == 3
            };
            if !ok_len || !all_digits(digits) {
                return None;
            }
            Some(CodeRoot::Supplementary(prefix, digits.parse().ok()?))
        }
        _ => {
            if head.len() != 3 || !all_digits(head) {
                return None;
            }
            Some(CodeRoot::Numeric(head.parse().ok()?))
        }
    }
}

/// Parses a `code<TAB>description` database. `#` lines and blank lines are skipped.
pub fn parse_icd9_db(path: impl AsRef<Path>) -> Result<Vec<Icd9Code>, Icd9Error> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| Icd9Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let codes = parse_icd9_str(&text).map_err(|(line, reason)| Icd9Error::Malformed {
        path: path.to_path_buf(),
        line,
        reason,
    })?;
    if codes.is_empty() {
        return Err(Icd9Error::EmptyDatabase(path.to_path_buf()));
    }
    Ok(codes)
}

/// Parses database text; errors carry the 1-based line number.
pub fn parse_icd9_str(text: &str) -> Result<Vec<Icd9Code>, (usize, String)> {
    let mut codes = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (code, desc) = line
            .split_once('\t')
            .ok_or_else(|| (idx + 1, "expected code<TAB>description".to_string()))?;
        let code = Icd9Code::new(code.trim(), desc).map_err(|e| (idx + 1, e.to_string()))?;
        codes.push(code);
    }
    Ok(codes)
}

/// Writes codes in the database format, so sampled code lists can be fed back
/// in as a database.
pub fn write_code_list(codes: &[Icd9Code], path: impl AsRef<Path>) -> Result<(), Icd9Error> {
    let path = path.as_ref();
    let mut out = String::new();
    for c in codes {
        out.push_str(&c.code);
        out.push('\t');
        out.push_str(&c.description);
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| Icd9Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chapter {
    pub id: u32,
    pub lo: u16,
    pub hi: u16,
    pub title: String,
    #[serde(default, rename = "prefix", skip_serializing_if = "Option::is_none")]
    pub supplementary_prefix: Option<char>,
}

impl Chapter {
    pub fn contains(&self, root: CodeRoot) -> bool {
        match root {
            CodeRoot::Numeric(n) => self.supplementary_prefix.is_none() && (self.lo..=self.hi).contains(&n),
            CodeRoot::Supplementary(p, n) => self.supplementary_prefix == Some(p) && (self.lo..=self.hi).contains(&n),
        }
    }
}

/// Standard ICD-9-CM chapters: 17 numeric ranges plus the V and E supplements.
const STANDARD_CHAPTERS: &[(u32, u16, u16, &str, Option<char>)] = &[
    (1, 1, 139, "Infectious and parasitic diseases", None),
    (2, 140, 239, "Neoplasms", None),
    (
        3,
        240,
        279,
        "Endocrine, nutritional and metabolic diseases, and immunity disorders",
        None,
    ),
    (4, 280, 289, "Diseases of the blood and blood-forming organs", None),
    (5, 290, 319, "Mental disorders", None),
    (6, 320, 389, "Diseases of the nervous system and sense organs", None),
    (7, 390, 459, "Diseases of the circulatory system", None),
    (8, 460, 519, "Diseases of the respiratory system", None),
    (9, 520, 579, "Diseases of the digestive system", None),
    (10, 580, 629, "Diseases of the genitourinary system", None),
    (
        11,
        630,
        679,
        "Complications of pregnancy, childbirth, and the puerperium",
        None,
    ),
    (12, 680, 709, "Diseases of the skin and subcutaneous tissue", None),
    (
        13,
        710,
        739,
        "Diseases of the musculoskeletal system and connective tissue",
        None,
    ),
    (14, 740, 759, "Congenital anomalies", None),
    (
        15,
        760,
        779,
        "Certain conditions originating in the perinatal period",
        None,
    ),
    (16, 780, 799, "Symptoms, signs, and ill-defined conditions", None),
    (17, 800, 999, "Injury and poisoning", None),
    (
        18,
        1,
        99,
        "Supplementary classification of factors influencing health status and contact with health services",
        Some('V'),
    ),
    (
        19,
        0,
        999,
        "Supplementary classification of external causes of injury and poisoning",
        Some('E'),
    ),
];

/// A validated chapter table. Numeric lookups use binary search over the
/// sorted, non-overlapping ranges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChapterTable {
    chapters: Vec<Chapter>,
    // indices into `chapters` for numeric chapters, sorted by `lo`
    numeric: Vec<usize>,
}

impl ChapterTable {
    pub fn new(chapters: Vec<Chapter>) -> Result<Self, Icd9Error> {
        let mut ids = std::collections::HashSet::new();
        for c in &chapters {
            if c.lo > c.hi {
                return Err(Icd9Error::InvalidChapters(format!(
                    "chapter {}: lo {} > hi {}",
                    c.id, c.lo, c.hi
                )));
            }
            if !ids.insert(c.id) {
                return Err(Icd9Error::InvalidChapters(format!("duplicate chapter id {}", c.id)));
            }
            if let Some(p) = c.supplementary_prefix {
                if p != 'E' && p != 'V' {
                    return Err(Icd9Error::InvalidChapters(format!(
                        "chapter {}: prefix must be E or V",
                        c.id
                    )));
                }
            }
        }
        let mut numeric: Vec<usize> = (0..chapters.len())
            .filter(|&i| chapters[i].supplementary_prefix.is_none())
            .collect();
        numeric.sort_by_key(|&i| chapters[i].lo);
        for w in numeric.windows(2) {
            let (a, b) = (&chapters[w[0]], &chapters[w[1]]);
            if b.lo <= a.hi {
                return Err(Icd9Error::InvalidChapters(format!(
                    "chapters {} and {} overlap",
                    a.id, b.id
                )));
            }
        }
        // supplementary chapters sharing a prefix must not overlap either
        for (i, a) in chapters.iter().enumerate() {
            for b in &chapters[i + 1..] {
                if a.supplementary_prefix.is_some()
                    && a.supplementary_prefix == b.supplementary_prefix
                    && a.lo <= b.hi
                    && b.lo <= a.hi
                {
                    return Err(Icd9Error::InvalidChapters(format!(
                        "chapters {} and {} overlap",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(Self { chapters, numeric })
    }

    pub fn standard() -> Self {
        let chapters = STANDARD_CHAPTERS
            .iter()
            .map(|&(id, lo, hi, title, prefix)| Chapter {
                id,
                lo,
                hi,
                title: title.to_string(),
                supplementary_prefix: prefix,
            })
            .collect();
        Self::new(chapters).expect("standard table is valid")
    }

    /// Loads a JSON Lines table override (`id`, `lo`, `hi`, `title`, optional `prefix`).
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Icd9Error> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Icd9Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut chapters = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let ch: Chapter = serde_json::from_str(line).map_err(|e| Icd9Error::Malformed {
                path: path.to_path_buf(),
                line: idx + 1,
                reason: e.to_string(),
            })?;
            chapters.push(ch);
        }
        Self::new(chapters)
    }

    pub fn chapters(&self) -> &[Chapter] {
        &self.chapters
    }

    pub fn get(&self, id: u32) -> Option<&Chapter> {
        self.chapters.iter().find(|c| c.id == id)
    }

    pub fn chapter_of(&self, code: &Icd9Code) -> Result<&Chapter, Icd9Error> {
        self.chapter_of_root(code.root)
            .ok_or_else(|| Icd9Error::Uncovered(code.code.clone()))
    }

    pub fn chapter_of_root(&self, root: CodeRoot) -> Option<&Chapter> {
        match root {
            CodeRoot::Numeric(n) => {
                let pos = self.numeric.partition_point(|&i| self.chapters[i].lo <= n);
                let idx = *self.numeric.get(pos.checked_sub(1)?)?;
                let ch = &self.chapters[idx];
                (n <= ch.hi).then_some(ch)
            }
            CodeRoot::Supplementary(..) => self.chapters.iter().find(|c| c.contains(root)),
        }
    }
}

/// Normalized sampling weights over chapter ids.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChapterHistogram {
    weights: BTreeMap<u32, f64>,
}

impl ChapterHistogram {
    pub fn weights(&self) -> &BTreeMap<u32, f64> {
        &self.weights
    }

    /// Equal weight on every chapter of the table.
    pub fn uniform(table: &ChapterTable) -> Self {
        let counts = table.chapters().iter().map(|c| (c.id, 1)).collect();
        build_histogram(&counts).expect("chapter table is non-empty")
    }

    /// Loads a JSON object of chapter id → count.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, Icd9Error> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| Icd9Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let counts: BTreeMap<u32, u64> = serde_json::from_str(&text).map_err(|e| Icd9Error::Malformed {
            path: path.to_path_buf(),
            line: e.line(),
            reason: e.to_string(),
        })?;
        build_histogram(&counts)
    }

    pub fn check_against(&self, table: &ChapterTable) -> Result<(), Icd9Error> {
        match self.weights.keys().find(|id| table.get(**id).is_none()) {
            Some(&id) => Err(Icd9Error::UnknownChapter(id)),
            None => Ok(()),
        }
    }
}

pub fn build_histogram(chapter_counts: &BTreeMap<u32, u64>) -> Result<ChapterHistogram, Icd9Error> {
    let total: u64 = chapter_counts.values().sum();
    if total == 0 {
        return Err(Icd9Error::AllZero);
    }
    let weights = chapter_counts
        .iter()
        .map(|(&id, &count)| (id, count as f64 / total as f64))
        .collect();
    Ok(ChapterHistogram { weights })
}

/// Draws `n` codes with replacement. Deterministic for a given seed.
pub fn sample_codes(
    db: &[Icd9Code],
    table: &ChapterTable,
    hist: &ChapterHistogram,
    n: usize,
    seed: u64,
) -> Result<Vec<Icd9Code>, Icd9Error> {
    hist.check_against(table)?;
    let mut by_chapter: BTreeMap<u32, Vec<&Icd9Code>> = BTreeMap::new();
    for code in db {
        // codes outside every chapter can never be drawn
        if let Some(ch) = table.chapter_of_root(code.root) {
            by_chapter.entry(ch.id).or_default().push(code);
        }
    }
    let support: Vec<(u32, f64)> = hist
        .weights
        .iter()
        .filter(|(_, &w)| w > 0.0)
        .map(|(&id, &w)| (id, w))
        .collect();
    for &(id, _) in &support {
        if !by_chapter.contains_key(&id) {
            return Err(Icd9Error::EmptyChapter(id));
        }
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let chapter_dist = WeightedIndex::new(support.iter().map(|&(_, w)| w)).map_err(|_| Icd9Error::AllZero)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let chapter = support[chapter_dist.sample(&mut rng)].0;
        let pool = &by_chapter[&chapter];
        out.push(pool[rng.random_range(0..pool.len())].clone());
    }
    Ok(out)
}
