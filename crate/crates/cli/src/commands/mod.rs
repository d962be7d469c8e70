pub mod annotate;
pub mod eval;
pub mod sample;
pub mod stage1;
pub mod stage2;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use portal_synth::corpus::{load_corpus, Corpus};

use crate::provenance::Provenance;

pub enum Outcome {
    Success,
    Partial { failed: usize },
}

/// Parses `name=path`.
pub fn parse_named(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.trim().is_empty() && !path.is_empty() => {
            Ok((name.trim().to_string(), PathBuf::from(path)))
        }
        _ => Err(format!("expected name=path, got {s:?}")),
    }
}

/// Loads each `name=path` corpus under its given name.
pub fn load_named_corpora(systems: &[(String, PathBuf)], prov: &mut Provenance) -> Result<Vec<Corpus>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(systems.len());
    for (name, path) in systems {
        if !seen.insert(name.as_str()) {
            bail!("system {name:?} given twice");
        }
        prov.input(format!("system:{name}"), path)?;
        let corpus = load_corpus(path)?;
        out.push(Corpus::new(name.clone(), corpus.messages().to_vec())?);
    }
    Ok(out)
}

pub fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "corpus".to_string())
}
