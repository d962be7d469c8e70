use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use portal_synth::icd9::{parse_icd9_db, sample_codes, ChapterHistogram, ChapterTable};

use super::Outcome;
use crate::provenance::Provenance;

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// ICD-9 database (TSV: code, description)
    #[arg(long)]
    pub db: PathBuf,
    /// Chapter table (JSON Lines); defaults to the standard chapters
    #[arg(long)]
    pub chapters: Option<PathBuf>,
    /// Chapter histogram (JSON object: chapter id → weight); defaults to uniform
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: SampleArgs) -> Result<Outcome> {
    let mut prov = Provenance::new("sample", args.seed);
    prov.input("db", &args.db)?;
    let db = parse_icd9_db(&args.db)?;
    let table = match &args.chapters {
        Some(path) => {
            prov.input("chapters", path)?;
            ChapterTable::load(path)?
        }
        None => ChapterTable::standard(),
    };
    let hist = match &args.histogram {
        Some(path) => {
            prov.input("histogram", path)?;
            ChapterHistogram::load(path)?
        }
        None => ChapterHistogram::uniform(&table),
    };
    prov.param("n", args.n);
    prov.param("histogram", hist.weights());

    let codes = sample_codes(&db, &table, &hist, args.n, args.seed)?;
    // the database parser skips '#' lines, so the header keeps the file loadable
    let mut text = format!("# provenance: {}\n", serde_json::to_string(&prov.to_value())?);
    for c in &codes {
        writeln!(text, "{}\t{}", c.code(), c.description()).expect("writing to a String");
    }
    std::fs::write(&args.out, text).with_context(|| format!("writing {}", args.out.display()))?;
    eprintln!("sampled {} codes → {}", codes.len(), args.out.display());
    Ok(Outcome::Success)
}
