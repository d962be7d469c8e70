//! Synthetic patient-portal message generation and corpus evaluation.
//!
//! The pipeline samples ICD-9 codes by chapter ([`icd9`]), turns code
//! descriptions into message prompts ([`stage1`]), generates messages from
//! those prompts either zero-shot or grounded on a small exemplar pack
//! ([`stage2`]), and compares the resulting corpora with a reference corpus
//! ([`metrics`]) and through blind human ranking ([`annotation`]).

pub mod annotation;
pub mod corpus;
pub mod fixtures;
pub mod hash;
pub mod icd9;
pub mod llm;
pub mod metrics;
pub mod stage1;
pub mod stage2;
