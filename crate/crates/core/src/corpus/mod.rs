//! Canonical record model, text cleaning, cross-dataset deduplication, and
//! dataset serialization with manifests.
//!
//! A dataset on disk is a line-delimited file of [`Record`]s plus a sidecar
//! `<name>.manifest` carrying the [`DatasetManifest`]. Records canonicalize
//! to a content hash over `(instruction, input, output)` after whitespace
//! normalization; ids and source names never influence the hash.

mod clean;
mod fetch;
mod io;

pub use clean::{clean_text, CleanOutcome, CleaningRule, RuleAction, RuleKind, RuleSet};
pub use fetch::{ingest_source, parse_source_text};
pub use io::{dataset_path, manifest_path, read_dataset, read_manifest, write_dataset};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::NoiseKind;

/// Role of a record within an augmented dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Plain,
    Positive,
    Negative,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Role::Plain => "plain",
            Role::Positive => "positive",
            Role::Negative => "negative",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Role {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "plain" => Ok(Role::Plain),
            "positive" => Ok(Role::Positive),
            "negative" => Ok(Role::Negative),
            other => Err(Error::InvalidInput(format!("unknown role: {other}"))),
        }
    }
}

/// One on-disk dataset record. Field order here is the serialized field
/// order; absent optional fields stay as empty strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub id: String,
    pub instruction: String,
    pub input: String,
    pub output: String,
    pub role: Role,
    pub noise: NoiseKind,
    pub source_id: String,
    pub source: String,
}

impl Record {
    /// Compose the query text a model is asked: instruction, then the input
    /// block when present.
    pub fn query(&self) -> String {
        if self.input.is_empty() {
            self.instruction.clone()
        } else {
            format!("{}\n{}", self.instruction, self.input)
        }
    }
}

/// One (instruction, input, answer) example as ingested from a source
/// dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionExample {
    pub id: String,
    pub instruction: String,
    pub input: String,
    pub answer: String,
    pub source: String,
}

impl InstructionExample {
    pub fn validate(&self) -> Result<()> {
        if self.instruction.is_empty() {
            return Err(Error::InvalidInput(format!(
                "example {}: empty instruction",
                self.id
            )));
        }
        if self.answer.is_empty() {
            return Err(Error::InvalidInput(format!(
                "example {}: empty answer",
                self.id
            )));
        }
        Ok(())
    }

    pub fn to_record(&self) -> Record {
        Record {
            id: self.id.clone(),
            instruction: self.instruction.clone(),
            input: self.input.clone(),
            output: self.answer.clone(),
            role: Role::Plain,
            noise: NoiseKind::None,
            source_id: String::new(),
            source: self.source.clone(),
        }
    }

    pub fn from_record(record: &Record) -> Self {
        InstructionExample {
            id: record.id.clone(),
            instruction: record.instruction.clone(),
            input: record.input.clone(),
            answer: record.output.clone(),
            source: record.source.clone(),
        }
    }
}

/// An in-memory dataset: named records plus the provenance fields that go
/// into its manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub noise_kind: NoiseKind,
    pub records: Vec<Record>,
    pub parents: Vec<String>,
    pub seed: Option<u64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, noise_kind: NoiseKind, records: Vec<Record>) -> Self {
        Dataset {
            name: name.into(),
            noise_kind,
            records,
            parents: Vec::new(),
            seed: None,
        }
    }

    pub fn with_parents(mut self, parents: Vec<String>) -> Self {
        self.parents = parents;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Content hash over the canonical serialization of the records.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for record in &self.records {
            let line = serde_json::to_string(record).expect("record serializes");
            hasher.update(line.as_bytes());
            hasher.update(b"\n");
        }
        hex(&hasher.finalize())
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            name: self.name.clone(),
            record_count: self.records.len(),
            noise_kind: self.noise_kind,
            content_hash: self.content_hash(),
            parents: self.parents.clone(),
            seed: self.seed,
        }
    }
}

/// Sidecar metadata for a dataset file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    pub record_count: usize,
    pub noise_kind: NoiseKind,
    pub content_hash: String,
    pub parents: Vec<String>,
    pub seed: Option<u64>,
}

fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Collapse every whitespace run to a single space and trim the ends.
pub fn normalize_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Hex digest over the trimmed, whitespace-normalized
/// `(instruction, input, answer)` triple. Equal content yields equal digests
/// regardless of id or source.
pub fn canonical_hash(example: &InstructionExample) -> String {
    canonical_hash_fields(&example.instruction, &example.input, &example.answer)
}

/// [`canonical_hash`] applied to a record's `(instruction, input, output)`.
pub fn canonical_hash_record(record: &Record) -> String {
    canonical_hash_fields(&record.instruction, &record.input, &record.output)
}

fn canonical_hash_fields(instruction: &str, input: &str, answer: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(normalize_whitespace(instruction).as_bytes());
    hasher.update([0x1f]);
    hasher.update(normalize_whitespace(input).as_bytes());
    hasher.update([0x1f]);
    hasher.update(normalize_whitespace(answer).as_bytes());
    hex(&hasher.finalize())
}

/// Remove every record whose canonical hash appears in any reference set or
/// earlier in the same dataset. Survivor order matches input order.
pub fn dedup(dataset: &Dataset, reference_sets: &[&Dataset]) -> (Dataset, usize) {
    let mut seen: HashSet<String> = HashSet::new();
    for reference in reference_sets {
        for record in &reference.records {
            seen.insert(canonical_hash_record(record));
        }
    }

    let mut survivors = Vec::with_capacity(dataset.records.len());
    for record in &dataset.records {
        let digest = canonical_hash_record(record);
        if seen.insert(digest) {
            survivors.push(record.clone());
        }
    }

    let removed = dataset.records.len() - survivors.len();
    let mut out = dataset.clone();
    out.records = survivors;
    (out, removed)
}

/// Concatenate datasets in argument order under a new name. Record ids are
/// namespaced by their source so the combined ids stay unique; ids already
/// carrying their source prefix are left alone.
pub fn combine(datasets: &[&Dataset], name: &str) -> Result<Dataset> {
    if datasets.is_empty() {
        return Err(Error::InvalidInput(
            "combine requires at least one dataset".to_string(),
        ));
    }

    let mut records = Vec::new();
    for dataset in datasets {
        for record in &dataset.records {
            let mut record = record.clone();
            let prefix = format!("{}/", record.source);
            if !record.source.is_empty() && !record.id.starts_with(&prefix) {
                record.id = format!("{}{}", prefix, record.id);
            }
            records.push(record);
        }
    }

    let mut seen = HashSet::new();
    for record in &records {
        if !seen.insert(record.id.clone()) {
            return Err(Error::InvalidInput(format!(
                "id collision after namespacing: {}",
                record.id
            )));
        }
    }

    let parents = datasets.iter().map(|d| d.name.clone()).collect();
    Ok(Dataset::new(name, NoiseKind::None, records).with_parents(parents))
}

/// Check that the parent graph implied by a set of manifests is acyclic.
pub fn validate_manifest_graph(manifests: &[DatasetManifest]) -> Result<()> {
    use std::collections::HashMap;
    let by_name: HashMap<&str, &DatasetManifest> =
        manifests.iter().map(|m| (m.name.as_str(), m)).collect();

    fn visit<'a>(
        name: &'a str,
        by_name: &HashMap<&'a str, &'a DatasetManifest>,
        visiting: &mut HashSet<&'a str>,
        done: &mut HashSet<&'a str>,
    ) -> Result<()> {
        if done.contains(name) {
            return Ok(());
        }
        if !visiting.insert(name) {
            return Err(Error::Integrity {
                name: name.to_string(),
                message: "manifest parent cycle".to_string(),
            });
        }
        if let Some(manifest) = by_name.get(name) {
            for parent in &manifest.parents {
                visit(parent, by_name, visiting, done)?;
            }
        }
        visiting.remove(name);
        done.insert(name);
        Ok(())
    }

    let mut done = HashSet::new();
    for manifest in manifests {
        let mut visiting = HashSet::new();
        visit(&manifest.name, &by_name, &mut visiting, &mut done)?;
    }
    Ok(())
}
