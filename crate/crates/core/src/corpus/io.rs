//! Dataset serialization: line-delimited records plus a sidecar manifest.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::noise::NoiseKind;

use super::{Dataset, DatasetManifest, Record};

pub fn dataset_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.jsonl"))
}

pub fn manifest_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.manifest"))
}

/// Write `<name>.jsonl` and `<name>.manifest` under `dir`. Files go through
/// a temp-then-rename so a crash never leaves a half-written dataset beside
/// a stale manifest.
pub fn write_dataset(dataset: &Dataset, dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut body = String::new();
    for record in &dataset.records {
        body.push_str(&serde_json::to_string(record).expect("record serializes"));
        body.push('\n');
    }
    let data_path = dataset_path(dir, &dataset.name);
    write_atomic(&data_path, body.as_bytes())?;

    let manifest = dataset.manifest();
    let manifest_text = render_manifest(&manifest);
    let manifest_file = manifest_path(dir, &dataset.name);
    write_atomic(&manifest_file, manifest_text.as_bytes())?;
    Ok(manifest)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Read a dataset back and verify the manifest: record count and content
/// hash must both recompute identically.
pub fn read_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let manifest = read_manifest(&manifest_path(dir, name))?;
    let data_path = dataset_path(dir, name);
    let text = fs::read_to_string(&data_path).map_err(|e| Error::io(&data_path, e))?;

    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: data_path.clone(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }

    let mut dataset = Dataset::new(manifest.name.clone(), manifest.noise_kind, records)
        .with_parents(manifest.parents.clone());
    dataset.seed = manifest.seed;

    if dataset.records.len() != manifest.record_count {
        return Err(Error::Integrity {
            name: name.to_string(),
            message: format!(
                "manifest says {} records, file holds {}",
                manifest.record_count,
                dataset.records.len()
            ),
        });
    }
    let recomputed = dataset.content_hash();
    if recomputed != manifest.content_hash {
        return Err(Error::Integrity {
            name: name.to_string(),
            message: format!(
                "content hash mismatch: manifest {}, file {}",
                manifest.content_hash, recomputed
            ),
        });
    }
    Ok(dataset)
}

/// Manifest text: one key per line, `key = value`.
pub fn render_manifest(manifest: &DatasetManifest) -> String {
    let mut out = String::new();
    out.push_str(&format!("name = {}\n", manifest.name));
    out.push_str(&format!("record_count = {}\n", manifest.record_count));
    out.push_str(&format!("noise_kind = {}\n", manifest.noise_kind));
    out.push_str(&format!("content_hash = {}\n", manifest.content_hash));
    out.push_str(&format!("parents = {}\n", manifest.parents.join(",")));
    if let Some(seed) = manifest.seed {
        out.push_str(&format!("seed = {seed}\n"));
    }
    out
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut name = None;
    let mut record_count = None;
    let mut noise_kind = None;
    let mut content_hash = None;
    let mut parents = Vec::new();
    let mut seed = None;

    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: idx + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| parse_err("expected key = value".to_string()))?;
        match key {
            "name" => name = Some(value.to_string()),
            "record_count" => {
                record_count =
                    Some(value.parse::<usize>().map_err(|e| parse_err(e.to_string()))?)
            }
            "noise_kind" => noise_kind = Some(value.parse::<NoiseKind>()?),
            "content_hash" => content_hash = Some(value.to_string()),
            "parents" => {
                parents = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "seed" => seed = Some(value.parse::<u64>().map_err(|e| parse_err(e.to_string()))?),
            other => return Err(parse_err(format!("unknown manifest key: {other}"))),
        }
    }

    let missing = |field: &str| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: format!("manifest missing field: {field}"),
    };
    Ok(DatasetManifest {
        name: name.ok_or_else(|| missing("name"))?,
        record_count: record_count.ok_or_else(|| missing("record_count"))?,
        noise_kind: noise_kind.ok_or_else(|| missing("noise_kind"))?,
        content_hash: content_hash.ok_or_else(|| missing("content_hash"))?,
        parents,
        seed,
    })
}
