//! Shared test support: fixture paths and an independent reference BPE
//! encoder used as the oracle for the production encoder.
#![allow(dead_code)] // each test binary uses a different subset

use std::path::PathBuf;

use fliplab_core::corpus::{read_dataset, Dataset, InstructionExample};
use fliplab_core::tokscan::{BpeVocab, SpaceMarker, SPACE_MARKER_CHAR};

pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

pub fn load_test_set() -> Dataset {
    read_dataset(&fixtures_dir(), "test_set").expect("fixture test set loads")
}

pub fn test_set_examples() -> Vec<InstructionExample> {
    load_test_set()
        .records
        .iter()
        .map(InstructionExample::from_record)
        .collect()
}

/// Reference BPE encoder, deliberately written as a different procedure
/// from the production one: it enumerates every (rank, position) candidate
/// by scanning the merge list itself, sorts the candidates, and applies the
/// first. Slow and obvious, which is the point.
pub fn reference_encode(vocab: &BpeVocab, merges: &[(String, String)], text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for pretoken in reference_pretokenize(text, vocab.marker) {
        let mut symbols: Vec<String> = pretoken.chars().map(String::from).collect();
        loop {
            let mut candidates: Vec<(usize, usize)> = Vec::new();
            for position in 0..symbols.len().saturating_sub(1) {
                for (rank, (left, right)) in merges.iter().enumerate() {
                    if &symbols[position] == left && &symbols[position + 1] == right {
                        candidates.push((rank, position));
                    }
                }
            }
            candidates.sort_unstable();
            match candidates.first() {
                Some(&(_, position)) => {
                    let merged = format!("{}{}", symbols[position], symbols[position + 1]);
                    symbols.splice(position..position + 2, [merged]);
                }
                None => break,
            }
        }
        out.extend(symbols);
    }
    out
}

fn reference_pretokenize(text: &str, marker: SpaceMarker) -> Vec<String> {
    let mut pretokens = Vec::new();
    for (i, word) in text.split_whitespace().enumerate() {
        if i > 0 && marker == SpaceMarker::Prefix {
            pretokens.push(format!("{SPACE_MARKER_CHAR}{word}"));
        } else {
            pretokens.push(word.to_string());
        }
    }
    pretokens
}

/// Parse the merges file the same way a reader would, for feeding the
/// reference encoder.
pub fn read_merge_pairs(path: &std::path::Path) -> Vec<(String, String)> {
    std::fs::read_to_string(path)
        .expect("merges file readable")
        .lines()
        .filter(|line| !line.trim().is_empty() && !line.starts_with("#version"))
        .map(|line| {
            let mut parts = line.trim_end().split(' ');
            (
                parts.next().expect("left symbol").to_string(),
                parts.next().expect("right symbol").to_string(),
            )
        })
        .collect()
}
