//! Self-contained BPE encoder and tokenization-divergence reporter.
//!
//! Loads the two-file vocabulary/merges format common to published BPE
//! releases and encodes with the classic greedy loop: at every step the
//! lowest-ranked adjacent pair present in the symbol sequence is merged,
//! leftmost occurrence first. Correctness over speed.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::noise::{flip_char, flip_word};
use crate::par::par_map;

/// Marker convention for pre-token leading spaces; published vocabularies
/// differ, so it is selectable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceMarker {
    /// A space before a word becomes a `Ġ` symbol at the start of its
    /// pre-token (the common published convention).
    Prefix,
    /// Whitespace only delimits; no marker symbol.
    None,
}

pub const SPACE_MARKER_CHAR: char = '\u{0120}'; // Ġ

/// A loaded vocabulary: ranked merges plus the token-string → id map.
#[derive(Debug, Clone)]
pub struct BpeVocab {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
    vocab: HashMap<String, u32>,
    pub byte_fallback: bool,
    pub marker: SpaceMarker,
}

impl BpeVocab {
    pub fn merge_count(&self) -> usize {
        self.merges.len()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn rank_of(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks.get(&(left.to_string(), right.to_string())).copied()
    }

    pub fn token_id(&self, token: &str) -> Option<u32> {
        self.vocab.get(token).copied()
    }

    pub fn with_marker(mut self, marker: SpaceMarker) -> Self {
        self.marker = marker;
        self
    }

    pub fn with_byte_fallback(mut self, enabled: bool) -> Self {
        self.byte_fallback = enabled;
        self
    }

    /// Truncate to the first `n` merges, for monotonicity checks.
    pub fn truncated(&self, n: usize) -> BpeVocab {
        let merges: Vec<(String, String)> = self.merges.iter().take(n).cloned().collect();
        let ranks = merges
            .iter()
            .enumerate()
            .map(|(rank, pair)| (pair.clone(), rank))
            .collect();
        BpeVocab {
            merges,
            ranks,
            vocab: self.vocab.clone(),
            byte_fallback: self.byte_fallback,
            marker: self.marker,
        }
    }
}

/// Load vocabulary and merges files. The vocab file is a JSON object of
/// token → id; the merges file is one `left right` pair per line, rank by
/// line order, with an optional `#version` header.
pub fn load_bpe(vocab_path: &Path, merges_path: &Path) -> Result<BpeVocab> {
    let vocab_text = fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
    let raw: HashMap<String, u32> =
        serde_json::from_str(&vocab_text).map_err(|e| Error::BpeLoad {
            path: vocab_path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
    let mut seen_ids = HashMap::new();
    for (token, id) in &raw {
        if let Some(previous) = seen_ids.insert(*id, token.clone()) {
            return Err(Error::BpeLoad {
                path: vocab_path.to_path_buf(),
                line: 0,
                message: format!("duplicate id {id} for {previous:?} and {token:?}"),
            });
        }
    }

    let merges_text = fs::read_to_string(merges_path).map_err(|e| Error::io(merges_path, e))?;
    let mut merges = Vec::new();
    let mut ranks: HashMap<(String, String), usize> = HashMap::new();
    for (idx, line) in merges_text.lines().enumerate() {
        let line_no = idx + 1;
        let trimmed = line.trim_end();
        if trimmed.is_empty() || (line_no == 1 && trimmed.starts_with("#version")) {
            continue;
        }
        let mut parts = trimmed.split(' ');
        let (left, right) = match (parts.next(), parts.next(), parts.next()) {
            (Some(left), Some(right), None) if !left.is_empty() && !right.is_empty() => {
                (left.to_string(), right.to_string())
            }
            _ => {
                return Err(Error::BpeLoad {
                    path: merges_path.to_path_buf(),
                    line: line_no,
                    message: format!("expected 'left right', got {trimmed:?}"),
                })
            }
        };
        let pair = (left.clone(), right.clone());
        if ranks.contains_key(&pair) {
            return Err(Error::BpeLoad {
                path: merges_path.to_path_buf(),
                line: line_no,
                message: format!("duplicate merge {left} {right}"),
            });
        }
        if !raw.is_empty() {
            let merged = format!("{left}{right}");
            if !raw.contains_key(&merged) {
                return Err(Error::BpeLoad {
                    path: merges_path.to_path_buf(),
                    line: line_no,
                    message: format!("merge result {merged:?} not in vocabulary"),
                });
            }
        }
        ranks.insert(pair.clone(), merges.len());
        merges.push(pair);
    }

    Ok(BpeVocab {
        merges,
        ranks,
        vocab: raw,
        byte_fallback: false,
        marker: SpaceMarker::Prefix,
    })
}

/// Split text into pre-tokens per the marker convention.
pub fn pretokenize(text: &str, marker: SpaceMarker) -> Vec<String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    words
        .iter()
        .enumerate()
        .map(|(i, word)| match marker {
            SpaceMarker::Prefix if i > 0 => format!("{SPACE_MARKER_CHAR}{word}"),
            _ => (*word).to_string(),
        })
        .collect()
}

/// Greedy lowest-rank-first pair merging per pre-token.
pub fn bpe_encode(vocab: &BpeVocab, text: &str) -> Result<Vec<String>> {
    let mut tokens = Vec::new();
    for pretoken in pretokenize(text, vocab.marker) {
        encode_pretoken(vocab, &pretoken, &mut tokens)?;
    }
    Ok(tokens)
}

fn encode_pretoken(vocab: &BpeVocab, pretoken: &str, out: &mut Vec<String>) -> Result<()> {
    let mut symbols: Vec<String> = pretoken.chars().map(String::from).collect();

    loop {
        let mut best: Option<(usize, usize)> = None; // (rank, position)
        for i in 0..symbols.len().saturating_sub(1) {
            let pair = (symbols[i].clone(), symbols[i + 1].clone());
            if let Some(&rank) = vocab.ranks.get(&pair) {
                if best.map(|(r, _)| rank < r).unwrap_or(true) {
                    best = Some((rank, i));
                }
            }
        }
        match best {
            Some((_, position)) => {
                let merged = format!("{}{}", symbols[position], symbols[position + 1]);
                symbols[position] = merged;
                symbols.remove(position + 1);
            }
            None => break,
        }
    }

    for symbol in symbols {
        if vocab.vocab.is_empty() || vocab.vocab.contains_key(&symbol) {
            out.push(symbol);
            continue;
        }
        if !vocab.byte_fallback {
            return Err(Error::BpeEncode(format!(
                "symbol {symbol:?} not representable in the vocabulary"
            )));
        }
        for byte in symbol.as_bytes() {
            let byte_token = format!("<0x{byte:02X}>");
            if !vocab.vocab.contains_key(&byte_token) {
                return Err(Error::BpeEncode(format!(
                    "byte fallback token {byte_token} missing from the vocabulary"
                )));
            }
            out.push(byte_token);
        }
    }
    Ok(())
}

/// Undo the encoding: concatenate token strings and turn markers back into
/// spaces.
pub fn decode_tokens(tokens: &[String], marker: SpaceMarker) -> String {
    let joined: String = tokens.concat();
    match marker {
        SpaceMarker::Prefix => joined.replace(SPACE_MARKER_CHAR, " "),
        SpaceMarker::None => joined,
    }
}

/// Token counts and overlap-vs-original for the three variants of one text.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub text: String,
    pub original_tokens: Vec<String>,
    pub word_flip_tokens: Vec<String>,
    pub char_flip_tokens: Vec<String>,
    pub original_count: usize,
    pub word_flip_count: usize,
    pub char_flip_count: usize,
    /// Multiset Jaccard overlap between the word-flip and original tokens.
    pub word_flip_overlap: f64,
    /// Multiset Jaccard overlap between the char-flip and original tokens.
    pub char_flip_overlap: f64,
}

fn multiset_jaccard(a: &[String], b: &[String]) -> f64 {
    if a.is_empty() && b.is_empty() {
        // Convention: two empty encodings overlap fully.
        return 1.0;
    }
    let mut counts_a: HashMap<&String, usize> = HashMap::new();
    for token in a {
        *counts_a.entry(token).or_insert(0) += 1;
    }
    let mut counts_b: HashMap<&String, usize> = HashMap::new();
    for token in b {
        *counts_b.entry(token).or_insert(0) += 1;
    }
    let mut intersection = 0usize;
    let mut union = 0usize;
    let keys: std::collections::HashSet<&&String> =
        counts_a.keys().chain(counts_b.keys()).collect();
    for key in keys {
        let in_a = counts_a.get(*key).copied().unwrap_or(0);
        let in_b = counts_b.get(*key).copied().unwrap_or(0);
        intersection += in_a.min(in_b);
        union += in_a.max(in_b);
    }
    intersection as f64 / union as f64
}

/// Encode a text, its word flip, and its char flip, and report counts plus
/// token-multiset overlap against the original.
pub fn compare_tokenizations(vocab: &BpeVocab, text: &str) -> Result<DivergenceReport> {
    let variants = [
        text.to_string(),
        flip_word(text),
        flip_char(text),
    ];
    let encoded = par_map(&variants, |t| bpe_encode(vocab, t));
    let mut encoded = encoded.into_iter();
    let original = encoded.next().unwrap()?;
    let word_flip = encoded.next().unwrap()?;
    let char_flip = encoded.next().unwrap()?;

    Ok(DivergenceReport {
        text: text.to_string(),
        original_count: original.len(),
        word_flip_count: word_flip.len(),
        char_flip_count: char_flip.len(),
        word_flip_overlap: multiset_jaccard(&word_flip, &original),
        char_flip_overlap: multiset_jaccard(&char_flip, &original),
        original_tokens: original,
        word_flip_tokens: word_flip,
        char_flip_tokens: char_flip,
    })
}

/// Plot-ready TSV row for a divergence report.
pub fn divergence_tsv_row(report: &DivergenceReport) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
        report.text.replace(['\t', '\n'], " "),
        report.original_count,
        report.word_flip_count,
        report.char_flip_count,
        report.word_flip_overlap,
        report.char_flip_overlap
    )
}

pub const DIVERGENCE_TSV_HEADER: &str =
    "text\toriginal_tokens\tword_flip_tokens\tchar_flip_tokens\tword_flip_overlap\tchar_flip_overlap";
