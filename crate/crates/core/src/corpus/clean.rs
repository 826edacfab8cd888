//! Pattern-based text cleaning.
//!
//! The rule kinds form a closed set; which kinds are active and whether a
//! match strips the span or rejects the whole record comes from a committed,
//! versioned rule file.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What a cleaning rule matches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleKind {
    NonEnglishChars,
    NonEnglishWords,
    Emoji,
    Code,
    Url,
    Equation,
    ImageRequest,
}

/// What happens on a match.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleAction {
    Strip,
    RejectRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleaningRule {
    pub kind: RuleKind,
    pub action: RuleAction,
}

/// An ordered set of cleaning rules; each kind appears at most once.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSet {
    pub version: u32,
    pub rules: Vec<CleaningRule>,
}

impl RuleSet {
    pub fn new(rules: Vec<CleaningRule>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for rule in &rules {
            if !seen.insert(rule.kind) {
                return Err(Error::InvalidInput(format!(
                    "cleaning rule kind declared twice: {:?}",
                    rule.kind
                )));
            }
        }
        Ok(RuleSet { version: 1, rules })
    }

    pub fn empty() -> Self {
        RuleSet {
            version: 1,
            rules: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: RuleSet = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Self::new(set.rules).map(|mut validated| {
            validated.version = set.version;
            validated
        })
    }
}

/// Result of cleaning one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CleanOutcome {
    Cleaned(String),
    Rejected(RuleKind),
}

impl CleanOutcome {
    pub fn cleaned(self) -> Option<String> {
        match self {
            CleanOutcome::Cleaned(text) => Some(text),
            CleanOutcome::Rejected(_) => None,
        }
    }
}

/// Apply rules in declared order. Strip rules remove matched spans and
/// collapse whitespace; reject rules mark the record dropped. Rejection is a
/// result, not an error.
pub fn clean_text(text: &str, rules: &RuleSet) -> CleanOutcome {
    let mut current = text.to_string();
    for rule in &rules.rules {
        let spans = match_spans(rule.kind, &current);
        if spans.is_empty() {
            continue;
        }
        match rule.action {
            RuleAction::RejectRecord => return CleanOutcome::Rejected(rule.kind),
            RuleAction::Strip => {
                current = strip_spans(&current, &spans);
            }
        }
    }
    CleanOutcome::Cleaned(current)
}

fn strip_spans(text: &str, spans: &[(usize, usize)]) -> String {
    let mut kept = String::with_capacity(text.len());
    let mut cursor = 0;
    for &(start, end) in spans {
        if start > cursor {
            kept.push_str(&text[cursor..start]);
        }
        // A removed span separates its neighbours.
        kept.push(' ');
        cursor = cursor.max(end);
    }
    kept.push_str(&text[cursor..]);
    kept.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Byte spans matched by a rule kind, in ascending, non-overlapping order.
fn match_spans(kind: RuleKind, text: &str) -> Vec<(usize, usize)> {
    match kind {
        RuleKind::NonEnglishChars => char_class_spans(text, |c| !c.is_ascii() && !is_emoji(c)),
        RuleKind::NonEnglishWords => non_english_word_spans(text),
        RuleKind::Emoji => char_class_spans(text, is_emoji),
        RuleKind::Code => code_spans(text),
        RuleKind::Url => url_spans(text),
        RuleKind::Equation => equation_spans(text),
        RuleKind::ImageRequest => phrase_spans(text, IMAGE_REQUEST_PHRASES),
    }
}

fn char_class_spans(text: &str, class: impl Fn(char) -> bool) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> = Vec::new();
    for (offset, c) in text.char_indices() {
        if class(c) {
            let end = offset + c.len_utf8();
            match spans.last_mut() {
                Some(last) if last.1 == offset => last.1 = end,
                _ => spans.push((offset, end)),
            }
        }
    }
    spans
}

fn is_emoji(c: char) -> bool {
    matches!(u32::from(c),
        0x1F000..=0x1FAFF  // pictographs, emoticons, symbols
        | 0x2600..=0x27BF  // miscellaneous symbols, dingbats
        | 0x2190..=0x21FF  // arrows commonly used as emoji
        | 0xFE0E..=0xFE0F  // variation selectors
        | 0x200D           // zero-width joiner
    )
}

/// Words that contain any non-ASCII alphabetic character.
fn non_english_word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut word_start: Option<usize> = None;
    let mut word_has_foreign = false;
    for (offset, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(start) = word_start.take() {
                if word_has_foreign {
                    spans.push((start, offset));
                }
            }
            word_has_foreign = false;
        } else {
            if word_start.is_none() {
                word_start = Some(offset);
            }
            if c.is_alphabetic() && !c.is_ascii_alphabetic() {
                word_has_foreign = true;
            }
        }
    }
    if let Some(start) = word_start {
        if word_has_foreign {
            spans.push((start, text.len()));
        }
    }
    spans
}

const CODE_MARKERS: &[&str] = &[
    "```",
    "#include",
    "def ",
    "fn main(",
    "function(",
    "function (",
    "console.log",
    "SELECT ",
    "select * from",
    "<html",
    "<div",
    "print(",
    "import java",
    "public static void",
    "});",
];

/// Code detection rejects or strips from the first marker to the end of the
/// fenced block when fenced, else just the marker's line.
fn code_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    // fenced blocks first
    let mut search = 0;
    while let Some(open) = text[search..].find("```") {
        let start = search + open;
        let after = start + 3;
        match text[after..].find("```") {
            Some(close) => {
                let end = after + close + 3;
                spans.push((start, end));
                search = end;
            }
            None => {
                spans.push((start, text.len()));
                break;
            }
        }
    }
    for marker in CODE_MARKERS.iter().skip(1) {
        let mut from = 0;
        while let Some(found) = text[from..].find(marker) {
            let start = from + found;
            let line_start = text[..start].rfind('\n').map(|i| i + 1).unwrap_or(0);
            let line_end = text[start..]
                .find('\n')
                .map(|i| start + i)
                .unwrap_or(text.len());
            spans.push((line_start, line_end));
            from = line_end;
        }
    }
    normalize_spans(spans)
}

fn url_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    for prefix in ["http://", "https://", "www."] {
        let mut from = 0;
        while let Some(found) = text[from..].find(prefix) {
            let start = from + found;
            let end = text[start..]
                .find(char::is_whitespace)
                .map(|i| start + i)
                .unwrap_or(text.len());
            spans.push((start, end));
            from = end;
        }
    }
    normalize_spans(spans)
}

const EQUATION_MARKERS: &[&str] = &["\\frac", "\\sum", "\\int", "\\sqrt", "\\begin{equation}"];

fn equation_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    // $...$ inline math
    let mut from = 0;
    while let Some(open) = text[from..].find('$') {
        let start = from + open;
        match text[start + 1..].find('$') {
            Some(close) => {
                let end = start + 1 + close + 1;
                spans.push((start, end));
                from = end;
            }
            None => break,
        }
    }
    for marker in EQUATION_MARKERS {
        let mut search = 0;
        while let Some(found) = text[search..].find(marker) {
            let start = search + found;
            let end = text[start..]
                .find(char::is_whitespace)
                .map(|i| start + i)
                .unwrap_or(text.len());
            spans.push((start, end));
            search = end;
        }
    }
    normalize_spans(spans)
}

const IMAGE_REQUEST_PHRASES: &[&str] = &[
    "generate an image",
    "generate image",
    "create an image",
    "draw a picture",
    "draw an image",
    "describe the image",
    "summarize the image",
    "image shown below",
];

fn phrase_spans(text: &str, phrases: &[&str]) -> Vec<(usize, usize)> {
    let lower = text.to_lowercase();
    let mut spans = Vec::new();
    for phrase in phrases {
        let mut from = 0;
        while let Some(found) = lower[from..].find(phrase) {
            let start = from + found;
            // byte offsets of the lowercased text can drift from the
            // original on multi-byte case changes; clamp to char boundaries
            let start = floor_char_boundary(text, start);
            let end = floor_char_boundary(text, start + phrase.len());
            spans.push((start, end.min(text.len())));
            from = found + from + phrase.len();
        }
    }
    normalize_spans(spans)
}

fn floor_char_boundary(text: &str, mut index: usize) -> usize {
    index = index.min(text.len());
    while index > 0 && !text.is_char_boundary(index) {
        index -= 1;
    }
    index
}

fn normalize_spans(mut spans: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    spans.sort_unstable();
    let mut merged: Vec<(usize, usize)> = Vec::with_capacity(spans.len());
    for (start, end) in spans {
        match merged.last_mut() {
            Some(last) if start <= last.1 => last.1 = last.1.max(end),
            _ => merged.push((start, end)),
        }
    }
    merged
}
