//! Source-dataset ingestion: local paths or HTTP(S) URLs, with downloads
//! cached by content hash.

use std::fs;
use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::InstructionExample;

/// One row of an alpaca-style source file. `question`/`answer` aliases
/// cover general-knowledge style dumps.
#[derive(Debug, Deserialize)]
struct SourceRow {
    #[serde(alias = "question", alias = "Question")]
    instruction: String,
    #[serde(default)]
    input: String,
    #[serde(alias = "answer", alias = "Answer", alias = "response")]
    output: String,
}

/// Ingest a source dataset from a local path or an HTTP(S) URL. Ids are
/// assigned as `<source>/<ordinal>` at ingestion, stable across reruns of
/// the same input.
pub fn ingest_source(
    source_name: &str,
    location: &str,
    cache_dir: Option<&Path>,
) -> Result<Vec<InstructionExample>> {
    let text = if location.starts_with("http://") || location.starts_with("https://") {
        fetch_cached(location, cache_dir)?
    } else {
        fs::read_to_string(location).map_err(|e| Error::io(location, e))?
    };
    parse_source_text(source_name, &text, Path::new(location))
}

/// Parse source text in either supported shape: a JSON array of
/// alpaca-style rows, or line-delimited JSON objects.
pub fn parse_source_text(
    source_name: &str,
    text: &str,
    origin: &Path,
) -> Result<Vec<InstructionExample>> {
    let trimmed = text.trim_start();
    let rows: Vec<SourceRow> = if trimmed.starts_with('[') {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?
    } else {
        let mut rows = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row: SourceRow = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            rows.push(row);
        }
        rows
    };

    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(i, row)| InstructionExample {
            id: format!("{source_name}/{i}"),
            instruction: row.instruction,
            input: row.input,
            answer: row.output,
            source: source_name.to_string(),
        })
        .collect())
}

fn fetch_cached(url: &str, cache_dir: Option<&Path>) -> Result<String> {
    let cache_dir = cache_dir.ok_or_else(|| {
        Error::Config(format!("no cache directory configured for download of {url}"))
    })?;
    fs::create_dir_all(cache_dir).map_err(|e| Error::io(cache_dir, e))?;

    let key = {
        let digest = Sha256::digest(url.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect::<String>()
    };
    let cached = cache_dir.join(key);
    if cached.exists() {
        return fs::read_to_string(&cached).map_err(|e| Error::io(&cached, e));
    }

    let mut response = ureq::get(url).call().map_err(|e| Error::Request {
        request_id: url.to_string(),
        message: format!("download failed: {e}"),
    })?;
    let body = response
        .body_mut()
        .with_config()
        .limit(512 * 1024 * 1024)
        .read_to_string()
        .map_err(|e| Error::Request {
            request_id: url.to_string(),
            message: format!("download body read failed: {e}"),
        })?;

    let tmp = cached.with_extension("tmp");
    fs::write(&tmp, &body).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, &cached).map_err(|e| Error::io(&cached, e))?;
    Ok(body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_alpaca_array() {
        let text = r#"[
            {"instruction": "Say hi", "input": "", "output": "Hello."},
            {"instruction": "Count", "input": "to 3", "output": "1 2 3"}
        ]"#;
        let rows = parse_source_text("alpha", text, Path::new("mem")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].id, "alpha/0");
        assert_eq!(rows[1].input, "to 3");
        assert_eq!(rows[1].source, "alpha");
    }

    #[test]
    fn parses_question_answer_alias() {
        let text = r#"[{"Question": "Why?", "Answer": "Because."}]"#;
        let rows = parse_source_text("gk", text, Path::new("mem")).unwrap();
        assert_eq!(rows[0].instruction, "Why?");
        assert_eq!(rows[0].answer, "Because.");
    }

    #[test]
    fn parses_jsonl() {
        let text = "{\"instruction\":\"A\",\"output\":\"B\"}\n{\"instruction\":\"C\",\"output\":\"D\"}\n";
        let rows = parse_source_text("s", text, Path::new("mem")).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1].answer, "D");
    }

    #[test]
    fn malformed_jsonl_reports_line() {
        let text = "{\"instruction\":\"A\",\"output\":\"B\"}\nnot json\n";
        match parse_source_text("s", text, Path::new("mem")) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
