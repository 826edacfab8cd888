//! `tokscan`: tokenization-divergence reports from a vocab/merges pair.

use std::path::Path;

use anyhow::{anyhow, Context, Result};

use fliplab_core::tokscan::{
    compare_tokenizations, divergence_tsv_row, load_bpe, SpaceMarker, DIVERGENCE_TSV_HEADER,
};

use crate::config::Settings;

use super::print_wrote;

#[allow(clippy::too_many_arguments)]
pub fn cmd_tokscan(
    settings: &Settings,
    vocab_path: &Path,
    merges_path: &Path,
    text: Option<&str>,
    file: Option<&Path>,
    tsv: Option<&Path>,
    marker: &str,
    byte_fallback: bool,
) -> Result<i32> {
    let marker = match marker {
        "prefix" => SpaceMarker::Prefix,
        "none" => SpaceMarker::None,
        other => return Err(anyhow!("marker must be prefix or none, got {other:?}")),
    };
    let vocab = load_bpe(vocab_path, merges_path)?
        .with_marker(marker)
        .with_byte_fallback(byte_fallback);

    let texts: Vec<String> = match (text, file) {
        (Some(text), None) => vec![text.to_string()],
        (None, Some(path)) => std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?
            .lines()
            .filter(|line| !line.trim().is_empty())
            .map(str::to_string)
            .collect(),
        _ => return Err(anyhow!("pass exactly one of --text or --file")),
    };

    let out_dir = settings.tokscan_dir();
    std::fs::create_dir_all(&out_dir)?;
    let mut tsv_lines = vec![DIVERGENCE_TSV_HEADER.to_string()];
    let mut reports = Vec::new();
    for text in &texts {
        let report = compare_tokenizations(&vocab, text)?;
        println!(
            "{:>3} -> word {:>3} (overlap {:.3}) / char {:>3} (overlap {:.3})  {}",
            report.original_count,
            report.word_flip_count,
            report.word_flip_overlap,
            report.char_flip_count,
            report.char_flip_overlap,
            truncate(text, 48),
        );
        tsv_lines.push(divergence_tsv_row(&report));
        reports.push(report);
    }

    let json_path = out_dir.join("divergence.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&reports)?)?;
    print_wrote(&json_path);
    if let Some(tsv_path) = tsv {
        std::fs::write(tsv_path, tsv_lines.join("\n") + "\n")?;
        print_wrote(tsv_path);
    }
    Ok(0)
}

fn truncate(text: &str, limit: usize) -> String {
    if text.chars().count() <= limit {
        text.to_string()
    } else {
        let cut: String = text.chars().take(limit - 1).collect();
        format!("{cut}…")
    }
}
