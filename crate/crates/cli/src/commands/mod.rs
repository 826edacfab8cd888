//! Command implementations and shared plumbing.

pub mod build;
pub mod eval;
pub mod plan;
pub mod probes;
pub mod tokscan;

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use fliplab_core::corpus::{read_dataset, Dataset};
use fliplab_core::eval::{Dictionary, GrammarJudge, SimilarityJudge};
use fliplab_core::inference::{HttpConfig, ModelClient};
use fliplab_core::noise::FlipKind;

use crate::config::Settings;

/// Parse a backend spec: `echo`, `gold-oracle`, `flip-oracle:word`,
/// `flip-oracle:char`, `scripted:<path>`, or `http`.
pub fn client_from_spec(spec: &str, settings: &Settings, transcript_label: &str) -> Result<ModelClient> {
    match spec {
        "echo" => Ok(ModelClient::echo()),
        "gold-oracle" => Ok(ModelClient::gold_oracle()),
        "flip-oracle:word" => Ok(ModelClient::flip_oracle(FlipKind::Word)),
        "flip-oracle:char" => Ok(ModelClient::flip_oracle(FlipKind::Char)),
        "http" => {
            let endpoint = settings
                .endpoint
                .as_ref()
                .ok_or_else(|| anyhow!("backend http requires an endpoint section in the config"))?;
            let mut config = HttpConfig::new(endpoint.url.clone(), endpoint.model.clone());
            config.credential_env = endpoint.credential_env.clone();
            std::fs::create_dir_all(settings.transcripts_dir())?;
            let transcript = settings
                .transcripts_dir()
                .join(format!("{transcript_label}.transcript.jsonl"));
            Ok(ModelClient::http(config).with_transcript(transcript)?)
        }
        other => {
            if let Some(path) = other.strip_prefix("scripted:") {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read script file {path}"))?;
                let mut responses = Vec::new();
                for (idx, line) in text.lines().enumerate() {
                    if line.trim().is_empty() {
                        continue;
                    }
                    // JSON string lines allow embedded newlines; raw lines
                    // pass through as-is.
                    let response = if line.starts_with('"') {
                        serde_json::from_str::<String>(line).with_context(|| {
                            format!("script line {} is not a JSON string", idx + 1)
                        })?
                    } else {
                        line.to_string()
                    };
                    responses.push(response);
                }
                return Ok(ModelClient::scripted(responses));
            }
            bail!(
                "unknown backend {other:?}; expected echo, gold-oracle, flip-oracle:word, flip-oracle:char, scripted:<path>, or http"
            )
        }
    }
}

/// Judge setup per config; an `llm` judge talks through the configured
/// endpoint.
pub struct Judges {
    pub similarity_client: Option<ModelClient>,
    pub grammar_client: Option<ModelClient>,
    pub f1_threshold: f64,
    pub similarity_is_llm: bool,
    pub grammar_is_llm: bool,
}

impl Judges {
    pub fn from_settings(settings: &Settings) -> Result<Judges> {
        let mut judges = Judges {
            similarity_client: None,
            grammar_client: None,
            f1_threshold: settings.judge.f1_threshold,
            similarity_is_llm: settings.judge.backend == "llm",
            grammar_is_llm: settings.judge.grammar == "llm",
        };
        if judges.similarity_is_llm {
            judges.similarity_client = Some(client_from_spec("http", settings, "similarity-judge")?);
        }
        if judges.grammar_is_llm {
            judges.grammar_client = Some(client_from_spec("http", settings, "grammar-judge")?);
        }
        Ok(judges)
    }

    pub fn setup(&self) -> fliplab_core::eval::JudgeSetup<'_> {
        fliplab_core::eval::JudgeSetup {
            similarity: match (&self.similarity_client, self.similarity_is_llm) {
                (Some(client), true) => SimilarityJudge::Llm { client },
                _ => SimilarityJudge::Rule {
                    f1_threshold: self.f1_threshold,
                },
            },
            grammar: match (&self.grammar_client, self.grammar_is_llm) {
                (Some(client), true) => GrammarJudge::Llm { client },
                _ => GrammarJudge::Rule,
            },
        }
    }
}

/// Load a dataset by bare name (from the output data directory) or by a
/// path to its `.jsonl` file.
pub fn load_dataset(settings: &Settings, input: &str) -> Result<Dataset> {
    if input.ends_with(".jsonl") {
        let path = PathBuf::from(input);
        let dir = path
            .parent()
            .ok_or_else(|| anyhow!("dataset path {input} has no parent directory"))?;
        let name = path
            .file_stem()
            .ok_or_else(|| anyhow!("dataset path {input} has no file stem"))?
            .to_string_lossy()
            .into_owned();
        Ok(read_dataset(dir, &name)?)
    } else {
        Ok(read_dataset(&settings.data_dir(), input)?)
    }
}

pub fn load_dictionary(settings: &Settings) -> Result<Dictionary> {
    let path = settings
        .dictionary
        .as_ref()
        .ok_or_else(|| anyhow!("no dictionary configured; set \"dictionary\" in the config"))?;
    Ok(Dictionary::load(path)?)
}

pub fn suite_dataset(settings: &Settings, suite: &str) -> Result<Dataset> {
    read_dataset(&settings.suites_dir(), suite)
        .map_err(|e| anyhow!("suite {suite} not found (run `fliplab probes` first): {e}"))
}

pub fn print_wrote(path: &Path) {
    println!("wrote {}", path.display());
}
