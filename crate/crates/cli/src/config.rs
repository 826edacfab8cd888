//! Run configuration: built-in defaults, overridden by the config file,
//! overridden by command-line flags, in that order.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

/// Schema-validated configuration file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Source dataset locations by name: `alpagasus`, `dolly`, `ch`, `gk`.
    /// Values are local paths or HTTP(S) URLs.
    #[serde(default)]
    pub sources: BTreeMap<String, String>,
    pub cleaning_rules: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub judge: JudgeSection,
    pub endpoint: Option<EndpointSection>,
    pub dictionary: Option<PathBuf>,
    pub test_set: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub max_in_flight: Option<usize>,
    pub retry_bound: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgeSection {
    /// `rule` or `llm`.
    #[serde(default = "default_judge_backend")]
    pub backend: String,
    #[serde(default = "default_f1_threshold")]
    pub f1_threshold: f64,
    /// `rule` or `llm`.
    #[serde(default = "default_judge_backend")]
    pub grammar: String,
}

impl Default for JudgeSection {
    fn default() -> Self {
        JudgeSection {
            backend: default_judge_backend(),
            f1_threshold: default_f1_threshold(),
            grammar: default_judge_backend(),
        }
    }
}

fn default_judge_backend() -> String {
    "rule".to_string()
}

fn default_f1_threshold() -> f64 {
    fliplab_core::eval::DEFAULT_RULE_F1_THRESHOLD
}

/// Remote endpoint section. The credential itself is read from the named
/// environment variable and never written to any file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointSection {
    pub url: String,
    pub model: String,
    pub credential_env: Option<String>,
}

/// Fully resolved settings a command runs with.
#[derive(Debug, Clone)]
pub struct Settings {
    pub sources: BTreeMap<String, String>,
    pub cleaning_rules: Option<PathBuf>,
    pub seed: u64,
    pub judge: JudgeSection,
    pub endpoint: Option<EndpointSection>,
    pub dictionary: Option<PathBuf>,
    pub test_set: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    pub max_in_flight: usize,
    pub retry_bound: u32,
}

impl Settings {
    pub fn resolve(
        config_path: Option<&Path>,
        output_dir_flag: Option<PathBuf>,
        seed_flag: Option<u64>,
    ) -> Result<Settings> {
        let file = match config_path {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .with_context(|| format!("cannot read config file {}", path.display()))?;
                serde_json::from_str::<ConfigFile>(&text)
                    .with_context(|| format!("config file {} failed validation", path.display()))?
            }
            None => ConfigFile::default(),
        };

        for key in file.sources.keys() {
            if !matches!(key.as_str(), "alpagasus" | "dolly" | "ch" | "gk") {
                bail!("unknown source name {key:?}; expected alpagasus, dolly, ch, or gk");
            }
        }
        for judge in [&file.judge.backend, &file.judge.grammar] {
            if !matches!(judge.as_str(), "rule" | "llm") {
                bail!("judge backend {judge:?} is not rule or llm");
            }
        }

        let output_dir = output_dir_flag
            .or(file.output_dir)
            .unwrap_or_else(|| PathBuf::from("fliplab-out"));
        let cache_dir = file.cache_dir.unwrap_or_else(|| output_dir.join("cache"));
        Ok(Settings {
            sources: file.sources,
            cleaning_rules: file.cleaning_rules,
            seed: seed_flag.or(file.seed).unwrap_or(42),
            judge: file.judge,
            endpoint: file.endpoint,
            dictionary: file.dictionary,
            test_set: file.test_set,
            output_dir,
            cache_dir,
            max_in_flight: file.max_in_flight.unwrap_or(4),
            retry_bound: file.retry_bound.unwrap_or(5),
        })
    }

    pub fn data_dir(&self) -> PathBuf {
        self.output_dir.join("data")
    }

    pub fn suites_dir(&self) -> PathBuf {
        self.output_dir.join("suites")
    }

    pub fn plans_dir(&self) -> PathBuf {
        self.output_dir.join("plans")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output_dir.join("reports")
    }

    pub fn tokscan_dir(&self) -> PathBuf {
        self.output_dir.join("tokscan")
    }

    pub fn transcripts_dir(&self) -> PathBuf {
        self.output_dir.join("transcripts")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<ConfigFile>(r#"{"not_a_key": 1}"#);
        assert!(err.is_err());
    }

    #[test]
    fn defaults_resolve_without_a_file() {
        let settings = Settings::resolve(None, None, None).unwrap();
        assert_eq!(settings.seed, 42);
        assert_eq!(settings.max_in_flight, 4);
        assert_eq!(settings.retry_bound, 5);
        assert_eq!(settings.judge.backend, "rule");
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(&path, r#"{"seed": 7, "output_dir": "from-file"}"#).unwrap();
        let settings =
            Settings::resolve(Some(&path), Some(PathBuf::from("from-flag")), Some(99)).unwrap();
        assert_eq!(settings.seed, 99);
        assert_eq!(settings.output_dir, PathBuf::from("from-flag"));
    }

    #[test]
    fn bad_source_name_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("config.json");
        fs::write(&path, r#"{"sources": {"mystery": "x.json"}}"#).unwrap();
        assert!(Settings::resolve(Some(&path), None, None).is_err());
    }
}
