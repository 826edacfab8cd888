//! Dataset construction: the full `build` pipeline plus the standalone
//! `flip`, `irrelevant`, and `counterfactual` steps.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};

use fliplab_core::corpus::{
    clean_text, combine, dedup, ingest_source, write_dataset, CleanOutcome, CleaningRule, Dataset,
    InstructionExample, RuleAction, RuleKind, RuleSet,
};
use fliplab_core::noise::{derange_answers, flip_dataset, run_counterfactual, FlipKind, NoiseKind};
use fliplab_core::plans::dataset_names;
use fliplab_core::seed::derive_seed;

use crate::config::Settings;

use super::{client_from_spec, load_dataset, print_wrote};

/// The committed default rule set, used when the config names no rule file.
fn default_rules() -> RuleSet {
    let rules = [
        (RuleKind::Url, RuleAction::Strip),
        (RuleKind::NonEnglishWords, RuleAction::Strip),
        (RuleKind::NonEnglishChars, RuleAction::Strip),
        (RuleKind::Emoji, RuleAction::Strip),
        (RuleKind::Code, RuleAction::RejectRecord),
        (RuleKind::Equation, RuleAction::RejectRecord),
        (RuleKind::ImageRequest, RuleAction::RejectRecord),
    ]
    .map(|(kind, action)| CleaningRule { kind, action });
    RuleSet::new(rules.to_vec()).expect("default rules are unique")
}

fn load_rules(settings: &Settings) -> Result<RuleSet> {
    match &settings.cleaning_rules {
        Some(path) => Ok(RuleSet::load(path)?),
        None => Ok(default_rules()),
    }
}

/// Ingest one source and apply the cleaning rules to every field; a
/// rejection on any field drops the record.
fn ingest_and_clean(
    name: &str,
    location: &str,
    rules: &RuleSet,
    settings: &Settings,
) -> Result<Dataset> {
    let examples = ingest_source(name, location, Some(&settings.cache_dir))
        .with_context(|| format!("ingesting source {name} from {location}"))?;
    let mut records = Vec::new();
    let mut dropped = 0usize;
    for example in &examples {
        example.validate()?;
        let mut cleaned = example.clone();
        let mut rejected = false;
        for value in [
            &mut cleaned.instruction,
            &mut cleaned.input,
            &mut cleaned.answer,
        ] {
            match clean_text(value, rules) {
                CleanOutcome::Cleaned(text) => *value = text,
                CleanOutcome::Rejected(_) => {
                    rejected = true;
                    break;
                }
            }
        }
        if rejected || cleaned.instruction.is_empty() || cleaned.answer.is_empty() {
            dropped += 1;
            continue;
        }
        records.push(cleaned.to_record());
    }
    println!("source {name}: {} records kept, {dropped} dropped by cleaning", records.len());
    Ok(Dataset::new(name, NoiseKind::None, records))
}

/// The full construction pipeline. Sources present in the config decide how
/// far it goes; the flipped and irrelevant datasets always follow from
/// `alpagasus` + `dolly`.
pub fn cmd_build(
    settings: &Settings,
    generator_spec: Option<&str>,
    validator_spec: Option<&str>,
) -> Result<i32> {
    let rules = load_rules(settings)?;
    let data_dir = settings.data_dir();
    std::fs::create_dir_all(&data_dir)?;

    let source = |key: &str| -> Result<&String> {
        settings
            .sources
            .get(key)
            .ok_or_else(|| anyhow!("missing source {key:?} in config (sources.{key})"))
    };

    // stage: base corpora
    let alpagasus = ingest_and_clean("alpagasus", source("alpagasus")?, &rules, settings)
        .context("stage alpagasus")?;
    let dolly =
        ingest_and_clean("dolly", source("dolly")?, &rules, settings).context("stage dolly")?;
    write_dataset(&alpagasus, &data_dir)?;
    write_dataset(&dolly, &data_dir)?;

    // stage: ad_train = alpagasus + dolly
    let ad_train = combine(&[&alpagasus, &dolly], dataset_names::AD_TRAIN).context("stage ad_train")?;
    write_dataset(&ad_train, &data_dir)?;
    print_wrote(&data_dir.join("ad_train.jsonl"));

    // stage: flipped pos/neg datasets
    let wflipped = flip_dataset(&ad_train, FlipKind::Word, dataset_names::AD_WFLIPPED);
    write_dataset(&wflipped, &data_dir)?;
    let cflipped = flip_dataset(&ad_train, FlipKind::Char, dataset_names::AD_CFLIPPED);
    write_dataset(&cflipped, &data_dir)?;
    println!(
        "flipped: {} -> {} records each (pos/neg pairs)",
        ad_train.len(),
        wflipped.len()
    );

    // stage: irrelevant answers by derangement
    let irr_seed = derive_seed(settings.seed, "irrelevant");
    let irr = derange_answers(&ad_train, irr_seed, dataset_names::IRR_TRAIN)
        .context("stage irr_train")?;
    write_dataset(&irr, &data_dir)?;

    // stage: unlearning corpus, deduplicated against the training sources
    if let Some(location) = settings.sources.get("ch") {
        let ch = ingest_and_clean("ch", location, &rules, settings).context("stage ch_train")?;
        let (mut ch_train, removed) = dedup(&ch, &[&alpagasus, &dolly]);
        ch_train.name = dataset_names::CH_TRAIN.to_string();
        ch_train.parents = vec!["ch".to_string(), alpagasus.name.clone(), dolly.name.clone()];
        write_dataset(&ch_train, &data_dir)?;
        println!("ch_train: {} records after removing {removed} duplicates", ch_train.len());
    }

    // stage: general knowledge + counterfactuals
    if let Some(location) = settings.sources.get("gk") {
        let gk = ingest_and_clean(dataset_names::GK, location, &rules, settings)
            .context("stage gk")?;
        write_dataset(&gk, &data_dir)?;

        if let (Some(generator_spec), Some(validator_spec)) = (generator_spec, validator_spec) {
            let generator = client_from_spec(generator_spec, settings, "cfact-generator")?;
            let validator = client_from_spec(validator_spec, settings, "cfact-validator")?;
            let queue_path = data_dir.join("cfact_review_queue.jsonl");
            let (cfact, stats) = run_counterfactual(
                &gk,
                &generator,
                &validator,
                settings.retry_bound,
                &queue_path,
                settings.max_in_flight,
                dataset_names::CFACT_TRAIN,
            )
            .context("stage cfact_train")?;
            write_dataset(&cfact, &data_dir)?;
            println!(
                "cfact_train: {} accepted, {} exhausted to review queue ({} flags)",
                stats.accepted, stats.exhausted, stats.flagged_events
            );
        }
    }

    println!("build complete under {}", data_dir.display());
    Ok(0)
}

pub fn cmd_flip(settings: &Settings, input: &str, kind: FlipKind, name: Option<&str>) -> Result<i32> {
    let dataset = load_dataset(settings, input)?;
    let default_name = format!(
        "{}_{}flipped",
        dataset.name,
        match kind {
            FlipKind::Word => "w",
            FlipKind::Char => "c",
        }
    );
    let name = name.unwrap_or(&default_name);
    let flipped = flip_dataset(&dataset, kind, name);
    let data_dir = settings.data_dir();
    write_dataset(&flipped, &data_dir)?;
    print_wrote(&data_dir.join(format!("{name}.jsonl")));
    println!("{} records ({} pos/neg pairs)", flipped.len(), dataset.len());
    Ok(0)
}

pub fn cmd_irrelevant(settings: &Settings, input: &str, name: Option<&str>) -> Result<i32> {
    let dataset = load_dataset(settings, input)?;
    let name = name.unwrap_or(dataset_names::IRR_TRAIN);
    let seed = derive_seed(settings.seed, "irrelevant");
    let deranged = derange_answers(&dataset, seed, name)?;
    let data_dir = settings.data_dir();
    write_dataset(&deranged, &data_dir)?;
    print_wrote(&data_dir.join(format!("{name}.jsonl")));
    println!("derangement seed {seed}");
    Ok(0)
}

pub fn cmd_counterfactual(
    settings: &Settings,
    input: &str,
    generator_spec: &str,
    validator_spec: &str,
    name: Option<&str>,
    queue: Option<PathBuf>,
) -> Result<i32> {
    let dataset = load_dataset(settings, input)?;
    if dataset.is_empty() {
        bail!("input dataset {input} is empty");
    }
    let generator = client_from_spec(generator_spec, settings, "cfact-generator")?;
    let validator = client_from_spec(validator_spec, settings, "cfact-validator")?;
    let name = name.unwrap_or(dataset_names::CFACT_TRAIN);
    let data_dir = settings.data_dir();
    std::fs::create_dir_all(&data_dir)?;
    let queue_path = queue.unwrap_or_else(|| data_dir.join("cfact_review_queue.jsonl"));

    let (cfact, stats) = run_counterfactual(
        &dataset,
        &generator,
        &validator,
        settings.retry_bound,
        &queue_path,
        settings.max_in_flight,
        name,
    )?;
    write_dataset(&cfact, &data_dir)?;
    print_wrote(&data_dir.join(format!("{name}.jsonl")));
    println!(
        "{} accepted, {} exhausted to {} ({} flags)",
        stats.accepted,
        stats.exhausted,
        queue_path.display(),
        stats.flagged_events
    );
    Ok(if stats.exhausted > 0 { 1 } else { 0 })
}

/// Build the probe/test suites from the configured test set.
pub fn load_test_set(settings: &Settings) -> Result<Vec<InstructionExample>> {
    let path = settings
        .test_set
        .as_ref()
        .ok_or_else(|| anyhow!("no test_set configured; set \"test_set\" in the config"))?;
    let dir = path
        .parent()
        .ok_or_else(|| anyhow!("test_set path has no parent directory"))?;
    let name = path
        .file_stem()
        .ok_or_else(|| anyhow!("test_set path has no file stem"))?
        .to_string_lossy()
        .into_owned();
    let dataset = fliplab_core::corpus::read_dataset(dir, &name)
        .with_context(|| format!("reading test set {}", path.display()))?;
    Ok(dataset
        .records
        .iter()
        .map(InstructionExample::from_record)
        .collect())
}
