//! `eval`, `retention`, `replication`, and `report`.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, Result};

use fliplab_core::eval::{
    evaluate_suite, read_report, render_summary, retention_eval, train_replication_check,
    write_report, EvalReport,
};
use fliplab_core::plans::{enumerate_combinations, ProbeSuiteKind};
use fliplab_core::seed::derive_seed;

use crate::config::Settings;

use super::{client_from_spec, load_dataset, load_dictionary, suite_dataset, Judges, print_wrote};

fn finish_report(settings: &Settings, report: &EvalReport, label: &str) -> Result<i32> {
    let reports_dir = settings.reports_dir();
    std::fs::create_dir_all(&reports_dir)?;
    let path = reports_dir.join(format!("{label}.report.json"));
    write_report(report, &path)?;
    print_wrote(&path);
    print!("{}", render_summary(&[report]));
    if report.error_count > 0 {
        eprintln!("{} item-level errors recorded in the report", report.error_count);
        return Ok(1);
    }
    Ok(0)
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

pub fn cmd_eval(
    settings: &Settings,
    suite: &str,
    backend: &str,
    label: Option<&str>,
) -> Result<i32> {
    let dataset = suite_dataset(settings, suite)?;
    let client = client_from_spec(backend, settings, &format!("eval-{suite}"))?;
    let judges = Judges::from_settings(settings)?;
    let dictionary = load_dictionary(settings)?;
    let report = evaluate_suite(
        &client,
        &dataset,
        dataset.noise_kind,
        &judges.setup(),
        &dictionary,
        settings.max_in_flight,
    )?;
    let label = label
        .map(str::to_string)
        .unwrap_or_else(|| format!("{suite}-{}", sanitize(&client.label())));
    finish_report(settings, &report, &label)
}

pub fn cmd_retention(
    settings: &Settings,
    plan: &str,
    suite: &str,
    backend: &str,
    label: Option<&str>,
) -> Result<i32> {
    let catalog = enumerate_combinations();
    let suite_kind = match suite {
        "wtest" => ProbeSuiteKind::Wtest,
        "ctest" => ProbeSuiteKind::Ctest,
        other => return Err(anyhow!("retention suite must be wtest or ctest, got {other:?}")),
    };
    let probe = catalog
        .retention
        .iter()
        .find(|p| p.plan == plan && p.suite == suite_kind)
        .ok_or_else(|| {
            anyhow!("no retention probe for plan {plan:?} with suite {suite}; see `fliplab plan --list`")
        })?;

    let dataset = suite_dataset(settings, suite)?;
    let client = client_from_spec(backend, settings, &format!("retention-{suite}"))?;
    let judges = Judges::from_settings(settings)?;
    let dictionary = load_dictionary(settings)?;
    let report = retention_eval(
        &client,
        probe,
        &dataset,
        &judges.setup(),
        &dictionary,
        settings.max_in_flight,
    )?;
    if let Some(excluding) = report.accuracy_percent_excluding_one_word {
        println!(
            "accuracy {:.1}% headline, {:.1}% excluding one-word golds",
            report.accuracy_percent, excluding
        );
    }
    let label = label
        .map(str::to_string)
        .unwrap_or_else(|| format!("retention-{}-{}", sanitize(plan), suite));
    finish_report(settings, &report, &label)
}

pub fn cmd_replication(
    settings: &Settings,
    dataset_name: &str,
    backend: &str,
    n: usize,
    label: Option<&str>,
) -> Result<i32> {
    let dataset = load_dataset(settings, dataset_name)?;
    let client = client_from_spec(backend, settings, &format!("replication-{dataset_name}"))?;
    let judges = Judges::from_settings(settings)?;
    let dictionary = load_dictionary(settings)?;
    let seed = derive_seed(settings.seed, "replication");
    let report = train_replication_check(
        &client,
        &dataset,
        n,
        seed,
        &judges.setup(),
        &dictionary,
        settings.max_in_flight,
    )?;
    let label = label
        .map(str::to_string)
        .unwrap_or_else(|| format!("replication-{}", sanitize(dataset_name)));
    finish_report(settings, &report, &label)
}

pub fn cmd_report(settings: &Settings, inputs: &[PathBuf], out: Option<&Path>) -> Result<i32> {
    if inputs.is_empty() {
        return Err(anyhow!("report needs at least one report file"));
    }
    let mut reports = Vec::new();
    for path in inputs {
        reports.push(read_report(path)?);
    }
    let refs: Vec<&EvalReport> = reports.iter().collect();
    let summary = render_summary(&refs);
    print!("{summary}");
    let out_path = out
        .map(Path::to_path_buf)
        .unwrap_or_else(|| settings.reports_dir().join("summary.txt"));
    if let Some(parent) = out_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(&out_path, summary)?;
    print_wrote(&out_path);
    Ok(0)
}
