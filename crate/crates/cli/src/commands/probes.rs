//! `probes`: build the plain, word-flip, and char-flip suites from the test
//! set.

use anyhow::{Context, Result};

use fliplab_core::corpus::write_dataset;
use fliplab_core::prompts::{build_test_suites, default_shots, Shot, ShotSelection};
use fliplab_core::seed::derive_seed;

use crate::config::Settings;

use super::print_wrote;

pub fn cmd_probes(
    settings: &Settings,
    per_item: bool,
    shot_pool: Option<&std::path::Path>,
    k: usize,
) -> Result<i32> {
    let test_set = super::build::load_test_set(settings)?;

    let selection = if per_item {
        let pool: Vec<Shot> = match shot_pool {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading shot pool {}", path.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("shot pool {} failed to parse", path.display()))?
            }
            None => default_shots(),
        };
        ShotSelection::PerItemSeeded {
            pool,
            k,
            seed: derive_seed(settings.seed, "probes"),
        }
    } else {
        ShotSelection::Fixed(default_shots())
    };

    let (test, wtest, ctest) = build_test_suites(&test_set, &selection)?;
    let suites_dir = settings.suites_dir();
    std::fs::create_dir_all(&suites_dir)?;
    for suite in [&test, &wtest, &ctest] {
        write_dataset(suite, &suites_dir)?;
        print_wrote(&suites_dir.join(format!("{}.jsonl", suite.name)));
    }
    println!("suites of {} items each", test.len());
    Ok(0)
}
