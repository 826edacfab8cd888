//! `plan`: list the catalog, emit plan files with resolved dataset hashes,
//! and advance persisted run state.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, Result};

use fliplab_core::corpus::{manifest_path, read_manifest, DatasetManifest};
use fliplab_core::plans::{
    advance_run, emit_plan, enumerate_combinations, load_run_state, resolve_stage_hashes,
    save_run_state, RunState, TrainingPlan,
};

use crate::config::Settings;

use super::print_wrote;

pub fn cmd_plan_list() -> Result<i32> {
    let catalog = enumerate_combinations();
    println!("baseline ({}):", catalog.baseline.len());
    for plan in &catalog.baseline {
        println!("  {}", plan.name);
    }
    println!("learning ({}):", catalog.learning.len());
    for plan in &catalog.learning {
        println!("  {}", plan.name);
    }
    println!("unlearning ({}):", catalog.unlearning.len());
    for plan in &catalog.unlearning {
        println!("  {}", plan.name);
    }
    println!("retention probes ({}):", catalog.retention.len());
    for probe in &catalog.retention {
        println!("  {} : {}", probe.plan, probe.suite.suite_name());
    }
    Ok(0)
}

fn manifests_in(dir: &Path, plan: &TrainingPlan) -> HashMap<String, DatasetManifest> {
    let mut manifests = HashMap::new();
    for stage in &plan.stages {
        let path = manifest_path(dir, &stage.dataset);
        if let Ok(manifest) = read_manifest(&path) {
            manifests.insert(manifest.name.clone(), manifest);
        }
    }
    manifests
}

fn emit_one(plan: &TrainingPlan, data_dir: &Path, plans_dir: &Path) -> Result<()> {
    let manifests = manifests_in(data_dir, plan);
    let resolved = resolve_stage_hashes(plan, &manifests)?;
    std::fs::create_dir_all(plans_dir)?;
    let plan_path = plans_dir.join(format!("{}.plan.json", plan.name));
    emit_plan(&resolved, &plan_path)?;
    print_wrote(&plan_path);
    let state_path = plans_dir.join(format!("{}.state.json", plan.name));
    save_run_state(&RunState::new(&resolved), &state_path)?;
    print_wrote(&state_path);
    Ok(())
}

pub fn cmd_plan_emit(settings: &Settings, name: &str, data_dir: Option<&Path>) -> Result<i32> {
    let catalog = enumerate_combinations();
    let plan = catalog
        .find_plan(name)
        .ok_or_else(|| anyhow!("no plan named {name:?}; try `fliplab plan --list`"))?;
    let default_dir = settings.data_dir();
    emit_one(plan, data_dir.unwrap_or(&default_dir), &settings.plans_dir())?;
    Ok(0)
}

pub fn cmd_plan_emit_all(settings: &Settings, data_dir: Option<&Path>) -> Result<i32> {
    let catalog = enumerate_combinations();
    let default_dir = settings.data_dir();
    let data_dir = data_dir.unwrap_or(&default_dir);
    let mut emitted = 0;
    for plan in catalog.all_plans() {
        emit_one(plan, data_dir, &settings.plans_dir())?;
        emitted += 1;
    }
    println!("emitted {emitted} plans");
    Ok(0)
}

pub fn cmd_plan_advance(state_path: &Path, stage: usize, artifact: &str) -> Result<i32> {
    let mut state = load_run_state(state_path)?;
    advance_run(&mut state, stage, artifact)?;
    save_run_state(&state, state_path)?;
    match state.next_stage() {
        Some(next) => println!(
            "stage {stage} complete; next stage {next} ({})",
            state.stages[next].dataset
        ),
        None => println!("stage {stage} complete; run finished"),
    }
    Ok(0)
}
