//! Training plans: the full catalog of learn/unlearn combinations as
//! ordered, hyperparameter-complete plan files, plus persisted run state.
//!
//! A plan references datasets by manifest name and content hash, never by
//! path, so emitted plans are relocatable. The trainer itself is out of
//! scope; the plan file is the integration contract.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::corpus::DatasetManifest;
use crate::error::{Error, Result};
use crate::noise::NoiseKind;

/// Canonical dataset names used by the catalog.
pub mod dataset_names {
    pub const AD_TRAIN: &str = "ad_train";
    pub const AD_WFLIPPED: &str = "ad_wflipped";
    pub const AD_CFLIPPED: &str = "ad_cflipped";
    pub const IRR_TRAIN: &str = "irr_train";
    pub const CFACT_TRAIN: &str = "cfact_train";
    pub const CH_TRAIN: &str = "ch_train";
    pub const GK: &str = "gk";
}

/// The noise kind each catalog dataset is expected to carry.
pub fn expected_noise(dataset: &str) -> Option<NoiseKind> {
    use dataset_names::*;
    match dataset {
        AD_TRAIN | CH_TRAIN | GK => Some(NoiseKind::None),
        AD_WFLIPPED => Some(NoiseKind::WordFlip),
        AD_CFLIPPED => Some(NoiseKind::CharFlip),
        IRR_TRAIN => Some(NoiseKind::Irrelevant),
        CFACT_TRAIN => Some(NoiseKind::Counterfactual),
        _ => None,
    }
}

/// Fixed instruction-tuning hyperparameters. Batch size and sequence length
/// are deliberately null in emitted plans: the trainer decides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    pub epochs: u32,
    pub lr_schedule: String,
    pub lr_start: f64,
    pub optimizer: String,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub warmup_steps: u32,
    pub precision: String,
    pub batch_size: Option<u32>,
    pub sequence_length: Option<u32>,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            epochs: 5,
            lr_schedule: "cosine".to_string(),
            lr_start: 3e-6,
            optimizer: "adamw".to_string(),
            weight_decay: 0.1,
            beta1: 0.9,
            beta2: 0.95,
            warmup_steps: 100,
            precision: "bfloat16".to_string(),
            batch_size: None,
            sequence_length: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanCategory {
    Learning,
    Unlearning,
    Baseline,
}

/// One ordered stage: a dataset reference by manifest name and, once
/// resolved, its content hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRef {
    pub dataset: String,
    pub content_hash: Option<String>,
}

impl StageRef {
    fn named(dataset: &str) -> Self {
        StageRef {
            dataset: dataset.to_string(),
            content_hash: None,
        }
    }
}

/// An ordered training plan with its fixed hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPlan {
    pub name: String,
    pub category: PlanCategory,
    pub stages: Vec<StageRef>,
    pub hyperparameters: Hyperparameters,
}

impl TrainingPlan {
    fn from_stages(category: PlanCategory, stages: &[&str]) -> Self {
        let prefix = match category {
            PlanCategory::Baseline => "base",
            PlanCategory::Learning => "learn",
            PlanCategory::Unlearning => "unlearn",
        };
        TrainingPlan {
            name: format!("{prefix}-{}", stages.join("+")),
            category,
            stages: stages.iter().map(|s| StageRef::named(s)).collect(),
            hyperparameters: Hyperparameters::default(),
        }
    }

    pub fn stage_datasets(&self) -> Vec<&str> {
        self.stages.iter().map(|s| s.dataset.as_str()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages.is_empty() {
            return Err(Error::InvalidInput(format!("plan {}: no stages", self.name)));
        }
        if self.category == PlanCategory::Unlearning {
            let last = &self.stages[self.stages.len() - 1].dataset;
            match expected_noise(last) {
                Some(NoiseKind::None) => {}
                _ => {
                    return Err(Error::InvalidInput(format!(
                        "unlearning plan {} must end with a noise-free dataset, ends with {last}",
                        self.name
                    )))
                }
            }
        }
        Ok(())
    }
}

/// Which probe suite a retention check uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeSuiteKind {
    Wtest,
    Ctest,
}

impl ProbeSuiteKind {
    pub fn suite_name(self) -> &'static str {
        match self {
            ProbeSuiteKind::Wtest => "wtest",
            ProbeSuiteKind::Ctest => "ctest",
        }
    }

    pub fn noise_kind(self) -> NoiseKind {
        match self {
            ProbeSuiteKind::Wtest => NoiseKind::WordFlip,
            ProbeSuiteKind::Ctest => NoiseKind::CharFlip,
        }
    }
}

/// A retention probe: an unlearning plan checked against a flipped suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetentionProbeConfig {
    pub plan: String,
    pub suite: ProbeSuiteKind,
}

/// The complete catalog of plans and retention probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub baseline: Vec<TrainingPlan>,
    pub learning: Vec<TrainingPlan>,
    pub unlearning: Vec<TrainingPlan>,
    pub retention: Vec<RetentionProbeConfig>,
}

impl Catalog {
    pub fn all_plans(&self) -> impl Iterator<Item = &TrainingPlan> {
        self.baseline
            .iter()
            .chain(self.learning.iter())
            .chain(self.unlearning.iter())
    }

    pub fn find_plan(&self, name: &str) -> Option<&TrainingPlan> {
        self.all_plans().find(|plan| plan.name == name)
    }
}

/// Enumerate the full catalog: 1 baseline, 15 learning plans, 10 unlearning
/// plans, and 6 retention probe configs, in table row order.
pub fn enumerate_combinations() -> Catalog {
    use dataset_names::*;

    let baseline = vec![TrainingPlan::from_stages(PlanCategory::Baseline, &[AD_TRAIN])];

    let learning_rows: [&[&str]; 15] = [
        // one level of noise
        &[AD_WFLIPPED],
        &[AD_CFLIPPED],
        // two levels
        &[AD_TRAIN, AD_WFLIPPED],
        &[AD_TRAIN, AD_CFLIPPED],
        &[AD_CFLIPPED, AD_WFLIPPED],
        &[AD_WFLIPPED, AD_CFLIPPED],
        // three levels
        &[AD_TRAIN, AD_WFLIPPED, AD_CFLIPPED],
        &[AD_TRAIN, AD_CFLIPPED, AD_WFLIPPED],
        &[AD_WFLIPPED, AD_CFLIPPED, AD_TRAIN],
        &[AD_CFLIPPED, AD_WFLIPPED, AD_TRAIN],
        // irrelevant responses
        &[IRR_TRAIN],
        &[AD_TRAIN, IRR_TRAIN],
        // counterfactual responses
        &[GK],
        &[CFACT_TRAIN],
        &[GK, CFACT_TRAIN],
    ];
    let learning = learning_rows
        .iter()
        .map(|stages| TrainingPlan::from_stages(PlanCategory::Learning, stages))
        .collect();

    let unlearning_rows: [&[&str]; 10] = [
        // one level of noise
        &[AD_TRAIN, AD_WFLIPPED, AD_TRAIN],
        &[AD_TRAIN, AD_WFLIPPED, CH_TRAIN],
        &[AD_TRAIN, AD_CFLIPPED, AD_TRAIN],
        &[AD_TRAIN, AD_CFLIPPED, CH_TRAIN],
        // two levels of noise
        &[AD_TRAIN, AD_WFLIPPED, AD_CFLIPPED, AD_TRAIN],
        &[AD_TRAIN, AD_WFLIPPED, AD_CFLIPPED, CH_TRAIN],
        &[AD_TRAIN, AD_CFLIPPED, AD_WFLIPPED, AD_TRAIN],
        &[AD_TRAIN, AD_CFLIPPED, AD_WFLIPPED, CH_TRAIN],
        // irrelevant responses
        &[AD_TRAIN, IRR_TRAIN, AD_TRAIN],
        // counterfactual responses
        &[GK, CFACT_TRAIN, GK],
    ];
    let unlearning: Vec<TrainingPlan> = unlearning_rows
        .iter()
        .map(|stages| TrainingPlan::from_stages(PlanCategory::Unlearning, stages))
        .collect();

    let plan_name = |stages: &[&str]| {
        TrainingPlan::from_stages(PlanCategory::Unlearning, stages).name
    };
    let retention = vec![
        RetentionProbeConfig {
            plan: plan_name(&[AD_TRAIN, AD_WFLIPPED, AD_TRAIN]),
            suite: ProbeSuiteKind::Wtest,
        },
        RetentionProbeConfig {
            plan: plan_name(&[AD_TRAIN, AD_CFLIPPED, AD_TRAIN]),
            suite: ProbeSuiteKind::Ctest,
        },
        RetentionProbeConfig {
            plan: plan_name(&[AD_TRAIN, AD_WFLIPPED, AD_CFLIPPED, AD_TRAIN]),
            suite: ProbeSuiteKind::Wtest,
        },
        RetentionProbeConfig {
            plan: plan_name(&[AD_TRAIN, AD_WFLIPPED, AD_CFLIPPED, AD_TRAIN]),
            suite: ProbeSuiteKind::Ctest,
        },
        RetentionProbeConfig {
            plan: plan_name(&[AD_TRAIN, AD_CFLIPPED, AD_WFLIPPED, AD_TRAIN]),
            suite: ProbeSuiteKind::Ctest,
        },
        RetentionProbeConfig {
            plan: plan_name(&[AD_TRAIN, AD_CFLIPPED, AD_WFLIPPED, AD_TRAIN]),
            suite: ProbeSuiteKind::Wtest,
        },
    ];

    Catalog {
        baseline,
        learning,
        unlearning,
        retention,
    }
}

/// Fill in stage content hashes from a manifest map. Every stage must
/// resolve or the whole plan fails, listing the missing manifests.
pub fn resolve_stage_hashes(
    plan: &TrainingPlan,
    manifests: &HashMap<String, DatasetManifest>,
) -> Result<TrainingPlan> {
    let mut resolved = plan.clone();
    let mut missing = Vec::new();
    for stage in &mut resolved.stages {
        match manifests.get(&stage.dataset) {
            Some(manifest) => stage.content_hash = Some(manifest.content_hash.clone()),
            None => missing.push(stage.dataset.clone()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::UnresolvedDatasets(missing));
    }
    Ok(resolved)
}

/// Write a plan file an external trainer can consume. All stage references
/// must already carry content hashes.
pub fn emit_plan(plan: &TrainingPlan, path: &Path) -> Result<()> {
    plan.validate()?;
    let unresolved: Vec<String> = plan
        .stages
        .iter()
        .filter(|s| s.content_hash.is_none())
        .map(|s| s.dataset.clone())
        .collect();
    if !unresolved.is_empty() {
        return Err(Error::UnresolvedDatasets(unresolved));
    }
    let text = serde_json::to_string_pretty(plan).expect("plan serializes");
    write_atomic(path, text.as_bytes())
}

/// Parse a plan file back; emission followed by parsing reproduces the plan
/// value exactly.
pub fn parse_plan(path: &Path) -> Result<TrainingPlan> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StageStatus {
    Pending,
    Dispatched,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageState {
    pub dataset: String,
    pub status: StageStatus,
    pub artifact: Option<String>,
    pub completed_at_unix: Option<u64>,
}

/// Persisted progress of one plan's stages. Statuses move only forward
/// (pending → dispatched → complete) and at most one stage is dispatched.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunState {
    pub plan: String,
    pub stages: Vec<StageState>,
}

impl RunState {
    pub fn new(plan: &TrainingPlan) -> Self {
        RunState {
            plan: plan.name.clone(),
            stages: plan
                .stages
                .iter()
                .map(|stage| StageState {
                    dataset: stage.dataset.clone(),
                    status: StageStatus::Pending,
                    artifact: None,
                    completed_at_unix: None,
                })
                .collect(),
        }
    }

    /// Index of the next stage that is pending or dispatched.
    pub fn next_stage(&self) -> Option<usize> {
        self.stages
            .iter()
            .position(|s| s.status != StageStatus::Complete)
    }

    /// Mark `stage` dispatched. Only the first non-complete stage can be
    /// dispatched, and only once.
    pub fn dispatch(&mut self, stage: usize) -> Result<()> {
        if self.stages.iter().any(|s| s.status == StageStatus::Dispatched) {
            return Err(Error::State("a stage is already dispatched".to_string()));
        }
        match self.next_stage() {
            Some(next) if next == stage => {
                self.stages[stage].status = StageStatus::Dispatched;
                Ok(())
            }
            _ => Err(Error::State(format!(
                "stage {stage} is not the next pending stage"
            ))),
        }
    }
}

/// Complete a stage with its artifact reference. The stage must be the
/// dispatched one or the next pending one; anything else is out of order.
pub fn advance_run(state: &mut RunState, stage: usize, artifact_ref: &str) -> Result<()> {
    if stage >= state.stages.len() {
        return Err(Error::State(format!("stage {stage} out of range")));
    }
    let eligible = match state.next_stage() {
        Some(next) => next == stage,
        None => false,
    };
    if !eligible {
        return Err(Error::State(format!(
            "stage {stage} completed out of order"
        )));
    }
    let entry = &mut state.stages[stage];
    entry.status = StageStatus::Complete;
    entry.artifact = Some(artifact_ref.to_string());
    entry.completed_at_unix = Some(
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_secs(),
    );
    Ok(())
}

/// Persist run state atomically (write to temp, then rename).
pub fn save_run_state(state: &RunState, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(state).expect("state serializes");
    write_atomic(path, text.as_bytes())
}

pub fn load_run_state(path: &Path) -> Result<RunState> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_counts() {
        let catalog = enumerate_combinations();
        assert_eq!(catalog.baseline.len(), 1);
        assert_eq!(catalog.learning.len(), 15);
        assert_eq!(catalog.unlearning.len(), 10);
        assert_eq!(catalog.retention.len(), 6);
    }

    #[test]
    fn catalog_is_deterministic_and_names_unique() {
        let a = enumerate_combinations();
        let b = enumerate_combinations();
        assert_eq!(a, b);
        let mut names: Vec<&str> = a.all_plans().map(|p| p.name.as_str()).collect();
        let total = names.len();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), total);
    }

    #[test]
    fn unlearning_plans_end_noise_free() {
        let catalog = enumerate_combinations();
        for plan in &catalog.unlearning {
            plan.validate().unwrap();
            let last = plan.stages.last().unwrap();
            assert_eq!(expected_noise(&last.dataset), Some(NoiseKind::None));
        }
    }

    #[test]
    fn retention_references_unlearning_plans() {
        let catalog = enumerate_combinations();
        for probe in &catalog.retention {
            let plan = catalog.find_plan(&probe.plan).expect("plan exists");
            assert_eq!(plan.category, PlanCategory::Unlearning);
        }
    }

    #[test]
    fn emit_requires_resolved_hashes() {
        let catalog = enumerate_combinations();
        let plan = &catalog.unlearning[0];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.json");
        match emit_plan(plan, &path) {
            Err(Error::UnresolvedDatasets(missing)) => {
                assert_eq!(missing.len(), plan.stages.len());
            }
            other => panic!("expected unresolved datasets, got {other:?}"),
        }
    }

    fn fake_manifests() -> HashMap<String, DatasetManifest> {
        use dataset_names::*;
        [AD_TRAIN, AD_WFLIPPED, AD_CFLIPPED, IRR_TRAIN, CFACT_TRAIN, CH_TRAIN, GK]
            .iter()
            .map(|name| {
                (
                    name.to_string(),
                    DatasetManifest {
                        name: name.to_string(),
                        record_count: 1,
                        noise_kind: expected_noise(name).unwrap(),
                        content_hash: format!("hash-of-{name}"),
                        parents: Vec::new(),
                        seed: None,
                    },
                )
            })
            .collect()
    }

    #[test]
    fn emit_and_parse_round_trip() {
        let catalog = enumerate_combinations();
        let manifests = fake_manifests();
        let dir = tempfile::tempdir().unwrap();
        for plan in catalog.all_plans() {
            let resolved = resolve_stage_hashes(plan, &manifests).unwrap();
            let path = dir.path().join(format!("{}.plan.json", plan.name));
            emit_plan(&resolved, &path).unwrap();
            let parsed = parse_plan(&path).unwrap();
            assert_eq!(parsed, resolved);
        }
    }

    #[test]
    fn resolve_lists_missing_manifests() {
        let catalog = enumerate_combinations();
        let mut manifests = fake_manifests();
        manifests.remove(dataset_names::CH_TRAIN);
        let plan = catalog
            .find_plan("unlearn-ad_train+ad_wflipped+ch_train")
            .unwrap();
        match resolve_stage_hashes(plan, &manifests) {
            Err(Error::UnresolvedDatasets(missing)) => {
                assert_eq!(missing, vec!["ch_train".to_string()]);
            }
            other => panic!("expected unresolved, got {other:?}"),
        }
    }

    #[test]
    fn run_state_advances_in_order_only() {
        let catalog = enumerate_combinations();
        let plan = catalog.find_plan("unlearn-ad_train+ad_wflipped+ad_train").unwrap();
        let mut state = RunState::new(plan);
        assert_eq!(state.next_stage(), Some(0));

        // completing stage 2 before earlier stages is out of order
        assert!(advance_run(&mut state, 2, "ckpt-x").is_err());

        advance_run(&mut state, 0, "ckpt-0").unwrap();
        assert_eq!(state.next_stage(), Some(1));
        state.dispatch(1).unwrap();
        assert!(state.dispatch(1).is_err());
        advance_run(&mut state, 1, "ckpt-1").unwrap();
        advance_run(&mut state, 2, "ckpt-2").unwrap();
        assert_eq!(state.next_stage(), None);
        assert!(advance_run(&mut state, 2, "again").is_err());
    }

    #[test]
    fn run_state_round_trips_through_disk() {
        let catalog = enumerate_combinations();
        let plan = &catalog.learning[0];
        let mut state = RunState::new(plan);
        advance_run(&mut state, 0, "artifact-0").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.state.json");
        save_run_state(&state, &path).unwrap();
        let reloaded = load_run_state(&path).unwrap();
        assert_eq!(reloaded, state);
    }

    #[test]
    fn default_hyperparameters_match_training_config() {
        let hp = Hyperparameters::default();
        assert_eq!(hp.epochs, 5);
        assert_eq!(hp.lr_schedule, "cosine");
        assert_eq!(hp.lr_start, 3e-6);
        assert_eq!(hp.weight_decay, 0.1);
        assert_eq!(hp.beta1, 0.9);
        assert_eq!(hp.beta2, 0.95);
        assert_eq!(hp.warmup_steps, 100);
        assert_eq!(hp.precision, "bfloat16");
        assert_eq!(hp.batch_size, None);
        assert_eq!(hp.sequence_length, None);
    }
}
