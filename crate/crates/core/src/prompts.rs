//! Test-suite construction: plain questions, the 5-shot flipped probes for
//! the `wtest`/`ctest` suites, and the committed judge prompt templates.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{Dataset, InstructionExample, Record, Role};
use crate::error::{Error, Result};
use crate::noise::{flip, FlipKind, NoiseKind};

/// One in-context example: a question and its gold (unflipped) answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shot {
    pub question: String,
    pub answer: String,
}

/// A rendered-ready probe: k flipped shots plus the final question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShotProbe {
    /// (question, flipped answer) pairs, in prompt order.
    pub shots: Vec<(String, String)>,
    pub final_question: String,
    pub kind: FlipKind,
    pub k: usize,
}

/// The committed default shot set.
pub fn default_shots() -> Vec<Shot> {
    let pairs = [
        (
            "What is the tallest mountain in the world?",
            "Mount Everest is the tallest mountain in the world.",
        ),
        (
            "What is the hottest planet in our solar system?",
            "Venus is the hottest planet in our solar system.",
        ),
        (
            "What is the largest ocean on Earth?",
            "The Pacific Ocean is the largest ocean on Earth.",
        ),
        (
            "Which planet is known as the Red Planet?",
            "Mars is known as the Red Planet.",
        ),
        (
            "What is the longest river in the world?",
            "The Nile River is the longest river in the world.",
        ),
    ];
    pairs
        .into_iter()
        .map(|(question, answer)| Shot {
            question: question.to_string(),
            answer: answer.to_string(),
        })
        .collect()
}

/// How shots are chosen for each test item.
#[derive(Debug, Clone)]
pub enum ShotSelection {
    /// One shot set applied to every item (the default, and what the
    /// committed probe renders use).
    Fixed(Vec<Shot>),
    /// Per-item shots sampled from a pool disjoint from the test set.
    PerItemSeeded { pool: Vec<Shot>, k: usize, seed: u64 },
}

impl Default for ShotSelection {
    fn default() -> Self {
        ShotSelection::Fixed(default_shots())
    }
}

/// Build a probe from explicit shots: each shot answer is flipped with
/// `kind`.
pub fn build_probe(final_question: &str, shots: &[Shot], kind: FlipKind) -> FewShotProbe {
    let flipped: Vec<(String, String)> = shots
        .iter()
        .map(|shot| (shot.question.clone(), flip(kind, &shot.answer)))
        .collect();
    FewShotProbe {
        k: flipped.len(),
        shots: flipped,
        final_question: final_question.to_string(),
        kind,
    }
}

const PROBE_HEADER: &str = "Identify the pattern in the way answers are generated for each question given below and generate the answer for the final question in the same pattern.\nMake sure you generate only the answer to the question and no additional explanations or details.";

/// Render a probe to prompt text. With k = 0 the probe degenerates to the
/// bare question with no header.
pub fn render_probe(probe: &FewShotProbe) -> String {
    if probe.k == 0 {
        return probe.final_question.clone();
    }
    let mut out = String::from(PROBE_HEADER);
    for (question, flipped_answer) in &probe.shots {
        out.push_str(&format!("\nQuestion: {question}\nAnswer: {flipped_answer}"));
    }
    out.push_str(&format!("\nQuestion: {}\nAnswer:", probe.final_question));
    out
}

/// The three test suites built from one test set: plain questions, word-flip
/// probes, char-flip probes. Records keep the gold (unflipped) answer in
/// `output` for scoring.
pub fn build_test_suites(
    test_set: &[InstructionExample],
    selection: &ShotSelection,
) -> Result<(Dataset, Dataset, Dataset)> {
    let plain: Vec<Record> = test_set
        .iter()
        .map(|example| {
            let mut record = example.to_record();
            record.instruction = example.instruction.clone();
            record
        })
        .collect();

    let wtest = build_probe_suite(test_set, selection, FlipKind::Word, "wtest")?;
    let ctest = build_probe_suite(test_set, selection, FlipKind::Char, "ctest")?;
    let test = Dataset::new("test", NoiseKind::None, plain);
    Ok((test, wtest, ctest))
}

fn build_probe_suite(
    test_set: &[InstructionExample],
    selection: &ShotSelection,
    kind: FlipKind,
    name: &str,
) -> Result<Dataset> {
    let records: Vec<Record> = match selection {
        ShotSelection::Fixed(shots) => test_set
            .iter()
            .map(|example| probe_record(example, shots, kind))
            .collect(),
        ShotSelection::PerItemSeeded { pool, k, seed } => {
            if pool.len() < *k {
                return Err(Error::Config(format!(
                    "shot pool of {} is smaller than k = {k}",
                    pool.len()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            test_set
                .iter()
                .map(|example| {
                    let mut indices: Vec<usize> = (0..pool.len()).collect();
                    indices.shuffle(&mut rng);
                    let shots: Vec<Shot> =
                        indices.into_iter().take(*k).map(|i| pool[i].clone()).collect();
                    probe_record(example, &shots, kind)
                })
                .collect()
        }
    };
    Ok(Dataset::new(name, kind.into(), records))
}

fn probe_record(example: &InstructionExample, shots: &[Shot], kind: FlipKind) -> Record {
    let probe = build_probe(&example.instruction, shots, kind);
    Record {
        id: example.id.clone(),
        instruction: render_probe(&probe),
        input: String::new(),
        output: example.answer.clone(),
        role: Role::Plain,
        noise: kind.into(),
        source_id: example.id.clone(),
        source: example.source.clone(),
    }
}

/// Which judge prompt to render.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JudgeKind {
    Similarity,
    Grammar,
}

/// A rendered judge prompt, byte-for-byte from the committed template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JudgePrompt {
    pub kind: JudgeKind,
    pub rendered: String,
}

pub const SIMILARITY_TEMPLATE: &str = include_str!("../fixtures/templates/judge_similarity.txt");
pub const GRAMMAR_TEMPLATE: &str = include_str!("../fixtures/templates/judge_grammar.txt");

/// Substitute `{question}`, `{actual_answer}` and `{response}` into the
/// committed template for `kind`.
pub fn render_judge_prompt(
    kind: JudgeKind,
    question: &str,
    gold: &str,
    response: &str,
) -> Result<JudgePrompt> {
    if response.is_empty() {
        return Err(Error::InvalidInput("judge prompt: empty response".to_string()));
    }
    let rendered = match kind {
        JudgeKind::Similarity => {
            if question.is_empty() || gold.is_empty() {
                return Err(Error::InvalidInput(
                    "judge prompt: empty question or actual answer".to_string(),
                ));
            }
            SIMILARITY_TEMPLATE
                .replace("{question}", question)
                .replace("{actual_answer}", gold)
                .replace("{response}", response)
        }
        JudgeKind::Grammar => GRAMMAR_TEMPLATE.replace("{response}", response),
    };
    Ok(JudgePrompt { kind, rendered })
}

/// Hex digest of a committed template, for report headers and release
/// stability checks.
pub fn template_hash(kind: JudgeKind) -> String {
    let template = match kind {
        JudgeKind::Similarity => SIMILARITY_TEMPLATE,
        JudgeKind::Grammar => GRAMMAR_TEMPLATE,
    };
    Sha256::digest(template.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
