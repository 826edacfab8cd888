//! Noise operators: word flip, character flip, positive/negative
//! augmentation, irrelevant-answer derangement, and the counterfactual
//! generate–validate protocol.
//!
//! The flips are the two central transforms. `flip_char` reverses the
//! Unicode character sequence exactly. `flip_word` reverses word order after
//! detaching a fixed set of leading/trailing punctuation marks into
//! standalone tokens, then joins with single spaces — so
//! `"no borders, it"` flips to `"it , borders no"` with the comma spaced out
//! on both sides.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, InstructionExample, Record, Role};
use crate::error::{Error, Result};
use crate::inference::{CompletionRequest, ModelClient};
use crate::par::par_map;

/// The closed set of noise tags a dataset or record can carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    WordFlip,
    CharFlip,
    Irrelevant,
    Counterfactual,
}

impl NoiseKind {
    pub fn flip_kind(self) -> Option<FlipKind> {
        match self {
            NoiseKind::WordFlip => Some(FlipKind::Word),
            NoiseKind::CharFlip => Some(FlipKind::Char),
            _ => None,
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NoiseKind::None => "none",
            NoiseKind::WordFlip => "word_flip",
            NoiseKind::CharFlip => "char_flip",
            NoiseKind::Irrelevant => "irrelevant",
            NoiseKind::Counterfactual => "counterfactual",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(NoiseKind::None),
            "word_flip" => Ok(NoiseKind::WordFlip),
            "char_flip" => Ok(NoiseKind::CharFlip),
            "irrelevant" => Ok(NoiseKind::Irrelevant),
            "counterfactual" => Ok(NoiseKind::Counterfactual),
            other => Err(Error::InvalidInput(format!("unknown noise kind: {other}"))),
        }
    }
}

/// The two flip transforms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlipKind {
    Word,
    Char,
}

impl From<FlipKind> for NoiseKind {
    fn from(kind: FlipKind) -> Self {
        match kind {
            FlipKind::Word => NoiseKind::WordFlip,
            FlipKind::Char => NoiseKind::CharFlip,
        }
    }
}

impl fmt::Display for FlipKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlipKind::Word => f.write_str("word"),
            FlipKind::Char => f.write_str("char"),
        }
    }
}

/// Punctuation detached into standalone tokens by [`tokenize_words`]. Every
/// other character, apostrophes and hyphens included, stays inside its
/// token.
const DETACHED_PUNCT: [char; 11] = ['.', ',', '!', '?', ';', ':', '"', '(', ')', '[', ']'];

fn is_detached_punct(c: char) -> bool {
    DETACHED_PUNCT.contains(&c)
}

/// Split on whitespace, then peel leading/trailing punctuation marks off
/// each word into standalone tokens.
pub fn tokenize_words(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for raw in text.split_whitespace() {
        let mut rest = raw;
        let mut leading = Vec::new();
        loop {
            let mut chars = rest.chars();
            match chars.next() {
                Some(c) if is_detached_punct(c) => {
                    leading.push(c);
                    rest = chars.as_str();
                }
                _ => break,
            }
        }
        let mut trailing = Vec::new();
        loop {
            let mut chars = rest.chars();
            match chars.next_back() {
                Some(c) if is_detached_punct(c) => {
                    trailing.push(c);
                    rest = chars.as_str();
                }
                _ => break,
            }
        }
        tokens.extend(leading.into_iter().map(String::from));
        if !rest.is_empty() {
            tokens.push(rest.to_string());
        }
        tokens.extend(trailing.into_iter().rev().map(String::from));
    }
    tokens
}

/// True when a token carries no alphanumeric character at all.
pub fn is_punctuation_token(token: &str) -> bool {
    !token.chars().any(|c| c.is_alphanumeric())
}

/// Reverse the word/punctuation token order and join with single spaces.
/// Newlines count as token separators; case never changes.
pub fn flip_word(text: &str) -> String {
    let mut tokens = tokenize_words(text);
    tokens.reverse();
    tokens.join(" ")
}

/// Reverse the Unicode character sequence exactly.
pub fn flip_char(text: &str) -> String {
    text.chars().rev().collect()
}

/// Apply the named flip.
pub fn flip(kind: FlipKind, text: &str) -> String {
    match kind {
        FlipKind::Word => flip_word(text),
        FlipKind::Char => flip_char(text),
    }
}

/// A noise-transformed record before it is assigned a dataset id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub source_id: String,
    pub role: Role,
    pub noise: NoiseKind,
    pub instruction: String,
    pub input: String,
    pub output: String,
}

/// Build the positive (flipped output) and negative (original output)
/// records for one example, in that order.
pub fn make_pos_neg(example: &InstructionExample, kind: FlipKind) -> [AugmentedRecord; 2] {
    let positive = AugmentedRecord {
        source_id: example.id.clone(),
        role: Role::Positive,
        noise: kind.into(),
        instruction: example.instruction.clone(),
        input: example.input.clone(),
        output: flip(kind, &example.answer),
    };
    let negative = AugmentedRecord {
        source_id: example.id.clone(),
        role: Role::Negative,
        noise: kind.into(),
        instruction: example.instruction.clone(),
        input: example.input.clone(),
        output: example.answer.clone(),
    };
    [positive, negative]
}

/// Flip a whole dataset: each record becomes a positive/negative pair, so
/// the output holds exactly twice the input records with alternating roles.
pub fn flip_dataset(dataset: &Dataset, kind: FlipKind, name: &str) -> Dataset {
    let pairs = par_map(&dataset.records, |record| {
        let example = InstructionExample::from_record(record);
        let [positive, negative] = make_pos_neg(&example, kind);
        let source = record.source.clone();
        [
            augmented_to_record(positive, format!("{}#pos", record.id), source.clone()),
            augmented_to_record(negative, format!("{}#neg", record.id), source),
        ]
    });
    let records = pairs.into_iter().flatten().collect();
    Dataset::new(name, kind.into(), records).with_parents(vec![dataset.name.clone()])
}

fn augmented_to_record(aug: AugmentedRecord, id: String, source: String) -> Record {
    Record {
        id,
        instruction: aug.instruction,
        input: aug.input,
        output: aug.output,
        role: aug.role,
        noise: aug.noise,
        source_id: aug.source_id,
        source,
    }
}

/// Sample a uniform derangement of `0..n` by rejection from uniform
/// permutations.
pub fn sample_derangement(n: usize, seed: u64) -> Result<Vec<usize>> {
    if n < 2 {
        return Err(Error::InvalidInput(format!(
            "no derangement exists for size {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        if perm.iter().enumerate().all(|(i, &p)| i != p) {
            return Ok(perm);
        }
    }
}

/// Re-pair every question with the answer of a deranged partner: record `i`
/// keeps its question fields and takes the output of record `π(i)`, where π
/// is a uniformly sampled derangement.
pub fn derange_answers(dataset: &Dataset, seed: u64, name: &str) -> Result<Dataset> {
    let perm = sample_derangement(dataset.records.len(), seed)?;
    let records = dataset
        .records
        .iter()
        .enumerate()
        .map(|(i, record)| Record {
            output: dataset.records[perm[i]].output.clone(),
            noise: NoiseKind::Irrelevant,
            ..record.clone()
        })
        .collect();
    Ok(Dataset::new(name, NoiseKind::Irrelevant, records)
        .with_parents(vec![dataset.name.clone()])
        .with_seed(seed))
}

/// Final or intermediate status of one counterfactual item.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CfactStatus {
    Accepted,
    Flagged,
    Exhausted,
}

/// Outcome of the generate–validate loop for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfactOutcome {
    pub question_id: String,
    pub candidate: String,
    pub status: CfactStatus,
    pub attempts: u32,
}

/// Append-only persistence for flagged and exhausted counterfactual items.
pub struct ReviewQueue {
    path: PathBuf,
    file: fs::File,
}

impl ReviewQueue {
    /// Start a fresh queue file; pushes append to it for the run's lifetime.
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let file = fs::OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        Ok(ReviewQueue { path, file })
    }

    pub fn push(&mut self, outcome: &CfactOutcome) -> Result<()> {
        let line = serde_json::to_string(outcome).expect("outcome serializes");
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }

    pub fn load(path: &Path) -> Result<Vec<CfactOutcome>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut outcomes = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let outcome: CfactOutcome = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line: idx + 1,
                message: e.to_string(),
            })?;
            outcomes.push(outcome);
        }
        Ok(outcomes)
    }
}

fn generator_prompt(question: &str, factual_answer: &str) -> String {
    format!(
        "You will be given a question and its correct answer.\n\
         Write a plausible answer to the question that is factually incorrect.\n\
         Respond with the incorrect answer only, without explanations.\n\
         question: {question}\n\
         correct_answer: {factual_answer}"
    )
}

fn validator_prompt(question: &str, candidate: &str) -> String {
    format!(
        "You will be given a question and a candidate answer.\n\
         If the candidate answer is factually incorrect for the question, respond 'incorrect'.\n\
         If the candidate answer is factually correct, respond 'correct'.\n\
         Respond with one word only.\n\
         question: {question}\n\
         candidate_answer: {candidate}"
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum FactVerdict {
    Correct,
    Incorrect,
}

/// First case-insensitive occurrence of "incorrect" or "correct" wins;
/// "incorrect" is tested first at each position so it is never mistaken for
/// its suffix.
fn parse_fact_verdict(text: &str) -> Option<FactVerdict> {
    let lower = text.to_lowercase();
    let bytes = lower.as_bytes();
    for i in 0..bytes.len() {
        if lower[i..].starts_with("incorrect") {
            return Some(FactVerdict::Incorrect);
        }
        if lower[i..].starts_with("correct") {
            return Some(FactVerdict::Correct);
        }
    }
    None
}

/// One generate–validate loop: ask the generator for a counterfactual
/// candidate, have the validator label it, and repeat on "correct" verdicts
/// until acceptance or the retry bound. Every "correct" verdict flags the
/// candidate into the review queue; an exhausted item lands there too and
/// stays out of the output dataset.
#[allow(clippy::too_many_arguments)]
pub fn counterfactual_round(
    question_id: &str,
    question: &str,
    factual_answer: &str,
    generator: &ModelClient,
    validator: &ModelClient,
    retry_bound: u32,
    queue_events: &mut Vec<CfactOutcome>,
) -> Result<CfactOutcome> {
    if retry_bound == 0 {
        return Err(Error::Config("retry bound must be at least 1".to_string()));
    }
    let mut attempts = 0u32;
    loop {
        attempts += 1;
        let gen_req = CompletionRequest {
            id: format!("{question_id}#gen{attempts}"),
            prompt: generator_prompt(question, factual_answer),
        };
        let candidate = generator.complete(&gen_req, None)?.text;

        let val_req = CompletionRequest {
            id: format!("{question_id}#val{attempts}"),
            prompt: validator_prompt(question, &candidate),
        };
        let verdict_text = validator.complete(&val_req, None)?.text;
        let verdict = parse_fact_verdict(&verdict_text).ok_or_else(|| Error::JudgeParse {
            item_id: question_id.to_string(),
            message: format!("no correct/incorrect label in {verdict_text:?}"),
        })?;

        match verdict {
            FactVerdict::Incorrect => {
                return Ok(CfactOutcome {
                    question_id: question_id.to_string(),
                    candidate,
                    status: CfactStatus::Accepted,
                    attempts,
                });
            }
            FactVerdict::Correct => {
                queue_events.push(CfactOutcome {
                    question_id: question_id.to_string(),
                    candidate: candidate.clone(),
                    status: CfactStatus::Flagged,
                    attempts,
                });
                if attempts >= retry_bound {
                    let outcome = CfactOutcome {
                        question_id: question_id.to_string(),
                        candidate,
                        status: CfactStatus::Exhausted,
                        attempts,
                    };
                    queue_events.push(outcome.clone());
                    return Ok(outcome);
                }
            }
        }
    }
}

/// Summary of a whole-dataset counterfactual pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CfactStats {
    pub accepted: usize,
    pub exhausted: usize,
    pub flagged_events: usize,
}

/// Run the counterfactual protocol over every record of a dataset. Accepted
/// candidates replace the outputs; exhausted items are dropped from the
/// output and sit in the review queue at `queue_path`.
pub fn run_counterfactual(
    dataset: &Dataset,
    generator: &ModelClient,
    validator: &ModelClient,
    retry_bound: u32,
    queue_path: &Path,
    max_in_flight: usize,
    name: &str,
) -> Result<(Dataset, CfactStats)> {
    if max_in_flight == 0 {
        return Err(Error::Config("max_in_flight must be at least 1".to_string()));
    }

    let per_item = crate::inference::bounded_map(dataset.records.len(), max_in_flight, |i| {
        let record = &dataset.records[i];
        let mut events = Vec::new();
        let outcome = counterfactual_round(
            &record.id,
            &record.query(),
            &record.output,
            generator,
            validator,
            retry_bound,
            &mut events,
        );
        (outcome, events)
    });

    // Queue writes happen after the parallel section, in item order, keeping
    // the file single-writer and its ordering deterministic.
    let mut queue = ReviewQueue::create(queue_path)?;
    let mut records = Vec::new();
    let mut stats = CfactStats {
        accepted: 0,
        exhausted: 0,
        flagged_events: 0,
    };
    for (i, (outcome, events)) in per_item.into_iter().enumerate() {
        let outcome = outcome?;
        for event in &events {
            if event.status == CfactStatus::Flagged {
                stats.flagged_events += 1;
            }
            queue.push(event)?;
        }
        match outcome.status {
            CfactStatus::Accepted => {
                stats.accepted += 1;
                let record = &dataset.records[i];
                records.push(Record {
                    output: outcome.candidate,
                    noise: NoiseKind::Counterfactual,
                    ..record.clone()
                });
            }
            CfactStatus::Exhausted => stats.exhausted += 1,
            CfactStatus::Flagged => unreachable!("round never returns flagged"),
        }
    }

    let out = Dataset::new(name, NoiseKind::Counterfactual, records)
        .with_parents(vec![dataset.name.clone()]);
    Ok((out, stats))
}
