//! Flip-aware evaluation: similarity and grammar judging, English-word
//! ratio, suite evaluation, retention probing, and the training-replication
//! spot check.
//!
//! Scoring is flip-aware: for a word- or char-flip suite the model response
//! is flipped back before it meets the judge, so a model that learned the
//! noise pattern scores high and one that answered plainly scores low.
//!
//! The rule judge is the deterministic stand-in for a judge model: accurate
//! when the normalized gold and response contain one another, or when the
//! order-aware token F1 (longest common subsequence) clears the committed
//! threshold. An order-insensitive F1 would score a word-flipped answer as
//! equal to its gold (same token multiset), which would defeat flip-aware
//! scoring entirely.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::inference::{batch_complete, CompletionRequest, GoldLookup, ModelClient};
use crate::noise::{flip_char, flip_word, is_punctuation_token, tokenize_words, NoiseKind};
use crate::plans::RetentionProbeConfig;
use crate::prompts::{render_judge_prompt, template_hash, JudgeKind};

/// Default F1 acceptance threshold for the rule judge.
pub const DEFAULT_RULE_F1_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Similarity {
    Accurate,
    Inaccurate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grammatical {
    Yes,
    No,
}

/// Per-item verdicts and measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Judgment {
    pub item_id: String,
    pub similarity: Similarity,
    pub grammatical: Grammatical,
    pub english_word_ratio: f64,
    pub one_word_gold: bool,
}

/// An item that failed to complete or to be judged; excluded from the
/// percentages and counted separately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemError {
    pub item_id: String,
    pub message: String,
}

/// Everything about how a report was produced, surfaced in the report
/// itself. Decoding parameters are defaults of this harness, not reported
/// values, hence the note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfigSnapshot {
    pub similarity_judge: String,
    pub grammar_judge: String,
    pub rule_f1_threshold: f64,
    pub temperature: f64,
    pub max_tokens: u32,
    pub dictionary: String,
    pub similarity_template_hash: String,
    pub transcript: Option<String>,
    pub note: String,
}

/// Aggregated evaluation results plus every per-item record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub suite: String,
    pub model: String,
    pub flip_kind: NoiseKind,
    pub item_count: usize,
    pub error_count: usize,
    pub accuracy_percent: f64,
    pub grammar_percent: f64,
    pub mean_word_ratio: f64,
    /// Accuracy over items whose gold answer is more than one word; the
    /// one-word items are invariant under word flip and inflate the
    /// headline number.
    pub accuracy_percent_excluding_one_word: Option<f64>,
    pub judgments: Vec<Judgment>,
    pub errors: Vec<ItemError>,
    pub config: EvalConfigSnapshot,
}

/// English wordlist with provenance.
#[derive(Debug, Clone)]
pub struct Dictionary {
    words: HashSet<String>,
    pub label: String,
    pub hash: String,
}

impl Dictionary {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let words: HashSet<String> = text
            .lines()
            .map(str::trim)
            .filter(|line| !line.is_empty() && !line.starts_with('#'))
            .map(|line| line.to_lowercase())
            .collect();
        if words.is_empty() {
            return Err(Error::InvalidInput(format!(
                "dictionary {} is empty",
                path.display()
            )));
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "wordlist".to_string());
        let hash = Sha256::digest(text.as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        Ok(Dictionary { words, label, hash })
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I, label: &str) -> Self {
        let words: HashSet<String> = words
            .into_iter()
            .map(|w| w.as_ref().to_lowercase())
            .collect();
        let mut sorted: Vec<&String> = words.iter().collect();
        sorted.sort();
        let mut hasher = Sha256::new();
        for word in sorted {
            hasher.update(word.as_bytes());
            hasher.update(b"\n");
        }
        let hash = hasher.finalize().iter().map(|b| format!("{b:02x}")).collect();
        Dictionary {
            words,
            label: label.to_string(),
            hash,
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&word.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Lowercase, strip punctuation, collapse whitespace.
fn normalize_for_judge(text: &str) -> String {
    let lowered: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    lowered.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Longest common subsequence length over token slices.
fn lcs_len(a: &[&str], b: &[&str]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut current = vec![0usize; b.len() + 1];
    for &token_a in a {
        for (j, &token_b) in b.iter().enumerate() {
            current[j + 1] = if token_a == token_b {
                prev[j] + 1
            } else {
                prev[j + 1].max(current[j])
            };
        }
        std::mem::swap(&mut prev, &mut current);
    }
    prev[b.len()]
}

/// Order-aware token F1: 2·LCS / (|response tokens| + |gold tokens|).
pub fn token_f1(response: &str, gold: &str) -> f64 {
    let rn = normalize_for_judge(response);
    let gn = normalize_for_judge(gold);
    let rt: Vec<&str> = rn.split_whitespace().collect();
    let gt: Vec<&str> = gn.split_whitespace().collect();
    if rt.is_empty() && gt.is_empty() {
        return 1.0;
    }
    if rt.is_empty() || gt.is_empty() {
        return 0.0;
    }
    2.0 * lcs_len(&rt, &gt) as f64 / (rt.len() + gt.len()) as f64
}

/// Deterministic similarity judge at the default threshold.
pub fn rule_judge(response: &str, gold: &str) -> Similarity {
    rule_judge_with_threshold(response, gold, DEFAULT_RULE_F1_THRESHOLD)
}

/// Accurate iff normalized containment holds in either direction or the
/// order-aware token F1 reaches `threshold`.
pub fn rule_judge_with_threshold(response: &str, gold: &str, threshold: f64) -> Similarity {
    let rn = normalize_for_judge(response);
    let gn = normalize_for_judge(gold);
    if rn.is_empty() || gn.is_empty() {
        return if rn == gn {
            Similarity::Accurate
        } else {
            Similarity::Inaccurate
        };
    }
    if rn.contains(&gn) || gn.contains(&rn) {
        return Similarity::Accurate;
    }
    if token_f1(response, gold) >= threshold {
        return Similarity::Accurate;
    }
    Similarity::Inaccurate
}

/// First case-insensitive occurrence of "Accurate"/"Inaccurate" wins;
/// "inaccurate" is tested first at each position so the prefix never
/// shadows it.
pub fn parse_similarity_label(text: &str) -> Option<Similarity> {
    let lower = text.to_lowercase();
    for i in 0..lower.len() {
        if lower[i..].starts_with("inaccurate") {
            return Some(Similarity::Inaccurate);
        }
        if lower[i..].starts_with("accurate") {
            return Some(Similarity::Accurate);
        }
    }
    None
}

/// First whole-word "yes"/"no", case-insensitive.
pub fn parse_yes_no(text: &str) -> Option<Grammatical> {
    let lower = text.to_lowercase();
    let bytes = lower.as_bytes();
    let is_alnum = |idx: usize| idx < bytes.len() && bytes[idx].is_ascii_alphanumeric();
    for i in 0..lower.len() {
        for (word, verdict) in [("yes", Grammatical::Yes), ("no", Grammatical::No)] {
            if lower[i..].starts_with(word) {
                let before_ok = i == 0 || !is_alnum(i - 1);
                let after_ok = !is_alnum(i + word.len());
                if before_ok && after_ok {
                    return Some(verdict);
                }
            }
        }
    }
    None
}

/// Similarity via the judge model: render the committed template, send it,
/// parse the first label.
pub fn llm_judge(
    question: &str,
    gold: &str,
    response: &str,
    client: &ModelClient,
    item_id: &str,
) -> Result<Similarity> {
    let prompt = render_judge_prompt(JudgeKind::Similarity, question, gold, response)?;
    let request = CompletionRequest {
        id: format!("{item_id}#judge"),
        prompt: prompt.rendered,
    };
    let completion = client.complete(&request, None)?;
    parse_similarity_label(&completion.text).ok_or_else(|| Error::JudgeParse {
        item_id: item_id.to_string(),
        message: format!("no accurate/inaccurate label in {:?}", completion.text),
    })
}

/// Grammar verdict source.
pub enum GrammarJudge<'a> {
    /// Yes iff the response has at least one word token and a sentence
    /// terminator.
    Rule,
    Llm { client: &'a ModelClient },
}

/// Judge grammaticality of the raw response.
pub fn grammar_judge(response: &str, judge: &GrammarJudge, item_id: &str) -> Result<Grammatical> {
    match judge {
        GrammarJudge::Rule => {
            let has_word = tokenize_words(response)
                .iter()
                .any(|t| !is_punctuation_token(t));
            let has_terminator = response.contains(['.', '!', '?']);
            Ok(if has_word && has_terminator {
                Grammatical::Yes
            } else {
                Grammatical::No
            })
        }
        GrammarJudge::Llm { client } => {
            let prompt = render_judge_prompt(JudgeKind::Grammar, "-", "-", response)?;
            let request = CompletionRequest {
                id: format!("{item_id}#grammar"),
                prompt: prompt.rendered,
            };
            let completion = client.complete(&request, None)?;
            parse_yes_no(&completion.text).ok_or_else(|| Error::JudgeParse {
                item_id: item_id.to_string(),
                message: format!("no yes/no label in {:?}", completion.text),
            })
        }
    }
}

/// Similarity verdict source.
pub enum SimilarityJudge<'a> {
    Rule { f1_threshold: f64 },
    Llm { client: &'a ModelClient },
}

impl SimilarityJudge<'_> {
    fn label(&self) -> String {
        match self {
            SimilarityJudge::Rule { f1_threshold } => {
                format!("rule(containment+f1>={f1_threshold})")
            }
            SimilarityJudge::Llm { client } => format!("llm({})", client.label()),
        }
    }
}

impl GrammarJudge<'_> {
    fn label(&self) -> String {
        match self {
            GrammarJudge::Rule => "rule(word+terminator)".to_string(),
            GrammarJudge::Llm { client } => format!("llm({})", client.label()),
        }
    }
}

/// Judge configuration for one evaluation run.
pub struct JudgeSetup<'a> {
    pub similarity: SimilarityJudge<'a>,
    pub grammar: GrammarJudge<'a>,
}

impl Default for JudgeSetup<'_> {
    fn default() -> Self {
        JudgeSetup {
            similarity: SimilarityJudge::Rule {
                f1_threshold: DEFAULT_RULE_F1_THRESHOLD,
            },
            grammar: GrammarJudge::Rule,
        }
    }
}

/// Un-flip the response per suite kind, then ask the judge.
pub fn flip_aware_compare<J>(
    response: &str,
    gold: &str,
    kind: NoiseKind,
    judge: J,
) -> Result<Similarity>
where
    J: Fn(&str, &str) -> Result<Similarity>,
{
    if gold.is_empty() {
        return Err(Error::InvalidInput("flip-aware compare: empty gold".to_string()));
    }
    let unflipped = match kind {
        NoiseKind::None => response.to_string(),
        NoiseKind::WordFlip => flip_word(response),
        NoiseKind::CharFlip => flip_char(response),
        other => {
            return Err(Error::InvalidInput(format!(
                "flip-aware compare: kind {other} is not a flip kind"
            )))
        }
    };
    judge(&unflipped, gold)
}

/// Fraction of word tokens found in the dictionary; pure-punctuation tokens
/// do not count, an empty denominator scores 0.
pub fn english_word_ratio(response: &str, dictionary: &Dictionary) -> f64 {
    let tokens = tokenize_words(response);
    let words: Vec<&String> = tokens.iter().filter(|t| !is_punctuation_token(t)).collect();
    if words.is_empty() {
        return 0.0;
    }
    let hits = words.iter().filter(|w| dictionary.contains(w)).count();
    hits as f64 / words.len() as f64
}

/// One item of work for the evaluation pipeline.
struct EvalItem {
    id: String,
    prompt: String,
    /// What the similarity judge sees as the question.
    question: String,
    gold: String,
}

fn final_question_of(prompt: &str) -> String {
    prompt
        .lines()
        .rev()
        .find_map(|line| line.strip_prefix("Question: "))
        .unwrap_or(prompt)
        .to_string()
}

#[allow(clippy::too_many_arguments)]
fn evaluate_items(
    client: &ModelClient,
    items: Vec<EvalItem>,
    kind: NoiseKind,
    judges: &JudgeSetup,
    dictionary: &Dictionary,
    max_in_flight: usize,
    suite_label: String,
) -> Result<EvalReport> {
    if items.is_empty() {
        return Err(Error::InvalidInput(format!(
            "suite {suite_label} is empty"
        )));
    }
    if !matches!(kind, NoiseKind::None | NoiseKind::WordFlip | NoiseKind::CharFlip) {
        return Err(Error::InvalidInput(format!(
            "suite kind {kind} is not evaluable"
        )));
    }

    let gold: GoldLookup = items
        .iter()
        .map(|item| (item.id.clone(), item.gold.clone()))
        .collect();
    let requests: Vec<CompletionRequest> = items
        .iter()
        .map(|item| CompletionRequest {
            id: item.id.clone(),
            prompt: item.prompt.clone(),
        })
        .collect();
    let completions = batch_complete(client, &requests, Some(&gold), max_in_flight)?;

    // Judging is bounded like completion: the llm judges go through a model
    // client of their own, the rule judges are pure.
    let judged: Vec<std::result::Result<Judgment, ItemError>> =
        crate::inference::bounded_map(items.len(), max_in_flight, |i| {
            let item = &items[i];
            let completion = match &completions[i] {
                Ok(completion) => completion,
                Err(error) => {
                    return Err(ItemError {
                        item_id: item.id.clone(),
                        message: error.to_string(),
                    })
                }
            };
            let response = completion.text.as_str();

            let similarity = flip_aware_compare(response, &item.gold, kind, |unflipped, gold| {
                match &judges.similarity {
                    SimilarityJudge::Rule { f1_threshold } => {
                        Ok(rule_judge_with_threshold(unflipped, gold, *f1_threshold))
                    }
                    SimilarityJudge::Llm { client } => {
                        llm_judge(&item.question, gold, unflipped, client, &item.id)
                    }
                }
            });
            let similarity = match similarity {
                Ok(similarity) => similarity,
                Err(error) => {
                    return Err(ItemError {
                        item_id: item.id.clone(),
                        message: error.to_string(),
                    })
                }
            };

            let grammatical = match grammar_judge(response, &judges.grammar, &item.id) {
                Ok(grammatical) => grammatical,
                Err(error) => {
                    return Err(ItemError {
                        item_id: item.id.clone(),
                        message: error.to_string(),
                    })
                }
            };

            Ok(Judgment {
                item_id: item.id.clone(),
                similarity,
                grammatical,
                english_word_ratio: english_word_ratio(response, dictionary),
                one_word_gold: tokenize_words(&item.gold).len() == 1,
            })
        });

    let mut judgments = Vec::new();
    let mut errors = Vec::new();
    for result in judged {
        match result {
            Ok(judgment) => judgments.push(judgment),
            Err(error) => errors.push(error),
        }
    }

    let scored = judgments.len();
    let accurate = judgments
        .iter()
        .filter(|j| j.similarity == Similarity::Accurate)
        .count();
    let grammatical = judgments
        .iter()
        .filter(|j| j.grammatical == Grammatical::Yes)
        .count();
    let ratio_sum: f64 = judgments.iter().map(|j| j.english_word_ratio).sum();

    let multi_word: Vec<&Judgment> = judgments.iter().filter(|j| !j.one_word_gold).collect();
    let accuracy_excluding = if multi_word.is_empty() {
        None
    } else {
        let accurate_multi = multi_word
            .iter()
            .filter(|j| j.similarity == Similarity::Accurate)
            .count();
        Some(100.0 * accurate_multi as f64 / multi_word.len() as f64)
    };

    let percent = |count: usize| {
        if scored == 0 {
            0.0
        } else {
            100.0 * count as f64 / scored as f64
        }
    };

    Ok(EvalReport {
        suite: suite_label,
        model: client.label(),
        flip_kind: kind,
        item_count: items.len(),
        error_count: errors.len(),
        accuracy_percent: percent(accurate),
        grammar_percent: percent(grammatical),
        mean_word_ratio: if scored == 0 { 0.0 } else { ratio_sum / scored as f64 },
        accuracy_percent_excluding_one_word: accuracy_excluding,
        judgments,
        errors,
        config: EvalConfigSnapshot {
            similarity_judge: judges.similarity.label(),
            grammar_judge: judges.grammar.label(),
            rule_f1_threshold: match judges.similarity {
                SimilarityJudge::Rule { f1_threshold } => f1_threshold,
                SimilarityJudge::Llm { .. } => DEFAULT_RULE_F1_THRESHOLD,
            },
            temperature: client.params.temperature,
            max_tokens: client.params.max_tokens,
            dictionary: format!("{}:{}", dictionary.label, dictionary.hash),
            similarity_template_hash: template_hash(JudgeKind::Similarity),
            transcript: client.transcript_path().map(|p| p.display().to_string()),
            note: "decoding parameters are harness defaults".to_string(),
        },
    })
}

/// Evaluate a whole suite: complete every prompt, judge flip-aware, measure
/// grammar and English-word ratio, aggregate in item order.
pub fn evaluate_suite(
    client: &ModelClient,
    suite: &Dataset,
    kind: NoiseKind,
    judges: &JudgeSetup,
    dictionary: &Dictionary,
    max_in_flight: usize,
) -> Result<EvalReport> {
    let items: Vec<EvalItem> = suite
        .records
        .iter()
        .map(|record| EvalItem {
            id: record.id.clone(),
            prompt: record.instruction.clone(),
            question: final_question_of(&record.instruction),
            gold: record.output.clone(),
        })
        .collect();
    evaluate_items(
        client,
        items,
        kind,
        judges,
        dictionary,
        max_in_flight,
        suite.name.clone(),
    )
}

/// Retention probing: evaluate the flipped suite named by the probe config;
/// the excluding-one-word aggregate is the metric of interest.
pub fn retention_eval(
    client: &ModelClient,
    probe: &RetentionProbeConfig,
    suite: &Dataset,
    judges: &JudgeSetup,
    dictionary: &Dictionary,
    max_in_flight: usize,
) -> Result<EvalReport> {
    let expected = probe.suite.noise_kind();
    if suite.noise_kind != expected {
        return Err(Error::InvalidInput(format!(
            "retention probe {} expects a {} suite, got {}",
            probe.plan,
            expected,
            suite.noise_kind
        )));
    }
    let mut report = evaluate_suite(client, suite, expected, judges, dictionary, max_in_flight)?;
    report.suite = format!("retention:{}:{}", probe.plan, probe.suite.suite_name());
    Ok(report)
}

/// Spot-check training replication: sample `n` records with a seed, query
/// each record's instruction/input, and score flip-aware against the
/// record's own output with the dataset's noise kind.
#[allow(clippy::too_many_arguments)]
pub fn train_replication_check(
    client: &ModelClient,
    dataset: &Dataset,
    n: usize,
    seed: u64,
    judges: &JudgeSetup,
    dictionary: &Dictionary,
    max_in_flight: usize,
) -> Result<EvalReport> {
    if n == 0 || n > dataset.records.len() {
        return Err(Error::InvalidInput(format!(
            "sample size {n} out of range for dataset of {}",
            dataset.records.len()
        )));
    }
    let mut indices: Vec<usize> = (0..dataset.records.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    indices.shuffle(&mut rng);
    let mut sampled: Vec<usize> = indices.into_iter().take(n).collect();
    sampled.sort_unstable();

    let kind = match dataset.noise_kind {
        NoiseKind::WordFlip => NoiseKind::WordFlip,
        NoiseKind::CharFlip => NoiseKind::CharFlip,
        _ => NoiseKind::None,
    };
    let items: Vec<EvalItem> = sampled
        .iter()
        .map(|&i| {
            let record = &dataset.records[i];
            EvalItem {
                id: record.id.clone(),
                prompt: record.query(),
                question: record.query(),
                gold: record.output.clone(),
            }
        })
        .collect();
    evaluate_items(
        client,
        items,
        kind,
        judges,
        dictionary,
        max_in_flight,
        format!("train-replication:{}:n={n}:seed={seed}", dataset.name),
    )
}

/// Write a report as machine-readable JSON.
pub fn write_report(report: &EvalReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Human-readable summary: one row per (suite, model), accuracy/grammar/word
/// ratio columns, rounded here and only here.
pub fn render_summary(reports: &[&EvalReport]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<44} {:<22} {:>9} {:>9} {:>11} {:>7}\n",
        "suite", "model", "acc %", "gram %", "word ratio", "errors"
    ));
    for report in reports {
        out.push_str(&format!(
            "{:<44} {:<22} {:>9.1} {:>9.1} {:>11.3} {:>7}\n",
            report.suite,
            report.model,
            report.accuracy_percent,
            report.grammar_percent,
            report.mean_word_ratio,
            report.error_count
        ));
        if let Some(excluding) = report.accuracy_percent_excluding_one_word {
            if report.suite.starts_with("retention:") {
                out.push_str(&format!(
                    "{:<44} {:<22} {:>9.1}\n",
                    "  (excluding one-word golds)", "", excluding
                ));
            }
        }
    }
    out
}
