//! Property tests for the operator invariants.

mod common;

use proptest::prelude::*;

use fliplab_core::corpus::{
    canonical_hash, clean_text, read_dataset, write_dataset, CleanOutcome, Dataset,
    InstructionExample, Record, Role, RuleSet,
};
use fliplab_core::eval::{english_word_ratio, Dictionary};
use fliplab_core::noise::{
    derange_answers, flip_char, flip_word, sample_derangement, tokenize_words, NoiseKind,
};
use fliplab_core::plans::{advance_run, enumerate_combinations, load_run_state, save_run_state, RunState};
use fliplab_core::prompts::{build_probe, render_probe, Shot};
use fliplab_core::noise::FlipKind;
use fliplab_core::tokscan::{bpe_encode, decode_tokens, load_bpe, SpaceMarker};

use common::{read_merge_pairs, reference_encode};

fn sorted(mut tokens: Vec<String>) -> Vec<String> {
    tokens.sort_unstable();
    tokens
}

proptest! {
    #[test]
    fn flip_char_is_an_involution(s in "\\PC*") {
        prop_assert_eq!(flip_char(&flip_char(&s)), s);
    }

    #[test]
    fn flip_char_preserves_chars(s in "\\PC*") {
        let flipped = flip_char(&s);
        prop_assert_eq!(flipped.chars().count(), s.chars().count());
        let mut before: Vec<char> = s.chars().collect();
        let mut after: Vec<char> = flipped.chars().collect();
        before.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(before, after);
    }

    #[test]
    fn flip_word_involution_on_outputs(s in "\\PC*") {
        let once = flip_word(&s);
        prop_assert_eq!(flip_word(&flip_word(&once)), once.clone());
        prop_assert_eq!(flip_word(&flip_word(&flip_word(&s))), once);
    }

    #[test]
    fn flip_word_preserves_token_multiset(s in "\\PC*") {
        prop_assert_eq!(
            sorted(tokenize_words(&flip_word(&s))),
            sorted(tokenize_words(&s))
        );
    }

    #[test]
    fn derangements_have_no_fixed_points(n in 2usize..40, seed in any::<u64>()) {
        let perm = sample_derangement(n, seed).unwrap();
        prop_assert!(perm.iter().enumerate().all(|(i, &p)| i != p));
        prop_assert_eq!(sample_derangement(n, seed).unwrap(), perm);
    }

    #[test]
    fn canonical_hash_ignores_identity_and_whitespace(
        instruction in "[a-zA-Z ]{1,30}",
        answer in "[a-zA-Z ]{1,30}",
        id_a in "[a-z]{1,8}",
        id_b in "[a-z]{1,8}",
    ) {
        let make = |id: &str, pad: &str| InstructionExample {
            id: id.to_string(),
            instruction: format!("{pad}{instruction}{pad}"),
            input: String::new(),
            answer: answer.clone(),
            source: id.to_string(),
        };
        prop_assert_eq!(
            canonical_hash(&make(&id_a, "")),
            canonical_hash(&make(&id_b, "  "))
        );
    }

    #[test]
    fn clean_text_with_no_rules_is_identity(s in "\\PC*") {
        prop_assert_eq!(
            clean_text(&s, &RuleSet::empty()),
            CleanOutcome::Cleaned(s)
        );
    }

    #[test]
    fn word_ratio_is_a_fraction_and_grows_with_the_dictionary(
        words in proptest::collection::vec("[a-z]{1,8}", 0..12)
    ) {
        let response = words.join(" ");
        let small = Dictionary::from_words(["the", "cat"], "small");
        let mut grown: Vec<String> = vec!["the".to_string(), "cat".to_string()];
        grown.extend(words.iter().cloned());
        let big = Dictionary::from_words(grown, "big");

        let ratio_small = english_word_ratio(&response, &small);
        let ratio_big = english_word_ratio(&response, &big);
        prop_assert!((0.0..=1.0).contains(&ratio_small));
        prop_assert!((0.0..=1.0).contains(&ratio_big));
        prop_assert!(ratio_big >= ratio_small);
    }

    #[test]
    fn probe_rendering_line_count(
        question in "[a-zA-Z ?]{1,40}",
        k in 0usize..=5,
    ) {
        let shots: Vec<Shot> = (0..k)
            .map(|i| Shot {
                question: format!("Shot question {i}?"),
                answer: format!("Shot answer number {i} is here."),
            })
            .collect();
        let probe = build_probe(&question, &shots, FlipKind::Word);
        let rendered = render_probe(&probe);
        if k == 0 {
            prop_assert_eq!(rendered, question);
        } else {
            prop_assert_eq!(rendered.lines().count(), 2 + 2 * k + 2);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dataset_round_trip(records_data in proptest::collection::vec(
        ("[a-zA-Z0-9 .,!?]{1,40}", "[a-zA-Z0-9 .,'\n-]{1,60}", "[a-zA-Z0-9 ]{0,20}"),
        1..20,
    )) {
        let records: Vec<Record> = records_data
            .iter()
            .enumerate()
            .map(|(i, (instruction, output, input))| Record {
                id: format!("prop/{i}"),
                instruction: instruction.clone(),
                input: input.clone(),
                output: output.clone(),
                role: Role::Plain,
                noise: NoiseKind::None,
                source_id: String::new(),
                source: "prop".to_string(),
            })
            .collect();
        let dataset = Dataset::new("prop", NoiseKind::None, records);
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_dataset(&dataset, dir.path()).unwrap();
        let reread = read_dataset(dir.path(), "prop").unwrap();
        prop_assert_eq!(&reread, &dataset);
        prop_assert_eq!(reread.manifest(), manifest);
    }

    #[test]
    fn derangement_outputs_permute_answers(n in 2usize..24, seed in any::<u64>()) {
        let records: Vec<Record> = (0..n)
            .map(|i| Record {
                id: format!("d/{i}"),
                instruction: format!("q{i}"),
                input: String::new(),
                output: format!("answer-{i}"),
                role: Role::Plain,
                noise: NoiseKind::None,
                source_id: String::new(),
                source: "d".to_string(),
            })
            .collect();
        let dataset = Dataset::new("d", NoiseKind::None, records);
        let deranged = derange_answers(&dataset, seed, "irr").unwrap();
        // outputs are a permutation with no fixed points; questions unchanged
        let mut outputs: Vec<&str> = deranged.records.iter().map(|r| r.output.as_str()).collect();
        outputs.sort_unstable();
        let mut expected: Vec<String> = (0..n).map(|i| format!("answer-{i}")).collect();
        expected.sort();
        prop_assert_eq!(outputs, expected.iter().map(String::as_str).collect::<Vec<_>>());
        for (i, record) in deranged.records.iter().enumerate() {
            prop_assert_eq!(&record.instruction, &dataset.records[i].instruction);
            prop_assert_ne!(&record.output, &dataset.records[i].output);
        }
    }

    #[test]
    fn run_state_round_trips_at_any_progress(completed in 0usize..=3) {
        let catalog = enumerate_combinations();
        let plan = catalog.find_plan("unlearn-ad_train+ad_wflipped+ad_train").unwrap();
        let mut state = RunState::new(plan);
        for stage in 0..completed.min(plan.stages.len()) {
            advance_run(&mut state, stage, &format!("artifact-{stage}")).unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.json");
        save_run_state(&state, &path).unwrap();
        prop_assert_eq!(load_run_state(&path).unwrap(), state);
    }
}

// -----------------------------------------------------------------------
// BPE properties against the reference encoder
// -----------------------------------------------------------------------

fn fixture_vocab() -> (fliplab_core::tokscan::BpeVocab, Vec<(String, String)>) {
    let dir = common::fixtures_dir().join("bpe");
    let vocab = load_bpe(&dir.join("vocab.json"), &dir.join("merges.txt")).unwrap();
    let merges = read_merge_pairs(&dir.join("merges.txt"));
    (vocab, merges)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bpe_matches_reference_on_random_text(s in "[a-z .,]{0,48}") {
        let (vocab, merges) = fixture_vocab();
        let production = bpe_encode(&vocab, &s);
        prop_assume!(production.is_ok()); // skip texts with uncovered symbols
        prop_assert_eq!(production.unwrap(), reference_encode(&vocab, &merges, &s));
    }

    #[test]
    fn bpe_decode_reproduces_pretokenized_input(s in "[a-zA-Z .,]{0,48}") {
        let (vocab, _) = fixture_vocab();
        if let Ok(tokens) = bpe_encode(&vocab, &s) {
            let normalized = s.split_whitespace().collect::<Vec<_>>().join(" ");
            prop_assert_eq!(decode_tokens(&tokens, SpaceMarker::Prefix), normalized);
        }
    }

    #[test]
    fn fewer_merges_never_shorten_tokenizations(s in "[a-z .]{0,32}", cut in 0usize..900) {
        let (vocab, _) = fixture_vocab();
        let truncated = vocab.truncated(cut.min(vocab.merge_count()));
        if let (Ok(full), Ok(partial)) = (bpe_encode(&vocab, &s), bpe_encode(&truncated, &s)) {
            prop_assert!(partial.len() >= full.len());
        }
    }
}
