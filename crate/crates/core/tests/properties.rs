mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use attnsyntax::attn_io::{read_dumps, write_dumps};
use attnsyntax::eval::score_spans;
use attnsyntax::synthetic::{placeholder_subwords, random_binary_tree, synthetic_sentence};
use attnsyntax::tree_builder::{random_attention_dump, sentence_rng};
use attnsyntax::treebank::postprocess_words;
use attnsyntax::{
    build_phrase_table, cky_parse, find_balusters, harden, lbal_tree, rbal_tree, CountingPolicy,
    HeadId, HeadMask, PhraseTable, Span, Universe,
};

use common::{best_score, brute_counts, from_span_tree, tree_score};

fn policies() -> impl Strategy<Value = CountingPolicy> {
    prop_oneof![
        Just(CountingPolicy::AllSpans),
        Just(CountingPolicy::Nontrivial)
    ]
}

fn laminar(spans: &[Span]) -> bool {
    spans.iter().all(|a| spans.iter().all(|b| !a.crosses(b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dump_round_trips_bit_exact(seed in any::<u64>(), n in 1usize..12, layers in 1usize..3, heads in 1usize..4) {
        let mut rng = sentence_rng(seed, 0);
        let dump = random_attention_dump(&mut rng, format!("s{seed}"), placeholder_subwords(n), Universe::new(layers, heads));
        let mut buf = Vec::new();
        write_dumps(&mut buf, [&dump]).unwrap();
        let back = read_dumps(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(&back[0], &dump);
    }

    #[test]
    fn hardening_is_idempotent(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = sentence_rng(seed, 1);
        let dump = random_attention_dump(&mut rng, "h", placeholder_subwords(n), Universe::new(1, 1));
        let hard = harden(dump.matrix(HeadId::new(0, 0)));
        prop_assert_eq!(harden(&hard.to_dense()), hard);
    }

    #[test]
    fn balusters_of_a_head_are_disjoint(seed in any::<u64>(), n in 1usize..30, columns in 1usize..4) {
        // few distinct columns so that runs are common
        let mut rng = sentence_rng(seed, 2);
        let targets: Vec<usize> = (0..n).map(|_| rng.random_range(0..columns.min(n))).collect();
        let matrix: Vec<f64> = (0..n * n).map(|i| if targets[i / n] == i % n { 1.0 } else { 0.0 }).collect();
        let found = find_balusters(&harden(&matrix), HeadId::new(0, 0));
        for (i, a) in found.iter().enumerate() {
            prop_assert!(a.span.len() >= 2);
            prop_assert!((a.span.start..=a.span.end).all(|r| targets[r] == a.target_col));
            for b in &found[i + 1..] {
                prop_assert!(a.span.is_disjoint(&b.span));
            }
        }
        // maximal: neighbours of a baluster attend elsewhere
        for b in &found {
            if b.span.start > 0 {
                prop_assert_ne!(targets[b.span.start - 1], b.target_col);
            }
            if b.span.end + 1 < n {
                prop_assert_ne!(targets[b.span.end + 1], b.target_col);
            }
        }
    }

    #[test]
    fn phrase_table_ignores_head_order_and_grows_with_the_mask(seed in any::<u64>(), n in 2usize..15) {
        let universe = Universe::new(2, 3);
        let mut rng = sentence_rng(seed, 3);
        let dump = random_attention_dump(&mut rng, "m", placeholder_subwords(n), universe);
        let mut heads: Vec<HeadId> = universe.iter().collect();
        heads.shuffle(&mut rng);
        let cut = rng.random_range(1..heads.len());
        let small = HeadMask::from_heads(universe, heads[..cut].iter().copied()).unwrap();
        let mut reversed = heads[..cut].to_vec();
        reversed.reverse();
        let same = HeadMask::from_heads(universe, reversed).unwrap();
        let small_table = build_phrase_table(&dump, &small).unwrap();
        prop_assert_eq!(small_table.to_json_line(), build_phrase_table(&dump, &same).unwrap().to_json_line());

        let large = build_phrase_table(&dump, &HeadMask::full(universe)).unwrap();
        for (span, w) in small_table.iter() {
            prop_assert!(large.raw(span) >= w.raw);
        }
    }

    #[test]
    fn chart_parse_is_optimal(seed in any::<u64>(), n in 1usize..8, density in 0.0f64..1.0) {
        let mut rng = sentence_rng(seed, 4);
        let mut raw = Vec::new();
        for a in 0..n {
            for b in a..n {
                if rng.random_bool(density) {
                    raw.push((Span::new(a, b), rng.random_range(0.01..3.0)));
                }
            }
        }
        let table = PhraseTable::from_raw("c".into(), raw);
        let weight = |a: usize, b: usize| table.weight(Span::new(a, b));
        let tree = cky_parse(&table, n).unwrap();
        prop_assert_eq!(tree.leaf_count(), n);
        let got = tree_score(&from_span_tree(&tree), &weight);
        prop_assert!((got - best_score(n, &weight)).abs() <= 1e-12);
    }

    #[test]
    fn balanced_baselines_mirror_each_other(n in 1usize..60) {
        let l = lbal_tree(n);
        prop_assert_eq!(l.leaf_count(), n);
        prop_assert_eq!(l.mirror(n), rbal_tree(n));
        prop_assert_eq!(rbal_tree(n).mirror(n), l);
    }

    #[test]
    fn scaling_raw_weights_changes_nothing(seed in any::<u64>(), n in 2usize..12, exponent in -6i32..6) {
        // powers of two keep the arithmetic exact
        let scale = 2f64.powi(exponent);
        let mut rng = sentence_rng(seed, 5);
        let mut raw = Vec::new();
        for a in 0..n {
            for b in a..n {
                if rng.random_bool(0.4) {
                    raw.push((Span::new(a, b), rng.random_range(0.01..2.0)));
                }
            }
        }
        let base = PhraseTable::from_raw("s".into(), raw.clone());
        let scaled = PhraseTable::from_raw("s".into(), raw.into_iter().map(|(s, w)| (s, w * scale)));
        for (span, w) in base.iter() {
            prop_assert_eq!(scaled.weight(span), w.equalized);
        }
        prop_assert_eq!(cky_parse(&base, n).unwrap(), cky_parse(&scaled, n).unwrap());
    }

    #[test]
    fn postprocessed_trees_are_flat_laminar_and_stable(seed in any::<u64>(), words in 1usize..25) {
        let mut rng = sentence_rng(seed, 6);
        let s = synthetic_sentence(&mut rng, "pp", words);
        prop_assert!(s.gold.is_flat());
        prop_assert_eq!(s.gold.leaf_count(), s.subwords.len());
        prop_assert!(laminar(&s.gold.spans()));
        let singles: Vec<Vec<String>> = s.gold.leaves().iter().map(|l| vec![l.to_string()]).collect();
        let again = postprocess_words("pp", &s.gold.to_raw(), &singles).unwrap();
        prop_assert_eq!(again, s.gold);
    }

    #[test]
    fn scores_match_enumeration_and_swap(seed in any::<u64>(), n in 1usize..25, policy in policies()) {
        let mut rng = sentence_rng(seed, 7);
        let g = synthetic_sentence(&mut rng, "g", n).gold;
        let n = g.leaf_count();
        let a = random_binary_tree(&mut rng, n).spans();
        let b = g.spans();
        let c = score_spans(&a, &b, n, policy);
        let brute = brute_counts(&a, &b, n, policy == CountingPolicy::AllSpans);
        prop_assert_eq!((c.extracted_total, c.extracted_consistent, c.gold_total, c.gold_consistent), brute);
        let swapped = score_spans(&b, &a, n, policy);
        prop_assert_eq!(c.precision(), swapped.recall());
        prop_assert_eq!(c.recall(), swapped.precision());
        for v in [c.precision(), c.recall(), c.f1()] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn removing_extracted_spans_never_lowers_recall(seed in any::<u64>(), words in 2usize..20) {
        let mut rng = sentence_rng(seed, 8);
        let s = synthetic_sentence(&mut rng, "r", words);
        let n = s.subwords.len();
        let gold = s.gold.spans();
        let extracted = lbal_tree(n).spans();
        let before = score_spans(&extracted, &gold, n, CountingPolicy::Nontrivial);
        // removing extracted spans can only make more gold spans consistent
        let fewer: Vec<Span> = extracted.iter().copied().filter(|sp| sp.len() != 2).collect();
        let after = score_spans(&fewer, &gold, n, CountingPolicy::Nontrivial);
        prop_assert!(after.gold_consistent >= before.gold_consistent);
    }
}
