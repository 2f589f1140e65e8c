use attnsyntax::eval::Counts;
use attnsyntax::head_select::{DevSentence, Objective, SelectionOptions};
use attnsyntax::pipeline::{evaluate, extract_all, reference_tree};
use attnsyntax::synthetic::{placeholder_subwords, toy_corpus};
use attnsyntax::tree_builder::{random_attention_dump, sentence_rng};
use attnsyntax::treebank::read_bracketed;
use attnsyntax::{
    greedy_ablation, greedy_addition, CountingPolicy, HeadId, HeadMask, SpanTree, Universe,
};

fn toy_dev() -> (Vec<DevSentence>, Universe, Counts) {
    let (dumps, gold) = toy_corpus();
    let universe = dumps[0].universe();
    let references: Vec<_> = dumps
        .iter()
        .zip(&gold)
        .map(|(d, g)| reference_tree(&d.id, &d.subwords, &read_bracketed(g).unwrap()).unwrap())
        .collect();
    let dev = dumps
        .iter()
        .zip(&references)
        .map(|(d, r)| DevSentence::new(d, r).unwrap())
        .collect();
    let trees: Vec<SpanTree> = extract_all(&dumps, &HeadMask::full(universe))
        .into_iter()
        .map(|e| e.unwrap().tree)
        .collect();
    let ids: Vec<&str> = dumps.iter().map(|d| d.id.as_str()).collect();
    let all = evaluate(&ids, &trees, &references, CountingPolicy::Nontrivial).counts;
    (dev, universe, all)
}

#[test]
fn addition_ends_at_the_full_mask() {
    let (dev, universe, all) = toy_dev();
    let trace = greedy_addition(&dev, universe, SelectionOptions::default()).unwrap();
    assert_eq!(trace.steps.len(), universe.size());
    assert_eq!(trace.steps.last().unwrap().counts, all);
    let n = universe.size();
    // the starting mask is scored too
    assert_eq!(trace.evaluations, n * (n + 1) / 2 + 1);
    for (i, step) in trace.steps.iter().enumerate() {
        assert_eq!(step.mask_size, i + 1);
        assert!(trace.best_score >= step.score);
    }
    let mut seen: Vec<HeadId> = trace.steps.iter().map(|s| s.head).collect();
    seen.sort();
    assert_eq!(seen, universe.iter().collect::<Vec<_>>());
}

#[test]
fn ablation_starts_at_the_full_mask() {
    let (dev, universe, all) = toy_dev();
    let trace = greedy_ablation(&dev, universe, SelectionOptions::default()).unwrap();
    assert_eq!(trace.start_counts, all);
    assert_eq!(trace.steps.len(), universe.size() - 1);
    assert!(trace.best_score >= trace.start_score);
    for (i, step) in trace.steps.iter().enumerate() {
        assert_eq!(step.mask_size, universe.size() - i - 1);
        assert!(trace.best_score >= step.score);
    }
    assert!(!trace.best_mask.is_empty());
}

#[test]
fn best_mask_reproduces_its_score() {
    let (dev, universe, _) = toy_dev();
    for objective in [Objective::Precision, Objective::F1] {
        let options = SelectionOptions {
            objective,
            policy: CountingPolicy::Nontrivial,
        };
        let trace = greedy_addition(&dev, universe, options).unwrap();
        let again = greedy_ablation(&dev, universe, options).unwrap();
        assert_eq!(trace.best_score, objective.value(&trace.best_counts));
        assert_eq!(again.best_score, objective.value(&again.best_counts));
    }
}

#[test]
fn single_head_universe() {
    let universe = Universe::new(1, 1);
    let mut rng = sentence_rng(11, 0);
    let dump = random_attention_dump(&mut rng, "one", placeholder_subwords(6), universe);
    let gold = attnsyntax::lbal_tree(6).to_constituency(&dump.subwords);
    let dev = vec![DevSentence::new(&dump, &gold).unwrap()];

    let add = greedy_addition(&dev, universe, SelectionOptions::default()).unwrap();
    assert_eq!(add.steps.len(), 1);
    assert_eq!(add.best_mask, HeadMask::full(universe));
    assert_eq!(add.evaluations, 2);

    let ablate = greedy_ablation(&dev, universe, SelectionOptions::default()).unwrap();
    assert!(ablate.steps.is_empty());
    assert_eq!(ablate.best_mask, HeadMask::full(universe));
    assert_eq!(ablate.best_counts, add.best_counts);
}
