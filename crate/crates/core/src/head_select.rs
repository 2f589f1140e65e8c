//! Greedy search for the heads whose balusters give the most
//! treebank-like trees.
//!
//! Addition starts from no heads and adds, at every step, the head that
//! maximizes the objective on the development sentences until all heads
//! are in. Ablation starts from all heads and removes one at a time until
//! a single head remains. Either way the best mask seen is reported.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde_json::json;

use crate::attn_io::AttentionDump;
use crate::error::{Error, Result};
use crate::eval::{score_spans, CountingPolicy, Counts};
use crate::heads::{HeadId, HeadMask, Universe};
use crate::phrase_extract::{PhraseTable, SentenceBalusters};
use crate::span::Span;
use crate::tree_builder::cky_parse;
use crate::treebank::ConstituencyTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Addition,
    Ablation,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "add" | "addition" => Ok(Strategy::Addition),
            "ablate" | "ablation" => Ok(Strategy::Ablation),
            _ => Err(Error::Invalid(format!(
                "unknown strategy `{s}` (expected `add` or `ablate`)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Addition => "add",
            Strategy::Ablation => "ablate",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    #[default]
    Precision,
    F1,
}

impl Objective {
    pub fn value(self, counts: &Counts) -> f64 {
        match self {
            Objective::Precision => counts.precision(),
            Objective::F1 => counts.f1(),
        }
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precision" => Ok(Objective::Precision),
            "f1" => Ok(Objective::F1),
            _ => Err(Error::Invalid(format!(
                "unknown objective `{s}` (expected `precision` or `f1`)"
            ))),
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Precision => "precision",
            Objective::F1 => "f1",
        })
    }
}

/// One development sentence with its balusters cached per head.
#[derive(Debug, Clone)]
pub struct DevSentence {
    balusters: SentenceBalusters,
    gold_spans: Vec<Span>,
}

impl DevSentence {
    pub fn new(dump: &AttentionDump, gold: &ConstituencyTree) -> Result<Self> {
        if gold.leaf_count() != dump.len() {
            return Err(Error::Alignment {
                sentence: dump.id.clone(),
                message: format!(
                    "{} subwords in the dump, {} leaves in the reference tree",
                    dump.len(),
                    gold.leaf_count()
                ),
            });
        }
        Ok(DevSentence {
            balusters: SentenceBalusters::from_dump(dump),
            gold_spans: gold.spans(),
        })
    }

    fn counts(&self, mask: &HeadMask, policy: CountingPolicy) -> Counts {
        let n = self.balusters.len;
        let table = if mask.is_empty() {
            PhraseTable::empty(self.balusters.sentence_id.clone())
        } else {
            self.balusters
                .phrase_table(mask)
                .expect("mask heads come from the dump universe")
        };
        let tree = cky_parse(&table, n).expect("phrase spans lie within the sentence");
        score_spans(&tree.spans(), &self.gold_spans, n, policy)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SelectionOptions {
    pub objective: Objective,
    pub policy: CountingPolicy,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        SelectionOptions {
            objective: Objective::Precision,
            policy: CountingPolicy::Nontrivial,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub step: usize,
    pub head: HeadId,
    pub mask_size: usize,
    pub score: f64,
    pub counts: Counts,
}

impl TraceStep {
    pub fn precision(&self) -> f64 {
        self.counts.precision()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionTrace {
    pub strategy: Strategy,
    pub objective: Objective,
    /// Score of the starting mask: empty for addition, full for ablation.
    pub start_score: f64,
    pub start_counts: Counts,
    pub steps: Vec<TraceStep>,
    pub best_mask: HeadMask,
    pub best_score: f64,
    pub best_counts: Counts,
    /// Number of masks scored over the whole development set.
    pub evaluations: usize,
    pub dev_size: usize,
}

impl SelectionTrace {
    pub fn best_precision(&self) -> f64 {
        self.best_counts.precision()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let steps: Vec<_> = self
            .steps
            .iter()
            .map(|s| {
                json!({
                    "step": s.step,
                    "head": s.head.to_string(),
                    "mask_size": s.mask_size,
                    "score": s.score,
                    "precision": s.counts.precision(),
                    "recall": s.counts.recall(),
                    "f1": s.counts.f1(),
                })
            })
            .collect();
        json!({
            "strategy": self.strategy.to_string(),
            "objective": self.objective.to_string(),
            "dev_size": self.dev_size,
            "start_score": self.start_score,
            "steps": steps,
            "best_mask": self.best_mask.to_spec(),
            "best_mask_size": self.best_mask.len(),
            "best_score": self.best_score,
            "best_precision": self.best_counts.precision(),
            "best_recall": self.best_counts.recall(),
            "best_f1": self.best_counts.f1(),
            "layer_distribution": layer_distribution(&self.best_mask).unwrap_or_default(),
            "evaluations": self.evaluations,
            "sentence_evaluations": self.evaluations * self.dev_size,
        })
    }
}

struct Search<'a> {
    dev: &'a [DevSentence],
    options: SelectionOptions,
    evaluations: usize,
}

impl Search<'_> {
    fn counts(&mut self, mask: &HeadMask) -> Counts {
        self.evaluations += 1;
        self.dev
            .iter()
            .map(|s| s.counts(mask, self.options.policy))
            .sum()
    }

    /// Scores every candidate toggle of `mask` in parallel and returns the
    /// best one; earlier candidates win ties.
    fn best_toggle(
        &mut self,
        mask: &HeadMask,
        candidates: &[HeadId],
        add: bool,
    ) -> (HeadId, Counts) {
        let (dev, policy) = (self.dev, self.options.policy);
        let results: Vec<Counts> = candidates
            .par_iter()
            .map(|&head| {
                let mut m = mask.clone();
                if add {
                    m.insert(head).expect("candidate in universe");
                } else {
                    m.remove(head);
                }
                dev.iter().map(|s| s.counts(&m, policy)).sum()
            })
            .collect();
        self.evaluations += candidates.len();
        let objective = self.options.objective;
        let mut best = 0;
        for (i, c) in results.iter().enumerate().skip(1) {
            if objective.value(c) > objective.value(&results[best]) {
                best = i;
            }
        }
        (candidates[best], results[best])
    }
}

fn run(
    dev: &[DevSentence],
    universe: Universe,
    strategy: Strategy,
    options: SelectionOptions,
) -> Result<SelectionTrace> {
    if dev.is_empty() {
        return Err(Error::Invalid(
            "head selection needs at least one development sentence".into(),
        ));
    }
    let mut search = Search {
        dev,
        options,
        evaluations: 0,
    };
    let objective = options.objective;
    let (mut mask, steps_total) = match strategy {
        Strategy::Addition => (HeadMask::empty(universe), universe.size()),
        Strategy::Ablation => (HeadMask::full(universe), universe.size() - 1),
    };
    let start_counts = search.counts(&mask);
    let start_score = objective.value(&start_counts);

    // the empty mask is a starting point, not a candidate answer
    let mut best = match strategy {
        Strategy::Addition => None,
        Strategy::Ablation => Some((mask.clone(), start_score, start_counts)),
    };
    let mut steps = Vec::with_capacity(steps_total);
    for step in 1..=steps_total {
        let candidates: Vec<HeadId> = match strategy {
            Strategy::Addition => universe.iter().filter(|h| !mask.contains(*h)).collect(),
            Strategy::Ablation => mask.iter().collect(),
        };
        let add = strategy == Strategy::Addition;
        let (head, counts) = search.best_toggle(&mask, &candidates, add);
        if add {
            mask.insert(head)?;
        } else {
            mask.remove(head);
        }
        let score = objective.value(&counts);
        log::debug!(
            "step {step}: {} {head} -> {score:.4}",
            if add { "add" } else { "remove" }
        );
        if best.as_ref().is_none_or(|(_, s, _)| score > *s) {
            best = Some((mask.clone(), score, counts));
        }
        steps.push(TraceStep {
            step,
            head,
            mask_size: mask.len(),
            score,
            counts,
        });
    }
    let (best_mask, best_score, best_counts) = best.expect("at least one step or a start mask");
    Ok(SelectionTrace {
        strategy,
        objective,
        start_score,
        start_counts,
        steps,
        best_mask,
        best_score,
        best_counts,
        evaluations: search.evaluations,
        dev_size: dev.len(),
    })
}

pub fn greedy_addition(
    dev: &[DevSentence],
    universe: Universe,
    options: SelectionOptions,
) -> Result<SelectionTrace> {
    run(dev, universe, Strategy::Addition, options)
}

pub fn greedy_ablation(
    dev: &[DevSentence],
    universe: Universe,
    options: SelectionOptions,
) -> Result<SelectionTrace> {
    run(dev, universe, Strategy::Ablation, options)
}

pub fn select_heads(
    dev: &[DevSentence],
    universe: Universe,
    strategy: Strategy,
    options: SelectionOptions,
) -> Result<SelectionTrace> {
    run(dev, universe, strategy, options)
}

/// Share of the mask's heads coming from each layer.
pub fn layer_distribution(mask: &HeadMask) -> Result<Vec<f64>> {
    if mask.is_empty() {
        return Err(Error::Mask("layer distribution of an empty mask".into()));
    }
    let mut counts = vec![0usize; mask.universe().layers];
    for head in mask.iter() {
        counts[head.layer] += 1;
    }
    let total = mask.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layer_shares() {
        let u = Universe::new(6, 16);
        let mask = HeadMask::parse("1:1,1:2,6:3", u).unwrap();
        let d = layer_distribution(&mask).unwrap();
        assert_eq!(d, vec![2.0 / 3.0, 0.0, 0.0, 0.0, 0.0, 1.0 / 3.0]);
        let full = layer_distribution(&HeadMask::full(u)).unwrap();
        assert!(full.iter().all(|&p| (p - 1.0 / 6.0).abs() < 1e-12));
        assert!((full.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(layer_distribution(&HeadMask::empty(u)).is_err());
    }

    #[test]
    fn parse_options() {
        assert_eq!("add".parse::<Strategy>().unwrap(), Strategy::Addition);
        assert_eq!("ablate".parse::<Strategy>().unwrap(), Strategy::Ablation);
        assert_eq!("f1".parse::<Objective>().unwrap(), Objective::F1);
        assert!("recall".parse::<Objective>().is_err());
    }

    #[test]
    fn empty_dev_set_is_rejected() {
        assert!(greedy_addition(&[], Universe::new(1, 1), SelectionOptions::default()).is_err());
    }
}
