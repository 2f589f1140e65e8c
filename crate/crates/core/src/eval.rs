//! Consistency-based precision and recall of extracted trees.
//!
//! An extracted phrase is correct when it crosses no phrase of the
//! reference tree; recall applies the same test the other way round.
//! Corpus scores pool the counts of all sentences before dividing.

use std::fmt::{self, Write as _};
use std::iter::Sum;
use std::ops::{Add, AddAssign};
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::span::Span;
use crate::tree_builder::SpanTree;
use crate::treebank::ConstituencyTree;

/// Which node spans enter the counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountingPolicy {
    /// Every node, single subwords and the root included.
    AllSpans,
    /// Skip single subwords and the full-sentence span, which are
    /// consistent with any tree.
    #[default]
    Nontrivial,
}

impl CountingPolicy {
    pub fn counts(self, span: Span, n: usize) -> bool {
        match self {
            CountingPolicy::AllSpans => true,
            CountingPolicy::Nontrivial => span.len() > 1 && span.len() < n,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CountingPolicy::AllSpans => "all",
            CountingPolicy::Nontrivial => "nontrivial",
        }
    }
}

impl FromStr for CountingPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all-spans" => Ok(CountingPolicy::AllSpans),
            "nontrivial" | "nontrivial-spans" => Ok(CountingPolicy::Nontrivial),
            _ => Err(Error::Invalid(format!(
                "unknown counting policy `{s}` (expected `all` or `nontrivial`)"
            ))),
        }
    }
}

impl fmt::Display for CountingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `e` crosses no span of `reference`.
pub fn is_consistent(e: Span, reference: &[Span]) -> bool {
    reference.iter().all(|p| !p.crosses(&e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub extracted_total: usize,
    pub extracted_consistent: usize,
    pub gold_total: usize,
    pub gold_consistent: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

impl Counts {
    /// Share of extracted phrases consistent with the gold tree; 1 when
    /// nothing was extracted.
    pub fn precision(&self) -> f64 {
        ratio(self.extracted_consistent, self.extracted_total)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.gold_consistent, self.gold_total)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

impl Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            extracted_total: self.extracted_total + o.extracted_total,
            extracted_consistent: self.extracted_consistent + o.extracted_consistent,
            gold_total: self.gold_total + o.gold_total,
            gold_consistent: self.gold_consistent + o.gold_consistent,
        }
    }
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        *self = *self + o;
    }
}

impl Sum for Counts {
    fn sum<I: Iterator<Item = Counts>>(iter: I) -> Counts {
        iter.fold(Counts::default(), Add::add)
    }
}

/// Counts for two span sets over the same `n` subwords.
pub fn score_spans(extracted: &[Span], gold: &[Span], n: usize, policy: CountingPolicy) -> Counts {
    let mut counts = Counts::default();
    for &e in extracted.iter().filter(|s| policy.counts(**s, n)) {
        counts.extracted_total += 1;
        counts.extracted_consistent += is_consistent(e, gold) as usize;
    }
    for &p in gold.iter().filter(|s| policy.counts(**s, n)) {
        counts.gold_total += 1;
        counts.gold_consistent += is_consistent(p, extracted) as usize;
    }
    counts
}

/// Scores an index tree against a post-processed reference tree.
pub fn score(
    extracted: &SpanTree,
    gold: &ConstituencyTree,
    policy: CountingPolicy,
) -> Result<Counts> {
    let n = extracted.leaf_count();
    if gold.leaf_count() != n {
        return Err(Error::Alignment {
            sentence: String::new(),
            message: format!(
                "extracted tree has {n} leaves, reference tree has {}",
                gold.leaf_count()
            ),
        });
    }
    Ok(score_spans(&extracted.spans(), &gold.spans(), n, policy))
}

/// Scores two token trees, requiring identical leaf sequences.
pub fn score_trees(
    sentence_id: &str,
    extracted: &ConstituencyTree,
    gold: &ConstituencyTree,
    policy: CountingPolicy,
) -> Result<Counts> {
    let (e, g) = (extracted.leaves(), gold.leaves());
    if e != g {
        let at = e
            .iter()
            .zip(&g)
            .position(|(a, b)| a != b)
            .unwrap_or(e.len().min(g.len()));
        return Err(Error::Alignment {
            sentence: sentence_id.to_string(),
            message: format!(
                "leaf sequences differ at position {} ({} vs {} leaves; `{}` vs `{}`)",
                at + 1,
                e.len(),
                g.len(),
                e.get(at).copied().unwrap_or("<end>"),
                g.get(at).copied().unwrap_or("<end>"),
            ),
        });
    }
    Ok(score_spans(
        &extracted.spans(),
        &gold.spans(),
        e.len(),
        policy,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SentenceScore {
    pub sentence_id: String,
    pub counts: Counts,
}

/// Micro-averaged corpus scores.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub policy: CountingPolicy,
    pub counts: Counts,
    pub sentences: Vec<SentenceScore>,
}

impl EvalReport {
    pub fn new(policy: CountingPolicy, sentences: Vec<SentenceScore>) -> Self {
        let counts = sentences.iter().map(|s| s.counts).sum();
        EvalReport {
            policy,
            counts,
            sentences,
        }
    }

    pub fn precision(&self) -> f64 {
        self.counts.precision()
    }

    pub fn recall(&self) -> f64 {
        self.counts.recall()
    }

    pub fn f1(&self) -> f64 {
        self.counts.f1()
    }

    /// Plain-text table; percentages to one decimal, followed by the raw
    /// counts they come from.
    pub fn to_table(&self, per_sentence: bool) -> String {
        let mut out = String::new();
        if per_sentence {
            out.push_str("sentence\tprecision\trecall\tF1\textracted\tgold\n");
            for s in &self.sentences {
                let c = &s.counts;
                let _ = writeln!(
                    out,
                    "{}\t{:.1}%\t{:.1}%\t{:.1}%\t{}/{}\t{}/{}",
                    s.sentence_id,
                    100.0 * c.precision(),
                    100.0 * c.recall(),
                    100.0 * c.f1(),
                    c.extracted_consistent,
                    c.extracted_total,
                    c.gold_consistent,
                    c.gold_total
                );
            }
            out.push('\n');
        }
        let c = &self.counts;
        let _ = writeln!(out, "counting\t{} (0/0 scores as 100%)", self.policy);
        let _ = writeln!(out, "sentences\t{}", self.sentences.len());
        let _ = writeln!(
            out,
            "precision\t{:.1}%\t{}/{}",
            100.0 * c.precision(),
            c.extracted_consistent,
            c.extracted_total
        );
        let _ = writeln!(
            out,
            "recall\t{:.1}%\t{}/{}",
            100.0 * c.recall(),
            c.gold_consistent,
            c.gold_total
        );
        let _ = writeln!(out, "F1\t{:.1}%", 100.0 * c.f1());
        out
    }
}
