//! Binary trees over subword positions: the CKY extraction and the
//! uninformed baselines.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::attn_io::{AttentionDump, DEFAULT_EOS};
use crate::error::{Error, Result};
use crate::heads::Universe;
use crate::phrase_extract::PhraseTable;
use crate::span::Span;
use crate::treebank::{escape_token, ConstituencyTree};

/// Strictly binary tree whose leaves are subword positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpanTree {
    Leaf(usize),
    Node {
        span: Span,
        left: Box<SpanTree>,
        right: Box<SpanTree>,
    },
}

impl SpanTree {
    pub fn node(left: SpanTree, right: SpanTree) -> SpanTree {
        let (l, r) = (left.span(), right.span());
        assert_eq!(l.end + 1, r.start, "children {l} and {r} are not adjacent");
        SpanTree::Node {
            span: Span::new(l.start, r.end),
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn span(&self) -> Span {
        match self {
            SpanTree::Leaf(i) => Span::single(*i),
            SpanTree::Node { span, .. } => *span,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.span().len()
    }

    /// Spans of every node, leaves included, in preorder.
    pub fn spans(&self) -> Vec<Span> {
        let mut out = Vec::new();
        self.collect_spans(&mut out, true);
        out
    }

    /// Spans of internal nodes only, in preorder.
    pub fn internal_spans(&self) -> Vec<Span> {
        let mut out = Vec::new();
        self.collect_spans(&mut out, false);
        out
    }

    fn collect_spans(&self, out: &mut Vec<Span>, leaves: bool) {
        match self {
            SpanTree::Leaf(i) => {
                if leaves {
                    out.push(Span::single(*i));
                }
            }
            SpanTree::Node { span, left, right } => {
                out.push(*span);
                left.collect_spans(out, leaves);
                right.collect_spans(out, leaves);
            }
        }
    }

    /// Mirror image over `0..n`: leaf `i` becomes leaf `n - 1 - i`.
    pub fn mirror(&self, n: usize) -> SpanTree {
        match self {
            SpanTree::Leaf(i) => SpanTree::Leaf(n - 1 - i),
            SpanTree::Node { left, right, .. } => SpanTree::node(right.mirror(n), left.mirror(n)),
        }
    }

    /// Bracketed rendering with the given leaf tokens, escaped.
    pub fn to_bracketed<S: AsRef<str>>(&self, tokens: &[S]) -> String {
        let mut out = String::new();
        self.write_with(&mut out, &|i| escape_token(tokens[i].as_ref()).into_owned());
        out
    }

    fn write_with(&self, out: &mut String, leaf: &dyn Fn(usize) -> String) {
        match self {
            SpanTree::Leaf(i) => out.push_str(&leaf(*i)),
            SpanTree::Node { left, right, .. } => {
                out.push('(');
                left.write_with(out, leaf);
                out.push(' ');
                right.write_with(out, leaf);
                out.push(')');
            }
        }
    }

    pub fn to_constituency<S: AsRef<str>>(&self, tokens: &[S]) -> ConstituencyTree {
        match self {
            SpanTree::Leaf(i) => {
                ConstituencyTree::Leaf(escape_token(tokens[*i].as_ref()).into_owned())
            }
            SpanTree::Node { left, right, .. } => ConstituencyTree::Node(vec![
                left.to_constituency(tokens),
                right.to_constituency(tokens),
            ]),
        }
    }
}

/// Leaves printed as 1-based positions, e.g. `(((1 2) (3 4)) 5)`.
impl fmt::Display for SpanTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        self.write_with(&mut out, &|i| (i + 1).to_string());
        f.write_str(&out)
    }
}

/// CKY chart of subtree scores and best split points.
#[derive(Debug, Clone)]
pub struct Chart {
    n: usize,
    scores: Vec<f64>,
    splits: Vec<usize>,
}

impl Chart {
    /// Fills the chart bottom-up. `weights` is the dense row-major N×N
    /// table of phrase weights indexed `[start][end]`.
    ///
    /// The score of a span is the best average of its two children's
    /// scores and phrase weights; single subwords score 1. Among equal
    /// splits the smallest one wins.
    pub fn fill(n: usize, weights: &[f64]) -> Chart {
        assert_eq!(weights.len(), n * n);
        let mut scores = vec![0.0; n * n];
        let mut splits = vec![0; n * n];
        for a in 0..n {
            scores[a * n + a] = 1.0;
        }
        for len in 2..=n {
            for a in 0..=n - len {
                let b = a + len - 1;
                let mut best = f64::NEG_INFINITY;
                let mut best_k = a;
                for k in a..b {
                    let value = (scores[a * n + k]
                        + scores[(k + 1) * n + b]
                        + weights[a * n + k]
                        + weights[(k + 1) * n + b])
                        / 4.0;
                    if value > best {
                        best = value;
                        best_k = k;
                    }
                }
                scores[a * n + b] = best;
                splits[a * n + b] = best_k;
            }
        }
        Chart { n, scores, splits }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn score(&self, span: Span) -> f64 {
        self.scores[span.start * self.n + span.end]
    }

    /// Best split of a span of length at least two: children are
    /// `(start, k)` and `(k + 1, end)`.
    pub fn split(&self, span: Span) -> usize {
        assert!(span.len() >= 2);
        self.splits[span.start * self.n + span.end]
    }

    pub fn tree(&self, span: Span) -> SpanTree {
        if span.len() == 1 {
            return SpanTree::Leaf(span.start);
        }
        let k = self.split(span);
        SpanTree::node(
            self.tree(Span::new(span.start, k)),
            self.tree(Span::new(k + 1, span.end)),
        )
    }

    pub fn best_tree(&self) -> SpanTree {
        self.tree(Span::new(0, self.n - 1))
    }
}

/// Dense `[start][end]` weight matrix of a phrase table.
pub fn dense_weights(table: &PhraseTable, n: usize) -> Result<Vec<f64>> {
    let mut weights = vec![0.0; n * n];
    for (span, w) in table.iter() {
        if span.end >= n {
            return Err(Error::SpanOutOfRange {
                start: span.start,
                end: span.end,
                len: n,
            });
        }
        weights[span.start * n + span.end] = w.equalized;
    }
    Ok(weights)
}

pub fn cky_chart(table: &PhraseTable, n: usize) -> Result<Chart> {
    if n == 0 {
        return Err(Error::Invalid("cannot parse an empty sentence".into()));
    }
    Ok(Chart::fill(n, &dense_weights(table, n)?))
}

/// Highest scoring binary tree over `n` subwords.
pub fn cky_parse(table: &PhraseTable, n: usize) -> Result<SpanTree> {
    Ok(cky_chart(table, n)?.best_tree())
}

fn balanced(n: usize, from_left: bool) -> SpanTree {
    assert!(n >= 1, "a tree needs at least one leaf");
    let mut units: Vec<SpanTree> = (0..n).map(SpanTree::Leaf).collect();
    while units.len() > 1 {
        let odd = units.len() % 2 == 1;
        let mut next = Vec::with_capacity(units.len() / 2 + 1);
        let mut iter = units.into_iter();
        if odd && !from_left {
            next.extend(iter.next());
        }
        while let Some(left) = iter.next() {
            match iter.next() {
                Some(right) => next.push(SpanTree::node(left, right)),
                None => next.push(left),
            }
        }
        units = next;
    }
    units.pop().expect("one tree remains")
}

/// Balanced tree merging adjacent units left to right; an odd unit out
/// at the end waits for the next round.
pub fn lbal_tree(n: usize) -> SpanTree {
    balanced(n, true)
}

/// Balanced tree merging adjacent units right to left; an odd unit out
/// at the start waits for the next round.
pub fn rbal_tree(n: usize) -> SpanTree {
    balanced(n, false)
}

/// Deterministic generator for one sentence of a seeded corpus.
pub fn sentence_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Attention dump whose rows are uniform draws from the probability
/// simplex. This is not the same as attention from an untrained
/// Transformer; it only removes all structure from the matrices.
pub fn random_attention_dump<R: Rng>(
    rng: &mut R,
    id: impl Into<String>,
    subwords: Vec<String>,
    universe: Universe,
) -> AttentionDump {
    let n = subwords.len();
    let mut weights = Vec::with_capacity(universe.size() * n * n);
    let mut row = vec![0.0; n];
    for _ in 0..universe.size() * n {
        for w in row.iter_mut() {
            *w = rng.sample::<f64, _>(Exp1);
        }
        let total: f64 = row.iter().sum();
        weights.extend(row.iter().map(|w| w / total));
    }
    AttentionDump::new(id, subwords, universe, weights).expect("simplex rows are valid attention")
}

/// Random-attention dump over placeholder subwords `t1 .. t{n-1} EOS`.
pub fn random_attention_baseline(
    seed: u64,
    n: usize,
    layers: usize,
    heads: usize,
) -> AttentionDump {
    assert!(n >= 1 && layers >= 1 && heads >= 1);
    let mut subwords: Vec<String> = (1..n).map(|i| format!("t{i}")).collect();
    subwords.push(DEFAULT_EOS.to_string());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_attention_dump(
        &mut rng,
        format!("rand-{seed}"),
        subwords,
        Universe::new(layers, heads),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heads::HeadId;

    fn table(entries: &[((usize, usize), f64)]) -> PhraseTable {
        // equalize would rescale; build raw weights that are already
        // the only member of their length class where needed
        PhraseTable::from_raw(
            "t".into(),
            entries.iter().map(|&((a, b), w)| (Span::new(a, b), w)),
        )
    }

    #[test]
    fn three_leaves_follow_the_phrase() {
        // w(0,1) = 2 -> equalized to 1 as the only length-2 phrase; the
        // split choice is the same as with weight 2
        let t = table(&[((0, 1), 2.0)]);
        let chart = cky_chart(&t, 3).unwrap();
        assert_eq!(chart.score(Span::new(0, 1)), 0.5);
        assert_eq!(chart.score(Span::new(1, 2)), 0.5);
        assert_eq!(chart.best_tree().to_string(), "((1 2) 3)");
        assert_eq!(chart.score(Span::new(0, 2)), (0.5 + 1.0 + 1.0) / 4.0);
    }

    #[test]
    fn raw_weights_in_chart() {
        let mut weights = vec![0.0; 9];
        weights[1] = 2.0;
        let chart = Chart::fill(3, &weights);
        assert_eq!(chart.score(Span::new(0, 2)), 0.875);
        assert_eq!(chart.split(Span::new(0, 2)), 1);
    }

    #[test]
    fn two_leaves() {
        let chart = cky_chart(&PhraseTable::empty("t"), 2).unwrap();
        assert_eq!(chart.best_tree().to_string(), "(1 2)");
        assert_eq!(chart.score(Span::new(0, 1)), 0.5);
    }

    #[test]
    fn empty_table_ties_resolve_to_smallest_split() {
        let chart = cky_chart(&PhraseTable::empty("t"), 4).unwrap();
        assert_eq!(chart.best_tree().to_string(), "(1 (2 (3 4)))");
        assert_eq!(chart.score(Span::new(0, 3)), 0.34375);
    }

    #[test]
    fn single_leaf() {
        let tree = cky_parse(&PhraseTable::empty("t"), 1).unwrap();
        assert_eq!(tree, SpanTree::Leaf(0));
    }

    #[test]
    fn rejects_out_of_range_span() {
        let t = table(&[((2, 4), 1.0)]);
        assert!(matches!(
            cky_parse(&t, 4),
            Err(Error::SpanOutOfRange { .. })
        ));
    }

    #[test]
    fn balanced_baselines() {
        assert_eq!(lbal_tree(5).to_string(), "(((1 2) (3 4)) 5)");
        assert_eq!(rbal_tree(5).to_string(), "(1 ((2 3) (4 5)))");
        assert_eq!(lbal_tree(4).to_string(), "((1 2) (3 4))");
        assert_eq!(rbal_tree(4).to_string(), "((1 2) (3 4))");
        assert_eq!(lbal_tree(1), SpanTree::Leaf(0));
        assert_eq!(rbal_tree(1), SpanTree::Leaf(0));
        assert_eq!(lbal_tree(3).to_string(), "((1 2) 3)");
        assert_eq!(rbal_tree(3).to_string(), "(1 (2 3))");
    }

    #[test]
    fn baselines_mirror() {
        for n in 1..40 {
            assert_eq!(lbal_tree(n).mirror(n), rbal_tree(n), "n = {n}");
        }
    }

    #[test]
    fn bracketed_escapes_parentheses() {
        let tree = lbal_tree(3);
        assert_eq!(tree.to_bracketed(&["(", "x", ")"]), "((-LRB- x) -RRB-)");
    }

    #[test]
    fn random_baseline_is_seeded() {
        let a = random_attention_baseline(7, 6, 2, 3);
        let b = random_attention_baseline(7, 6, 2, 3);
        let c = random_attention_baseline(8, 6, 2, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
        for head in a.universe().iter() {
            for row in a.matrix(head).chunks_exact(6) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            }
        }
        assert_eq!(a.subwords.last().unwrap(), "EOS");
        assert_eq!(
            a.weight(HeadId::new(1, 2), 0, 0),
            b.weight(HeadId::new(1, 2), 0, 0)
        );
    }
}
