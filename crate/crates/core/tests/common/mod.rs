//! Brute-force oracles shared by the integration tests. Nothing here goes
//! through the chart parser.

#![allow(dead_code)]

use attnsyntax::Span;

/// Binary tree over leaf positions, independent of the library's type.
#[derive(Debug, Clone)]
pub enum Bin {
    Leaf(usize),
    Node(Box<Bin>, Box<Bin>),
}

impl Bin {
    pub fn span(&self) -> (usize, usize) {
        match self {
            Bin::Leaf(i) => (*i, *i),
            Bin::Node(l, r) => (l.span().0, r.span().1),
        }
    }

    pub fn spans(&self, out: &mut Vec<Span>) {
        let (a, b) = self.span();
        out.push(Span::new(a, b));
        if let Bin::Node(l, r) = self {
            l.spans(out);
            r.spans(out);
        }
    }
}

/// Every binary tree with leaves `start..=end`.
pub fn all_trees(start: usize, end: usize) -> Vec<Bin> {
    if start == end {
        return vec![Bin::Leaf(start)];
    }
    let mut out = Vec::new();
    for k in start..end {
        for l in all_trees(start, k) {
            for r in all_trees(k + 1, end) {
                out.push(Bin::Node(Box::new(l.clone()), Box::new(r)));
            }
        }
    }
    out
}

pub fn catalan(n: usize) -> usize {
    // C(2n, n) / (n + 1)
    let mut c: u128 = 1;
    for i in 0..n as u128 {
        c = c * 2 * (2 * i + 1) / (i + 2);
    }
    c as usize
}

/// Tree score: leaves score 1, a node averages its children's scores and
/// phrase weights.
pub fn tree_score(tree: &Bin, weight: &dyn Fn(usize, usize) -> f64) -> f64 {
    match tree {
        Bin::Leaf(_) => 1.0,
        Bin::Node(l, r) => {
            let (la, lb) = l.span();
            let (ra, rb) = r.span();
            (tree_score(l, weight) + tree_score(r, weight) + weight(la, lb) + weight(ra, rb)) / 4.0
        }
    }
}

/// Maximum tree score over all binary trees of `n` leaves.
pub fn best_score(n: usize, weight: &dyn Fn(usize, usize) -> f64) -> f64 {
    all_trees(0, n - 1)
        .iter()
        .map(|t| tree_score(t, weight))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Converts the library's tree into the oracle's type.
pub fn from_span_tree(tree: &attnsyntax::SpanTree) -> Bin {
    match tree {
        attnsyntax::SpanTree::Leaf(i) => Bin::Leaf(*i),
        attnsyntax::SpanTree::Node { left, right, .. } => Bin::Node(
            Box::new(from_span_tree(left)),
            Box::new(from_span_tree(right)),
        ),
    }
}

/// Crossing-based counts by direct enumeration of span pairs.
pub fn brute_counts(
    extracted: &[Span],
    gold: &[Span],
    n: usize,
    trivial: bool,
) -> (usize, usize, usize, usize) {
    let countable = |s: &Span| trivial || (s.len() > 1 && s.len() < n);
    let crosses = |a: &Span, b: &Span| {
        let overlap = a.start <= b.end && b.start <= a.end;
        let nested =
            (a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end);
        overlap && !nested
    };
    let (mut et, mut ec, mut gt, mut gc) = (0, 0, 0, 0);
    for e in extracted.iter().filter(|s| countable(s)) {
        et += 1;
        if gold.iter().all(|g| !crosses(e, g)) {
            ec += 1;
        }
    }
    for g in gold.iter().filter(|s| countable(s)) {
        gt += 1;
        if extracted.iter().all(|e| !crosses(g, e)) {
            gc += 1;
        }
    }
    (et, ec, gt, gc)
}
