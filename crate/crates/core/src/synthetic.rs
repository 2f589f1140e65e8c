//! Synthetic sentences, reference trees and attention dumps with known
//! structure, for tests, benchmarks and the bundled toy corpus.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::Exp1;

use crate::attn_io::{AttentionDump, DEFAULT_EOS};
use crate::heads::{HeadId, Universe};
use crate::pipeline::reference_tree;
use crate::span::Span;
use crate::tree_builder::{sentence_rng, SpanTree};
use crate::treebank::{read_bracketed, ConstituencyTree, RawTree};

/// Binary tree over `n` leaves, built by splitting every span at a
/// uniformly chosen point.
pub fn random_binary_tree<R: Rng>(rng: &mut R, n: usize) -> SpanTree {
    assert!(n >= 1);
    random_binary_over(rng, 0, n - 1)
}

fn random_binary_over<R: Rng>(rng: &mut R, start: usize, end: usize) -> SpanTree {
    if start == end {
        return SpanTree::Leaf(start);
    }
    let k = rng.random_range(start..end);
    SpanTree::node(
        random_binary_over(rng, start, k),
        random_binary_over(rng, k + 1, end),
    )
}

/// Right-branching binarization of every n-ary node.
pub fn binarize(tree: &ConstituencyTree) -> SpanTree {
    fn go(tree: &ConstituencyTree, next: &mut usize) -> SpanTree {
        match tree {
            ConstituencyTree::Leaf(_) => {
                *next += 1;
                SpanTree::Leaf(*next - 1)
            }
            ConstituencyTree::Node(children) => {
                let parts: Vec<SpanTree> = children.iter().map(|c| go(c, next)).collect();
                parts
                    .into_iter()
                    .rev()
                    .reduce(|right, left| SpanTree::node(left, right))
                    .expect("nodes have children")
            }
        }
    }
    go(tree, &mut 0)
}

/// Splits a laminar span family into levels of pairwise disjoint spans:
/// a span's level is the number of spans strictly containing it.
pub fn disjoint_levels(spans: &[Span]) -> Vec<Vec<Span>> {
    let mut spans: Vec<Span> = spans.iter().copied().filter(|s| s.len() >= 2).collect();
    spans.sort();
    spans.dedup();
    let mut levels: Vec<Vec<Span>> = Vec::new();
    for &s in &spans {
        let depth = spans.iter().filter(|o| **o != s && o.contains(&s)).count();
        if levels.len() <= depth {
            levels.resize(depth + 1, Vec::new());
        }
        levels[depth].push(s);
    }
    levels
}

/// One-hot matrix in which every span in `spans` (pairwise disjoint) is a
/// baluster targeting its first column; all other rows attend to
/// themselves.
pub fn planted_matrix(n: usize, spans: &[Span]) -> Vec<f64> {
    let mut target: Vec<usize> = (0..n).collect();
    for s in spans {
        for t in &mut target[s.start..=s.end] {
            *t = s.start;
        }
    }
    let mut m = vec![0.0; n * n];
    for (row, col) in target.into_iter().enumerate() {
        m[row * n + col] = 1.0;
    }
    m
}

pub fn diagonal_matrix(n: usize) -> Vec<f64> {
    planted_matrix(n, &[])
}

/// Dump with one layer whose heads hold, level by level, exactly the given
/// laminar spans as weight-1 balusters.
pub fn planted_dump(id: impl Into<String>, subwords: Vec<String>, spans: &[Span]) -> AttentionDump {
    let n = subwords.len();
    let mut matrices: Vec<Vec<f64>> = disjoint_levels(spans)
        .iter()
        .map(|level| planted_matrix(n, level))
        .collect();
    if matrices.is_empty() {
        matrices.push(diagonal_matrix(n));
    }
    let weights = matrices.concat();
    AttentionDump::new(id, subwords, Universe::new(1, matrices.len()), weights)
        .expect("one-hot rows are valid attention")
}

/// Placeholder subwords `t1 .. t{n-1} EOS`.
pub fn placeholder_subwords(n: usize) -> Vec<String> {
    let mut subwords: Vec<String> = (1..n).map(|i| format!("t{i}")).collect();
    subwords.push(DEFAULT_EOS.to_string());
    subwords
}

/// Random labeled tree over words `w1 .. w{words}`: every span of two or
/// more words is cut into two to four contiguous children.
pub fn random_gold_tree<R: Rng>(rng: &mut R, words: usize) -> RawTree {
    assert!(words >= 1);
    fn go<R: Rng>(rng: &mut R, start: usize, len: usize) -> RawTree {
        if len == 1 {
            return RawTree::Leaf(format!("w{}", start + 1));
        }
        let parts = rng.random_range(2..=len.min(4));
        let mut cuts: Vec<usize> = sample(rng, len - 1, parts - 1)
            .into_iter()
            .map(|c| c + 1)
            .collect();
        cuts.sort_unstable();
        cuts.push(len);
        let mut children = Vec::with_capacity(parts);
        let mut from = 0;
        for cut in cuts {
            children.push(go(rng, start + from, cut - from));
            from = cut;
        }
        RawTree::Node {
            label: Some("X".into()),
            children,
        }
    }
    let tree = go(rng, 0, words);
    match tree {
        leaf @ RawTree::Leaf(_) => RawTree::Node {
            label: Some("X".into()),
            children: vec![leaf],
        },
        node => node,
    }
}

/// Splits each word into one subword with probability 3/4, otherwise into
/// two or three `@@`-marked pieces; EOS is appended.
pub fn random_subwords<R: Rng>(rng: &mut R, words: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    for w in words {
        let pieces = if rng.random_bool(0.75) {
            1
        } else {
            rng.random_range(2..=3)
        };
        for p in 0..pieces {
            let piece = format!("{w}{}", (b'a' + p as u8) as char);
            if pieces == 1 {
                out.push(w.to_string());
            } else if p + 1 < pieces {
                out.push(format!("{piece}@@"));
            } else {
                out.push(piece);
            }
        }
    }
    out.push(DEFAULT_EOS.to_string());
    out
}

#[derive(Debug, Clone)]
pub struct SyntheticSentence {
    pub id: String,
    pub subwords: Vec<String>,
    pub raw: RawTree,
    pub gold: ConstituencyTree,
}

impl SyntheticSentence {
    /// Dump planting every span of a binarization of the reference tree.
    pub fn planted_dump(&self) -> AttentionDump {
        planted_dump(
            self.id.clone(),
            self.subwords.clone(),
            &binarize(&self.gold).spans(),
        )
    }
}

pub fn synthetic_sentence<R: Rng>(
    rng: &mut R,
    id: impl Into<String>,
    words: usize,
) -> SyntheticSentence {
    let id = id.into();
    let raw = random_gold_tree(rng, words);
    let subwords = random_subwords(rng, &raw.leaves());
    let gold = reference_tree(&id, &subwords, &raw).expect("synthetic segmentation aligns");
    SyntheticSentence {
        id,
        subwords,
        raw,
        gold,
    }
}

/// `count` sentences of `min_words..=max_words` words, seeded per sentence.
pub fn synthetic_suite(
    seed: u64,
    count: usize,
    min_words: usize,
    max_words: usize,
) -> Vec<SyntheticSentence> {
    (0..count)
        .map(|i| {
            let mut rng = sentence_rng(seed, i as u64);
            let words = rng.random_range(min_words..=max_words);
            synthetic_sentence(&mut rng, format!("syn{}", i + 1), words)
        })
        .collect()
}

/// Gold trees of the planted head-selection fixture: every phrase below
/// the root is flat, so one head can hold all of them.
pub const PLANTED_FIXTURE_GOLD: [&str; 3] = [
    "(S (NP the old man) (VP sells fish) (. .))",
    "(S (NP Parliament) (VP adopted the report) (. .))",
    "(S (NP vine-growers) (VP suffer losses) (. .))",
];

/// Dumps and gold lines of a two-head fixture: head 1:1 holds every gold
/// phrase as a baluster, head 1:2 is a plain diagonal. The phrases of each
/// tree are disjoint, since one head can only hold disjoint balusters.
pub fn planted_fixture() -> (Vec<AttentionDump>, Vec<String>) {
    let mut dumps = Vec::new();
    for (i, text) in PLANTED_FIXTURE_GOLD.iter().enumerate() {
        let raw = read_bracketed(text).expect("fixture tree parses");
        let words = raw.leaves();
        let mut subwords: Vec<String> = Vec::new();
        for w in &words {
            match *w {
                "vine-growers" => subwords.extend(["vin@@", "e-@@", "growers"].map(String::from)),
                w => subwords.push(w.to_string()),
            }
        }
        subwords.push(DEFAULT_EOS.to_string());
        let id = format!("p{}", i + 1);
        let gold = reference_tree(&id, &subwords, &raw).expect("fixture aligns");
        let n = subwords.len();
        let phrases: Vec<Span> = gold
            .spans()
            .into_iter()
            .filter(|s| s.len() >= 2 && s.len() < n)
            .collect();
        let weights = [planted_matrix(n, &phrases), diagonal_matrix(n)].concat();
        dumps.push(
            AttentionDump::new(id, subwords, Universe::new(1, 2), weights).expect("valid fixture"),
        );
    }
    (
        dumps,
        PLANTED_FIXTURE_GOLD.iter().map(|s| s.to_string()).collect(),
    )
}

/// Reference trees of the bundled toy corpus.
pub const TOY_GOLD: [&str; 10] = [
    "(ROOT (S (NP (PRP$ Their) (NNS plants)) (VP (VBP have) (VP (VBN been) (VP (VBN damaged)))) (. .)))",
    "(ROOT (S (NP (DT The) (NNS vine-growers)) (VP (VBP have) (VP (VBN suffered) (NP (NN loss)))) (. .)))",
    "(ROOT (S (NP (JJ Huge) (NNS areas)) (VP (VBP have) (VP (VBN been) (VP (VBN burned)))) (. .)))",
    "(ROOT (S (NP (DT This)) (VP (VBZ means) (SBAR (IN that) (S (NP (DT the) (NN harvest)) (VP (VBZ is) (ADJP (JJ lost)))))) (. .)))",
    "(ROOT (S (NP (DT The) (NN committee)) (VP (VBD adopted) (NP (DT the) (NN report))) (. .)))",
    "(ROOT (S (NP (PRP We)) (VP (MD must) (VP (VB support) (NP (DT the) (NNS winegrowers)))) (. .)))",
    "(ROOT (S (NP (NNP Parliament)) (VP (VBZ welcomes) (NP (DT this) (NN initiative))) (. .)))",
    "(ROOT (S (NP (DT The) (NN debate)) (VP (VBZ is) (VP (VBN closed))) (. .)))",
    "(ROOT (S (NP (NP (NNS Thousands)) (PP (IN of) (NP (NNS hectares)))) (VP (VBD were) (VP (VBN covered))) (. .)))",
    "(ROOT (S (NP (PRP I)) (VP (VBP thank) (NP (DT the) (NN rapporteur)) (PP (IN for) (NP (PRP$ her) (NN work)))) (. .)))",
];

const TOY_SPLITS: [(&str, &[&str]); 6] = [
    ("vine-growers", &["vin@@", "e-@@", "growers"]),
    ("winegrowers", &["wine@@", "grow@@", "ers"]),
    ("rapporteur", &["rap@@", "porteur"]),
    ("hectares", &["hect@@", "ares"]),
    ("initiative", &["initi@@", "ative"]),
    ("Parliament", &["Parlia@@", "ment"]),
];

pub const TOY_SEED: u64 = 2019;

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

/// Soft row peaking at `target` with weight `peak`, the rest spread at
/// random; values have four decimals and the row sums to one.
fn soft_row<R: Rng>(rng: &mut R, n: usize, target: usize, peak: f64) -> Vec<f64> {
    let mut row = vec![0.0; n];
    if n == 1 {
        row[0] = 1.0;
        return row;
    }
    let noise: Vec<f64> = (0..n - 1).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let total: f64 = noise.iter().sum();
    let mut rest = noise.iter().map(|x| round4(x / total * (1.0 - peak)));
    for (col, w) in row.iter_mut().enumerate() {
        if col != target {
            *w = rest.next().expect("n - 1 noise values");
        }
    }
    row[target] = 1.0 - row.iter().sum::<f64>();
    row
}

fn soft_matrix<R: Rng>(rng: &mut R, targets: &[usize]) -> Vec<f64> {
    let n = targets.len();
    targets
        .iter()
        .flat_map(|&t| {
            let peak = rng.random_range(0.55..0.95);
            soft_row(rng, n, t, peak)
        })
        .collect()
}

fn random_targets<R: Rng>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

fn level_targets(n: usize, spans: &[Span]) -> Vec<usize> {
    let mut target: Vec<usize> = (0..n).collect();
    for s in spans {
        for t in &mut target[s.start..=s.end] {
            *t = s.start;
        }
    }
    target
}

pub const TOY_UNIVERSE: Universe = Universe {
    layers: 2,
    heads: 4,
};

/// The bundled ten-sentence toy corpus: dumps and reference tree lines.
///
/// Heads: 1:1 diagonal, 1:2 deepest gold phrases, 1:3 previous token,
/// 1:4 noise, 2:1 second-deepest phrases, 2:2 phrases under the root,
/// 2:3 everything on EOS, 2:4 noise. All rows are soft.
pub fn toy_corpus() -> (Vec<AttentionDump>, Vec<String>) {
    let mut dumps = Vec::new();
    for (i, text) in TOY_GOLD.iter().enumerate() {
        let raw = read_bracketed(text).expect("toy tree parses");
        let mut subwords: Vec<String> = Vec::new();
        for w in raw.leaves() {
            match TOY_SPLITS.iter().find(|(word, _)| *word == w) {
                Some((_, pieces)) => subwords.extend(pieces.iter().map(|p| p.to_string())),
                None => subwords.push(w.to_string()),
            }
        }
        subwords.push(DEFAULT_EOS.to_string());
        let id = (i + 1).to_string();
        let gold = reference_tree(&id, &subwords, &raw).expect("toy corpus aligns");
        let n = subwords.len();
        let levels = disjoint_levels(&binarize(&gold).spans());
        let depth = levels.len();
        let level = |d: Option<usize>| d.and_then(|d| levels.get(d)).cloned().unwrap_or_default();

        let mut rng = sentence_rng(TOY_SEED, i as u64);
        let mut weights = Vec::with_capacity(TOY_UNIVERSE.size() * n * n);
        for head in TOY_UNIVERSE.iter() {
            let targets = match (head.layer, head.head) {
                (0, 0) => (0..n).collect(),
                (0, 1) => level_targets(n, &level(depth.checked_sub(1))),
                (0, 2) => (0..n).map(|o| o.saturating_sub(1)).collect(),
                (1, 0) => level_targets(n, &level(depth.checked_sub(2))),
                (1, 1) => level_targets(n, &level(Some(1))),
                (1, 2) => vec![n - 1; n],
                _ => random_targets(&mut rng, n),
            };
            weights.extend(soft_matrix(&mut rng, &targets));
        }
        dumps.push(
            AttentionDump::new(id, subwords, TOY_UNIVERSE, weights).expect("toy rows are valid"),
        );
    }
    (dumps, TOY_GOLD.iter().map(|s| s.to_string()).collect())
}

/// Head used by the single-head CLI example on the planted fixture.
pub const PLANTED_HEAD: HeadId = HeadId { layer: 0, head: 0 };
