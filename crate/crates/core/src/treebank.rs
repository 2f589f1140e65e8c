//! Reference trees: bracketed reading and alignment to subwords.
//!
//! Labeled trees from a treebank go through four steps before they can be
//! compared with extracted trees: labels are dropped, every word becomes a
//! one-word phrase, words are split into their subwords, and phrases with
//! a single child (or a single subword) are collapsed into that child. The
//! sentence's EOS token is then attached as the last child of the root.

use std::borrow::Cow;
use std::fmt;

use crate::error::{Error, Result};
use crate::span::Span;

pub const LRB: &str = "-LRB-";
pub const RRB: &str = "-RRB-";

/// Replaces literal parentheses in a token by `-LRB-` / `-RRB-`.
pub fn escape_token(token: &str) -> Cow<'_, str> {
    if token.contains(['(', ')']) {
        Cow::Owned(token.replace('(', LRB).replace(')', RRB))
    } else {
        Cow::Borrowed(token)
    }
}

/// Labeled n-ary tree as read from a treebank file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RawTree {
    Leaf(String),
    Node {
        label: Option<String>,
        children: Vec<RawTree>,
    },
}

impl RawTree {
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            RawTree::Leaf(t) => out.push(t),
            RawTree::Node { children, .. } => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }
}

impl fmt::Display for RawTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RawTree::Leaf(t) => f.write_str(t),
            RawTree::Node { label, children } => {
                f.write_str("(")?;
                if let Some(label) = label {
                    f.write_str(label)?;
                }
                for (i, c) in children.iter().enumerate() {
                    if i > 0 || label.is_some() {
                        f.write_str(" ")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Unlabeled n-ary tree over (escaped) subword tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConstituencyTree {
    Leaf(String),
    Node(Vec<ConstituencyTree>),
}

impl ConstituencyTree {
    pub fn leaves(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            ConstituencyTree::Leaf(t) => out.push(t),
            ConstituencyTree::Node(children) => children.iter().for_each(|c| c.collect_leaves(out)),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            ConstituencyTree::Leaf(_) => 1,
            ConstituencyTree::Node(children) => children.iter().map(Self::leaf_count).sum(),
        }
    }

    /// Spans of every node, leaves included, in preorder.
    pub fn spans(&self) -> Vec<Span> {
        let mut out = Vec::new();
        self.collect_spans(0, &mut out);
        out
    }

    fn collect_spans(&self, start: usize, out: &mut Vec<Span>) -> usize {
        match self {
            ConstituencyTree::Leaf(_) => {
                out.push(Span::single(start));
                start + 1
            }
            ConstituencyTree::Node(children) => {
                let slot = out.len();
                out.push(Span::single(start));
                let mut next = start;
                for c in children {
                    next = c.collect_spans(next, out);
                }
                out[slot] = Span::new(start, next - 1);
                next
            }
        }
    }

    /// True when no node has exactly one child.
    pub fn is_flat(&self) -> bool {
        match self {
            ConstituencyTree::Leaf(_) => true,
            ConstituencyTree::Node(children) => {
                children.len() != 1 && children.iter().all(Self::is_flat)
            }
        }
    }

    pub fn to_raw(&self) -> RawTree {
        match self {
            ConstituencyTree::Leaf(t) => RawTree::Leaf(t.clone()),
            ConstituencyTree::Node(children) => RawTree::Node {
                label: None,
                children: children.iter().map(Self::to_raw).collect(),
            },
        }
    }

    /// Appends `eos` as the last child of the root.
    pub fn attach_eos(self, eos: &str) -> ConstituencyTree {
        let eos = ConstituencyTree::Leaf(escape_token(eos).into_owned());
        match self {
            ConstituencyTree::Node(mut children) => {
                children.push(eos);
                ConstituencyTree::Node(children)
            }
            leaf => ConstituencyTree::Node(vec![leaf, eos]),
        }
    }
}

impl fmt::Display for ConstituencyTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstituencyTree::Leaf(t) => f.write_str(t),
            ConstituencyTree::Node(children) => {
                f.write_str("(")?;
                for (i, c) in children.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tok<'a> {
    Open,
    Close,
    Word(&'a str),
}

struct Lexer<'a> {
    text: &'a str,
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn new(text: &'a str) -> Self {
        Lexer { text, pos: 0 }
    }

    fn skip_ws(&mut self) {
        let rest = &self.text[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    /// Next token and its byte offset; `None` at end of input.
    fn peek(&mut self) -> Option<(usize, Tok<'a>)> {
        self.skip_ws();
        let rest = &self.text[self.pos..];
        let tok = match rest.chars().next()? {
            '(' => Tok::Open,
            ')' => Tok::Close,
            _ => {
                let end = rest
                    .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
                    .unwrap_or(rest.len());
                Tok::Word(&rest[..end])
            }
        };
        Some((self.pos, tok))
    }

    fn bump(&mut self, tok: Tok<'a>) {
        self.pos += match tok {
            Tok::Open | Tok::Close => 1,
            Tok::Word(w) => w.len(),
        };
    }

    fn next(&mut self) -> Option<(usize, Tok<'a>)> {
        let item = self.peek()?;
        self.bump(item.1);
        Some(item)
    }

    fn error(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Bracket {
            offset,
            message: message.into(),
        }
    }

    fn eof(&self) -> Error {
        self.error(
            self.text.len(),
            "unexpected end of input, unbalanced parentheses",
        )
    }

    fn finish(&mut self) -> Result<()> {
        match self.peek() {
            None => Ok(()),
            Some((offset, _)) => Err(self.error(offset, "trailing input after the tree")),
        }
    }
}

/// Reads a labeled tree such as `(S (NP the dog) (VP barks))`.
///
/// A word directly after an opening parenthesis is the node's label;
/// `((S ...))` style roots without a label are accepted.
pub fn read_bracketed(text: &str) -> Result<RawTree> {
    let mut lex = Lexer::new(text);
    match lex.next() {
        Some((_, Tok::Open)) => {}
        Some((offset, _)) => return Err(lex.error(offset, "expected `(`")),
        None => return Err(lex.error(0, "empty input")),
    }
    let tree = read_labeled_node(&mut lex)?;
    lex.finish()?;
    Ok(tree)
}

// called after the opening parenthesis has been consumed
fn read_labeled_node(lex: &mut Lexer<'_>) -> Result<RawTree> {
    let label = match lex.peek() {
        Some((_, Tok::Word(w))) => {
            lex.bump(Tok::Word(w));
            Some(w.to_string())
        }
        Some(_) => None,
        None => return Err(lex.eof()),
    };
    let mut children = Vec::new();
    loop {
        match lex.next() {
            Some((_, Tok::Open)) => children.push(read_labeled_node(lex)?),
            Some((_, Tok::Word(w))) => children.push(RawTree::Leaf(w.to_string())),
            Some((offset, Tok::Close)) => {
                if children.is_empty() {
                    return Err(lex.error(offset, "constituent without children"));
                }
                return Ok(RawTree::Node { label, children });
            }
            None => return Err(lex.eof()),
        }
    }
}

/// Reads an unlabeled tree such as `((vin@@ e-@@ growers) suffer EOS)`,
/// as written by extraction. A bare token is a one-leaf tree.
pub fn read_unlabeled(text: &str) -> Result<ConstituencyTree> {
    let mut lex = Lexer::new(text);
    let tree = match lex.next() {
        Some((_, Tok::Open)) => read_unlabeled_node(&mut lex)?,
        Some((_, Tok::Word(w))) => ConstituencyTree::Leaf(w.to_string()),
        Some((offset, Tok::Close)) => return Err(lex.error(offset, "unexpected `)`")),
        None => return Err(lex.error(0, "empty input")),
    };
    lex.finish()?;
    Ok(tree)
}

fn read_unlabeled_node(lex: &mut Lexer<'_>) -> Result<ConstituencyTree> {
    let mut children = Vec::new();
    loop {
        match lex.next() {
            Some((_, Tok::Open)) => children.push(read_unlabeled_node(lex)?),
            Some((_, Tok::Word(w))) => children.push(ConstituencyTree::Leaf(w.to_string())),
            Some((offset, Tok::Close)) => {
                if children.is_empty() {
                    return Err(lex.error(offset, "empty constituent"));
                }
                return Ok(ConstituencyTree::Node(children));
            }
            None => return Err(lex.eof()),
        }
    }
}

/// Drops labels, wraps and splits words into subwords and collapses
/// single-child phrases. `segmentation` holds the subwords of each leaf
/// word of `raw`, in order.
pub fn postprocess_words<S: AsRef<str>>(
    sentence_id: &str,
    raw: &RawTree,
    segmentation: &[Vec<S>],
) -> Result<ConstituencyTree> {
    let words = raw.leaves().len();
    if words != segmentation.len() {
        return Err(Error::Alignment {
            sentence: sentence_id.to_string(),
            message: format!(
                "reference tree has {words} words, segmentation has {}",
                segmentation.len()
            ),
        });
    }
    if let Some(i) = segmentation.iter().position(Vec::is_empty) {
        return Err(Error::Alignment {
            sentence: sentence_id.to_string(),
            message: format!("word {} has no subwords", i + 1),
        });
    }
    let mut next_word = 0;
    let split = split_words(raw, segmentation, &mut next_word);
    Ok(flatten(split))
}

/// [`postprocess_words`] followed by attaching `eos` to the root.
pub fn postprocess<S: AsRef<str>>(
    sentence_id: &str,
    raw: &RawTree,
    segmentation: &[Vec<S>],
    eos: &str,
) -> Result<ConstituencyTree> {
    Ok(postprocess_words(sentence_id, raw, segmentation)?.attach_eos(eos))
}

fn split_words<S: AsRef<str>>(
    raw: &RawTree,
    segmentation: &[Vec<S>],
    next_word: &mut usize,
) -> ConstituencyTree {
    match raw {
        RawTree::Leaf(_) => {
            let subwords = &segmentation[*next_word];
            *next_word += 1;
            ConstituencyTree::Node(
                subwords
                    .iter()
                    .map(|s| ConstituencyTree::Leaf(escape_token(s.as_ref()).into_owned()))
                    .collect(),
            )
        }
        RawTree::Node { children, .. } => ConstituencyTree::Node(
            children
                .iter()
                .map(|c| split_words(c, segmentation, next_word))
                .collect(),
        ),
    }
}

fn flatten(tree: ConstituencyTree) -> ConstituencyTree {
    match tree {
        ConstituencyTree::Leaf(_) => tree,
        ConstituencyTree::Node(children) => {
            let mut children: Vec<_> = children.into_iter().map(flatten).collect();
            if children.len() == 1 {
                children.pop().expect("one child")
            } else {
                ConstituencyTree::Node(children)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(words: &[&[&str]]) -> Vec<Vec<String>> {
        words
            .iter()
            .map(|w| w.iter().map(|s| s.to_string()).collect())
            .collect()
    }

    #[test]
    fn reads_labeled_tree() {
        let tree = read_bracketed("(S (VP vinegrowers suffer))").unwrap();
        let expected = RawTree::Node {
            label: Some("S".into()),
            children: vec![RawTree::Node {
                label: Some("VP".into()),
                children: vec![
                    RawTree::Leaf("vinegrowers".into()),
                    RawTree::Leaf("suffer".into()),
                ],
            }],
        };
        assert_eq!(tree, expected);
        assert_eq!(tree.to_string(), "(S (VP vinegrowers suffer))");
    }

    #[test]
    fn reads_single_leaf_node() {
        let tree = read_bracketed("(X a)").unwrap();
        assert_eq!(
            tree,
            RawTree::Node {
                label: Some("X".into()),
                children: vec![RawTree::Leaf("a".into())]
            }
        );
    }

    #[test]
    fn reads_ptb_style_unlabeled_root() {
        let tree = read_bracketed("( (S (NP (DT the) (NN dog)) (VP (VBZ barks))) )").unwrap();
        assert_eq!(tree.leaves(), vec!["the", "dog", "barks"]);
    }

    #[test]
    fn unbalanced_reports_eof_offset() {
        match read_bracketed("((a b)") {
            Err(Error::Bracket { offset, .. }) => assert_eq!(offset, 6),
            other => panic!("expected bracket error, got {other:?}"),
        }
        assert!(matches!(
            read_bracketed(""),
            Err(Error::Bracket { offset: 0, .. })
        ));
        assert!(matches!(read_bracketed("   "), Err(Error::Bracket { .. })));
        assert!(matches!(
            read_bracketed("(a b))"),
            Err(Error::Bracket { offset: 5, .. })
        ));
        assert!(matches!(read_bracketed("(S)"), Err(Error::Bracket { .. })));
    }

    #[test]
    fn reads_unlabeled_tree() {
        let tree = read_unlabeled("((vin@@ e-@@ growers) suffer EOS)").unwrap();
        assert_eq!(
            tree.leaves(),
            vec!["vin@@", "e-@@", "growers", "suffer", "EOS"]
        );
        assert_eq!(tree.to_string(), "((vin@@ e-@@ growers) suffer EOS)");
        assert_eq!(
            read_unlabeled("EOS").unwrap(),
            ConstituencyTree::Leaf("EOS".into())
        );
        assert!(read_unlabeled("(a ())").is_err());
        assert!(read_unlabeled("(a b) c").is_err());
    }

    #[test]
    fn postprocess_worked_example() {
        let raw = read_bracketed("(S (VP vinegrowers suffer))").unwrap();
        let s = seg(&[&["vin-", "e-", "growers"], &["suffer"]]);
        let tree = postprocess_words("ex", &raw, &s).unwrap();
        assert_eq!(tree.to_string(), "((vin- e- growers) suffer)");
        let tree = postprocess("ex", &raw, &s, "EOS").unwrap();
        assert_eq!(tree.to_string(), "((vin- e- growers) suffer EOS)");
    }

    #[test]
    fn single_word_sentence_collapses() {
        let raw = read_bracketed("(X hello)").unwrap();
        let tree = postprocess("ex", &raw, &seg(&[&["hello"]]), "EOS").unwrap();
        assert_eq!(tree.to_string(), "(hello EOS)");
    }

    #[test]
    fn nested_unary_chains_flatten() {
        let raw = read_bracketed("(ROOT (S (NP (NP (DT the))) (VP (V (VB runs)))))").unwrap();
        let tree = postprocess_words("ex", &raw, &seg(&[&["the"], &["ru@@", "ns"]])).unwrap();
        assert_eq!(tree.to_string(), "(the (ru@@ ns))");
        assert!(tree.is_flat());
    }

    #[test]
    fn segmentation_mismatch_names_sentence() {
        let raw = read_bracketed("(S a b)").unwrap();
        match postprocess("s7", &raw, &seg(&[&["a"]]), "EOS") {
            Err(Error::Alignment { sentence, .. }) => assert_eq!(sentence, "s7"),
            other => panic!("expected alignment error, got {other:?}"),
        }
    }

    #[test]
    fn spans_of_tree() {
        let tree = read_unlabeled("((a b c) d EOS)").unwrap();
        assert_eq!(
            tree.spans(),
            vec![
                Span::new(0, 4),
                Span::new(0, 2),
                Span::single(0),
                Span::single(1),
                Span::single(2),
                Span::single(3),
                Span::single(4)
            ]
        );
    }

    #[test]
    fn escapes_parentheses() {
        assert_eq!(escape_token("("), "-LRB-");
        assert_eq!(escape_token("a)b"), "a-RRB-b");
        assert!(matches!(escape_token("plain"), Cow::Borrowed(_)));
    }
}
