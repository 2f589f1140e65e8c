//! From soft attention to weighted phrase candidates.
//!
//! Each head's matrix is hardened to its row maxima; maximal runs of
//! consecutive rows attending to the same column ("balusters") become
//! phrase candidates weighted by their mean retained attention. Weights of
//! a span found in several heads are summed, then rescaled so that every
//! phrase length has mean weight one within the sentence.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::attn_io::AttentionDump;
use crate::error::{Error, Result};
use crate::heads::{HeadId, HeadMask};
use crate::span::Span;

/// Row maximum kept for one output state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardenedRow {
    pub col: usize,
    pub weight: f64,
}

/// Attention matrix reduced to a single retained weight per row.
#[derive(Debug, Clone, PartialEq)]
pub struct HardenedMatrix {
    rows: Vec<HardenedRow>,
}

impl HardenedMatrix {
    pub fn rows(&self) -> &[HardenedRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense row-major N×N matrix with zeros outside the retained maxima.
    pub fn to_dense(&self) -> Vec<f64> {
        let n = self.rows.len();
        let mut dense = vec![0.0; n * n];
        for (o, row) in self.rows.iter().enumerate() {
            dense[o * n + row.col] = row.weight;
        }
        dense
    }
}

/// Keeps the maximal weight of every row; ties go to the leftmost column.
///
/// `matrix` is row-major and must be square.
pub fn harden(matrix: &[f64]) -> HardenedMatrix {
    let n = (matrix.len() as f64).sqrt() as usize;
    assert_eq!(n * n, matrix.len(), "attention matrix is not square");
    let rows = matrix
        .chunks_exact(n.max(1))
        .take(n)
        .map(|row| {
            let mut best = HardenedRow {
                col: 0,
                weight: row[0],
            };
            for (col, &weight) in row.iter().enumerate().skip(1) {
                if weight > best.weight {
                    best = HardenedRow { col, weight };
                }
            }
            best
        })
        .collect();
    HardenedMatrix { rows }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baluster {
    pub head: HeadId,
    pub span: Span,
    pub target_col: usize,
    pub mean_weight: f64,
}

pub const MIN_BALUSTER_LEN: usize = 2;

/// Maximal runs of at least two consecutive rows sharing their argmax column.
pub fn find_balusters(hardened: &HardenedMatrix, head: HeadId) -> Vec<Baluster> {
    let rows = hardened.rows();
    let mut balusters = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let col = rows[start].col;
        let end = start + rows[start..].iter().take_while(|r| r.col == col).count() - 1;
        let span = Span::new(start, end);
        if span.len() >= MIN_BALUSTER_LEN {
            let total: f64 = rows[start..=end].iter().map(|r| r.weight).sum();
            balusters.push(Baluster {
                head,
                span,
                target_col: col,
                mean_weight: total / span.len() as f64,
            });
        }
        start = end + 1;
    }
    balusters
}

/// Balusters of every head of one sentence, computed once and reused for
/// any number of head masks.
#[derive(Debug, Clone)]
pub struct SentenceBalusters {
    pub sentence_id: String,
    pub len: usize,
    by_head: BTreeMap<HeadId, Vec<Baluster>>,
}

impl SentenceBalusters {
    pub fn from_dump(dump: &AttentionDump) -> Self {
        let by_head = dump
            .universe()
            .iter()
            .map(|head| (head, find_balusters(&harden(dump.matrix(head)), head)))
            .collect();
        SentenceBalusters {
            sentence_id: dump.id.clone(),
            len: dump.len(),
            by_head,
        }
    }

    pub fn head(&self, head: HeadId) -> &[Baluster] {
        self.by_head.get(&head).map_or(&[], Vec::as_slice)
    }

    /// Phrase table restricted to the heads of `mask`.
    pub fn phrase_table(&self, mask: &HeadMask) -> Result<PhraseTable> {
        if mask.is_empty() {
            return Err(Error::Mask(
                "phrase extraction needs at least one head".into(),
            ));
        }
        if let Some(missing) = mask.iter().find(|h| !self.by_head.contains_key(h)) {
            return Err(Error::Mask(format!(
                "head {missing} is not present in sentence {}",
                self.sentence_id
            )));
        }
        Ok(PhraseTable::from_balusters(
            self.sentence_id.clone(),
            mask.iter().flat_map(|h| self.head(h)),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhraseWeight {
    /// Sum of mean baluster weights over the heads containing the span.
    pub raw: f64,
    /// Raw weight rescaled so each phrase length averages one.
    pub equalized: f64,
}

/// Weighted phrase candidates of one sentence. Spans not present weigh 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PhraseTable {
    pub sentence_id: String,
    entries: BTreeMap<Span, PhraseWeight>,
}

impl PhraseTable {
    pub fn from_balusters<'a>(
        sentence_id: String,
        balusters: impl IntoIterator<Item = &'a Baluster>,
    ) -> Self {
        let mut raw: BTreeMap<Span, f64> = BTreeMap::new();
        for b in balusters {
            *raw.entry(b.span).or_insert(0.0) += b.mean_weight;
        }
        PhraseTable::from_raw(sentence_id, raw)
    }

    /// Equalizes raw weights per phrase length. Non-positive raw weights are
    /// dropped, as they never come out of a baluster.
    pub fn from_raw(sentence_id: String, raw: impl IntoIterator<Item = (Span, f64)>) -> Self {
        let raw: BTreeMap<Span, f64> = raw.into_iter().filter(|&(_, w)| w > 0.0).collect();
        let mut totals: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        for (span, &w) in &raw {
            let t = totals.entry(span.len()).or_insert((0.0, 0));
            t.0 += w;
            t.1 += 1;
        }
        let entries = raw
            .into_iter()
            .map(|(span, w)| {
                let (sum, count) = totals[&span.len()];
                let equalized = w * count as f64 / sum;
                (span, PhraseWeight { raw: w, equalized })
            })
            .collect();
        PhraseTable {
            sentence_id,
            entries,
        }
    }

    pub fn empty(sentence_id: impl Into<String>) -> Self {
        PhraseTable {
            sentence_id: sentence_id.into(),
            entries: BTreeMap::new(),
        }
    }

    pub fn get(&self, span: Span) -> Option<PhraseWeight> {
        self.entries.get(&span).copied()
    }

    pub fn raw(&self, span: Span) -> f64 {
        self.get(span).map_or(0.0, |w| w.raw)
    }

    pub fn weight(&self, span: Span) -> f64 {
        self.get(span).map_or(0.0, |w| w.equalized)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Span, PhraseWeight)> + '_ {
        self.entries.iter().map(|(s, w)| (*s, *w))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One JSON line for `--emit-phrases` debugging output.
    pub fn to_json_line(&self) -> String {
        #[derive(Serialize)]
        struct Entry {
            start: usize,
            end: usize,
            raw: f64,
            weight: f64,
        }
        #[derive(Serialize)]
        struct Line<'a> {
            id: &'a str,
            phrases: Vec<Entry>,
        }
        let line = Line {
            id: &self.sentence_id,
            phrases: self
                .iter()
                .map(|(s, w)| Entry {
                    start: s.start,
                    end: s.end,
                    raw: w.raw,
                    weight: w.equalized,
                })
                .collect(),
        };
        serde_json::to_string(&line).expect("phrase table serializes")
    }
}

pub fn build_phrase_table(dump: &AttentionDump, mask: &HeadMask) -> Result<PhraseTable> {
    if mask.is_empty() {
        return Err(Error::Mask(
            "phrase extraction needs at least one head".into(),
        ));
    }
    let universe = dump.universe();
    if let Some(missing) = mask.iter().find(|h| !universe.contains(*h)) {
        return Err(Error::Mask(format!(
            "head {missing} is not present in sentence {}",
            dump.id
        )));
    }
    let balusters: Vec<Baluster> = mask
        .iter()
        .flat_map(|head| find_balusters(&harden(dump.matrix(head)), head))
        .collect();
    Ok(PhraseTable::from_balusters(dump.id.clone(), &balusters))
}
