//! End-to-end helpers shared by the CLI, the head search and the tests.

use rayon::prelude::*;

use crate::attn_io::{segment_subwords, AttentionDump};
use crate::error::Result;
use crate::eval::{score_spans, CountingPolicy, EvalReport, SentenceScore};
use crate::heads::HeadMask;
use crate::phrase_extract::{build_phrase_table, PhraseTable};
use crate::tree_builder::{cky_parse, SpanTree};
use crate::treebank::{escape_token, postprocess, ConstituencyTree, RawTree};

/// Phrase table and best tree of one sentence.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub table: PhraseTable,
    pub tree: SpanTree,
}

pub fn extract(dump: &AttentionDump, mask: &HeadMask) -> Result<Extraction> {
    let table = build_phrase_table(dump, mask)?;
    let tree = cky_parse(&table, dump.len())?;
    Ok(Extraction { table, tree })
}

/// Extracts every sentence in parallel; results keep input order.
pub fn extract_all(dumps: &[AttentionDump], mask: &HeadMask) -> Vec<Result<Extraction>> {
    dumps.par_iter().map(|d| extract(d, mask)).collect()
}

/// Aligns a treebank tree with the subwords of its sentence. The last
/// subword is taken as EOS.
pub fn reference_tree<S: AsRef<str>>(
    sentence_id: &str,
    subwords: &[S],
    raw: &RawTree,
) -> Result<ConstituencyTree> {
    let map = segment_subwords(subwords)?;
    let segmentation: Vec<Vec<&str>> = map
        .word_spans
        .iter()
        .map(|s| {
            subwords[s.start..=s.end]
                .iter()
                .map(AsRef::as_ref)
                .collect()
        })
        .collect();
    postprocess(
        sentence_id,
        raw,
        &segmentation,
        subwords[map.eos_index].as_ref(),
    )
}

/// Escaped surface form of a subword sequence, as it appears in trees.
pub fn escaped_tokens<S: AsRef<str>>(subwords: &[S]) -> Vec<String> {
    subwords
        .iter()
        .map(|s| escape_token(s.as_ref()).into_owned())
        .collect()
}

/// Scores index trees against aligned reference trees.
pub fn evaluate(
    ids: &[&str],
    extracted: &[SpanTree],
    gold: &[ConstituencyTree],
    policy: CountingPolicy,
) -> EvalReport {
    assert_eq!(extracted.len(), gold.len());
    let sentences = extracted
        .par_iter()
        .zip(gold)
        .zip(ids)
        .map(|((e, g), id)| SentenceScore {
            sentence_id: id.to_string(),
            counts: score_spans(&e.spans(), &g.spans(), e.leaf_count(), policy),
        })
        .collect();
    EvalReport::new(policy, sentences)
}
