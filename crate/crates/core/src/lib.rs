//! Constituency trees from Transformer self-attention.
//!
//! The pipeline hardens every attention matrix of a sentence, collects the
//! runs of output states attending to a common input state as weighted
//! phrase candidates, and picks the binary tree that best agrees with them
//! using a CKY search. Trees are scored against treebank parses by
//! counting phrases that cross no phrase of the other tree.

pub mod attn_io;
pub mod error;
pub mod eval;
pub mod head_select;
pub mod heads;
pub mod phrase_extract;
pub mod pipeline;
pub mod render;
pub mod span;
pub mod synthetic;
pub mod tree_builder;
pub mod treebank;

pub use attn_io::{load_dump, subword_map, AttentionDump, SubwordMap};
pub use error::{Error, Result};
pub use eval::{is_consistent, score, CountingPolicy, Counts, EvalReport};
pub use head_select::{greedy_ablation, greedy_addition, layer_distribution, SelectionTrace};
pub use heads::{HeadId, HeadMask, Universe};
pub use phrase_extract::{
    build_phrase_table, find_balusters, harden, Baluster, HardenedMatrix, PhraseTable,
};
pub use span::Span;
pub use tree_builder::{
    cky_parse, lbal_tree, random_attention_baseline, rbal_tree, Chart, SpanTree,
};
pub use treebank::{postprocess, read_bracketed, ConstituencyTree, RawTree};
