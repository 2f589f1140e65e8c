//! Loading and validation of per-sentence attention dumps.
//!
//! A dump file holds one JSON record per line:
//!
//! ```text
//! {"id": "s1", "subwords": ["vin@@", "e-@@", "growers", "EOS"], "attn": [[[[...]]]]}
//! ```
//!
//! `attn` is indexed `[layer][head][output_row][input_col]`, all 0-based.
//! Rows are output states and columns input states, so every row is a
//! softmax distribution and sums to one.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heads::{HeadId, Universe};
use crate::span::Span;

/// Symbol expected as the final subword of every sentence.
pub const DEFAULT_EOS: &str = "EOS";
/// Subword continuation marker.
pub const CONTINUATION: &str = "@@";
/// Allowed drift of a row sum from 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_RECORD_BYTES: usize = 64 * 1024 * 1024;

/// One sentence: its subwords and every attention matrix of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub id: String,
    pub subwords: Vec<String>,
    universe: Universe,
    // layer-major, then head, then row, then column
    weights: Vec<f64>,
}

impl AttentionDump {
    /// Builds a dump from a flat `[layer][head][row][col]` buffer and checks
    /// its shape and row sums. The EOS token is not checked here.
    pub fn new(
        id: impl Into<String>,
        subwords: Vec<String>,
        universe: Universe,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let dump = AttentionDump {
            id: id.into(),
            subwords,
            universe,
            weights,
        };
        dump.validate_shape()?;
        dump.validate_rows(ROW_SUM_TOLERANCE)?;
        Ok(dump)
    }

    /// Builds a dump from a closure computing one weight at a time.
    pub fn from_fn(
        id: impl Into<String>,
        subwords: Vec<String>,
        universe: Universe,
        mut weight: impl FnMut(HeadId, usize, usize) -> f64,
    ) -> Result<Self> {
        let n = subwords.len();
        let mut weights = Vec::with_capacity(universe.size() * n * n);
        for head in universe.iter() {
            for row in 0..n {
                for col in 0..n {
                    weights.push(weight(head, row, col));
                }
            }
        }
        AttentionDump::new(id, subwords, universe, weights)
    }

    pub fn len(&self) -> usize {
        self.subwords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subwords.is_empty()
    }

    pub fn universe(&self) -> Universe {
        self.universe
    }

    pub fn eos(&self) -> &str {
        self.subwords.last().map(String::as_str).unwrap_or("")
    }

    /// The N×N matrix of one head, row-major.
    pub fn matrix(&self, head: HeadId) -> &[f64] {
        assert!(self.universe.contains(head), "head {head} not in dump");
        let n = self.len();
        let offset = (head.layer * self.universe.heads + head.head) * n * n;
        &self.weights[offset..offset + n * n]
    }

    pub fn weight(&self, head: HeadId, row: usize, col: usize) -> f64 {
        self.matrix(head)[row * self.len() + col]
    }

    fn invalid(&self, message: impl Into<String>) -> Error {
        Error::Validation {
            sentence: self.id.clone(),
            message: message.into(),
        }
    }

    fn validate_shape(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(self.invalid("sentence has no subwords"));
        }
        if self.universe.layers == 0 || self.universe.heads == 0 {
            return Err(self.invalid("dump needs at least one layer and one head"));
        }
        let expected = self.universe.size() * n * n;
        if self.weights.len() != expected {
            return Err(self.invalid(format!(
                "expected {expected} attention weights for {} heads over {n} subwords, found {}",
                self.universe.size(),
                self.weights.len()
            )));
        }
        Ok(())
    }

    fn validate_rows(&self, tolerance: f64) -> Result<()> {
        let n = self.len();
        for head in self.universe.iter() {
            for (row, values) in self.matrix(head).chunks_exact(n).enumerate() {
                if let Some(col) = values.iter().position(|w| !(0.0..=1.0).contains(w)) {
                    return Err(self.invalid(format!(
                        "weight {} at head {head}, row {row}, column {col} is outside [0, 1]",
                        values[col]
                    )));
                }
                let sum: f64 = values.iter().sum();
                if (sum - 1.0).abs() > tolerance {
                    return Err(Error::RowSum {
                        sentence: self.id.clone(),
                        head,
                        row,
                        sum,
                        tolerance,
                    });
                }
            }
        }
        Ok(())
    }

    fn check_eos(&self, eos: &str) -> Result<()> {
        if self.eos() != eos {
            return Err(self.invalid(format!(
                "final subword is `{}`, expected the EOS symbol `{eos}`",
                self.eos()
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RecordIn {
    id: String,
    subwords: Vec<String>,
    attn: Vec<Vec<Vec<Vec<f64>>>>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    subwords: &'a [String],
    attn: Vec<Vec<Vec<&'a [f64]>>>,
}

impl RecordIn {
    fn into_dump(self) -> Result<AttentionDump> {
        let n = self.subwords.len();
        let layers = self.attn.len();
        let heads = self.attn.first().map_or(0, Vec::len);
        let invalid = |message: String| Error::Validation {
            sentence: self.id.clone(),
            message,
        };
        let mut weights = Vec::with_capacity(layers * heads * n * n);
        for (l, layer) in self.attn.iter().enumerate() {
            if layer.len() != heads {
                return Err(invalid(format!(
                    "layer {} has {} heads, layer 1 has {heads}",
                    l + 1,
                    layer.len()
                )));
            }
            for (h, matrix) in layer.iter().enumerate() {
                if matrix.len() != n {
                    return Err(invalid(format!(
                        "head {}:{} has {} rows for {n} subwords",
                        l + 1,
                        h + 1,
                        matrix.len()
                    )));
                }
                for (r, row) in matrix.iter().enumerate() {
                    if row.len() != n {
                        return Err(invalid(format!(
                            "head {}:{} row {r} has {} columns for {n} subwords",
                            l + 1,
                            h + 1,
                            row.len()
                        )));
                    }
                    weights.extend_from_slice(row);
                }
            }
        }
        AttentionDump::new(
            self.id,
            self.subwords,
            Universe::new(layers, heads),
            weights,
        )
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub eos: String,
    pub max_record_bytes: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            eos: DEFAULT_EOS.to_string(),
            max_record_bytes: DEFAULT_MAX_RECORD_BYTES,
        }
    }
}

/// Streaming reader yielding one validated dump per non-blank line.
pub struct DumpReader<R> {
    reader: R,
    options: LoadOptions,
    line: usize,
    buf: Vec<u8>,
}

impl<R: BufRead> DumpReader<R> {
    pub fn new(reader: R, options: LoadOptions) -> Self {
        DumpReader {
            reader,
            options,
            line: 0,
            buf: Vec::new(),
        }
    }

    /// Reads one line, refusing lines longer than the record cap.
    fn read_line(&mut self) -> Result<Option<()>> {
        self.buf.clear();
        let limit = self.options.max_record_bytes as u64 + 1;
        let read = (&mut self.reader)
            .take(limit)
            .read_until(b'\n', &mut self.buf)
            .map_err(|e| Error::Parse {
                line: self.line + 1,
                message: e.to_string(),
            })?;
        if read == 0 {
            return Ok(None);
        }
        self.line += 1;
        if self.buf.last() == Some(&b'\n') {
            self.buf.pop();
        } else if read as u64 == limit {
            // skip the rest of the oversized line so the next record is readable
            let mut sink = Vec::new();
            let _ = self.reader.read_until(b'\n', &mut sink);
            return Err(Error::RecordTooLarge {
                line: self.line,
                limit: self.options.max_record_bytes,
            });
        }
        if self.buf.len() > self.options.max_record_bytes {
            return Err(Error::RecordTooLarge {
                line: self.line,
                limit: self.options.max_record_bytes,
            });
        }
        Ok(Some(()))
    }

    fn next_record(&mut self) -> Option<Result<AttentionDump>> {
        loop {
            match self.read_line() {
                Ok(None) => return None,
                Err(e) => return Some(Err(e)),
                Ok(Some(())) => {}
            }
            if self.buf.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let line = self.line;
            let record = serde_json::from_slice::<RecordIn>(&self.buf).map_err(|e| Error::Parse {
                line,
                message: e.to_string(),
            });
            let eos = &self.options.eos;
            return Some(
                record
                    .and_then(RecordIn::into_dump)
                    .and_then(|dump| dump.check_eos(eos).map(|()| dump)),
            );
        }
    }

    /// Line number of the most recently read record, 1-based.
    pub fn line(&self) -> usize {
        self.line
    }
}

impl<R: BufRead> Iterator for DumpReader<R> {
    type Item = Result<AttentionDump>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_record()
    }
}

pub fn open_dump(path: &Path, options: LoadOptions) -> Result<DumpReader<BufReader<File>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(DumpReader::new(BufReader::new(file), options))
}

/// Loads every dump of a file in file order, failing on the first bad record.
pub fn load_dump(path: &Path) -> Result<Vec<AttentionDump>> {
    load_dump_with(path, LoadOptions::default())
}

pub fn load_dump_with(path: &Path, options: LoadOptions) -> Result<Vec<AttentionDump>> {
    open_dump(path, options)?.collect()
}

pub fn read_dumps(reader: impl BufRead) -> Result<Vec<AttentionDump>> {
    DumpReader::new(reader, LoadOptions::default()).collect()
}

/// Writes one dump as a single JSON line.
pub fn write_record(mut writer: impl Write, dump: &AttentionDump) -> std::io::Result<()> {
    let n = dump.len();
    let attn = (0..dump.universe.layers)
        .map(|l| {
            (0..dump.universe.heads)
                .map(|h| dump.matrix(HeadId::new(l, h)).chunks_exact(n).collect())
                .collect()
        })
        .collect();
    let record = RecordOut {
        id: &dump.id,
        subwords: &dump.subwords,
        attn,
    };
    serde_json::to_writer(&mut writer, &record)?;
    writer.write_all(b"\n")
}

pub fn write_dumps<'a>(
    mut writer: impl Write,
    dumps: impl IntoIterator<Item = &'a AttentionDump>,
) -> std::io::Result<()> {
    for dump in dumps {
        write_record(&mut writer, dump)?;
    }
    writer.flush()
}

/// Alignment of subwords to surface words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordMap {
    /// One span per surface word, covering every subword except EOS.
    pub word_spans: Vec<Span>,
    pub eos_index: usize,
}

impl SubwordMap {
    /// Groups subwords of each word, for use as a treebank segmentation.
    pub fn segmentation<'a>(&self, subwords: &'a [String]) -> Vec<Vec<&'a str>> {
        self.word_spans
            .iter()
            .map(|s| {
                subwords[s.start..=s.end]
                    .iter()
                    .map(String::as_str)
                    .collect()
            })
            .collect()
    }
}

pub fn subword_map(dump: &AttentionDump) -> Result<SubwordMap> {
    segment_subwords(&dump.subwords)
}

/// Splits a subword sequence whose last token is EOS into words. A token
/// ending in `@@` continues into the next token.
pub fn segment_subwords<S: AsRef<str>>(subwords: &[S]) -> Result<SubwordMap> {
    let Some(eos_index) = subwords.len().checked_sub(1) else {
        return Err(Error::Segmentation("no EOS token".into()));
    };
    let mut word_spans = Vec::new();
    let mut start = 0;
    for (i, token) in subwords[..eos_index].iter().enumerate() {
        if !token.as_ref().ends_with(CONTINUATION) {
            word_spans.push(Span::new(start, i));
            start = i + 1;
        }
    }
    if start != eos_index {
        return Err(Error::Segmentation(format!(
            "token `{}` before EOS carries the `{CONTINUATION}` continuation marker",
            subwords[eos_index - 1].as_ref()
        )));
    }
    Ok(SubwordMap {
        word_spans,
        eos_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tokens(words: &[&str]) -> Vec<String> {
        words.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn loads_identity_record() {
        let text = r#"{"id":"a","subwords":["x","y","EOS"],"attn":[[[[1,0,0],[0,1,0],[0,0,1]]]]}"#;
        let dumps = read_dumps(text.as_bytes()).unwrap();
        assert_eq!(dumps.len(), 1);
        assert_eq!(dumps[0].len(), 3);
        assert_eq!(dumps[0].universe(), Universe::new(1, 1));
        assert_eq!(dumps[0].weight(HeadId::new(0, 0), 1, 1), 1.0);
    }

    #[test]
    fn rejects_row_sum_violation() {
        let text =
            r#"{"id":"a","subwords":["x","y","EOS"],"attn":[[[[1,0,0],[0.5,0.6,0.0],[0,0,1]]]]}"#;
        match read_dumps(text.as_bytes()) {
            Err(Error::RowSum {
                sentence,
                head,
                row,
                ..
            }) => {
                assert_eq!(sentence, "a");
                assert_eq!(head, HeadId::new(0, 0));
                assert_eq!(row, 1);
            }
            other => panic!("expected row-sum error, got {other:?}"),
        }
    }

    #[test]
    fn tolerates_float32_drift() {
        let text = r#"{"id":"a","subwords":["x","EOS"],"attn":[[[[0.9995,0],[0.001,0.9994]]]]}"#;
        assert!(read_dumps(text.as_bytes()).is_ok());
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let text = r#"{"id":"a","subwords":["x","y","EOS"],"attn":[[[[1,0,0],[0,1,0]]]]}"#;
        assert!(matches!(
            read_dumps(text.as_bytes()),
            Err(Error::Validation { .. })
        ));
        let ragged = r#"{"id":"a","subwords":["x","EOS"],"attn":[[[[1,0],[0,1]]],[]]}"#;
        assert!(matches!(
            read_dumps(ragged.as_bytes()),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn malformed_record_names_line() {
        let good = r#"{"id":"a","subwords":["EOS"],"attn":[[[[1]]]]}"#;
        let text = format!("{good}\n\n{{\"id\": oops}}\n");
        match read_dumps(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_missing_eos() {
        let text = r#"{"id":"a","subwords":["x","y"],"attn":[[[[1,0],[0,1]]]]}"#;
        assert!(matches!(
            read_dumps(text.as_bytes()),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn enforces_record_cap() {
        let good = r#"{"id":"a","subwords":["EOS"],"attn":[[[[1]]]]}"#;
        let text = format!("{good}\n{good}\n");
        let options = LoadOptions {
            max_record_bytes: 20,
            ..LoadOptions::default()
        };
        let results: Vec<_> = DumpReader::new(text.as_bytes(), options).collect();
        assert_eq!(results.len(), 2);
        assert!(results
            .iter()
            .all(|r| matches!(r, Err(Error::RecordTooLarge { .. }))));
    }

    #[test]
    fn segmentation_joins_continuations() {
        let map =
            segment_subwords(&tokens(&["vin@@", "e-@@", "growers", "suffer", "EOS"])).unwrap();
        assert_eq!(map.word_spans, vec![Span::new(0, 2), Span::single(3)]);
        assert_eq!(map.eos_index, 4);

        let map = segment_subwords(&tokens(&["hello", "EOS"])).unwrap();
        assert_eq!(map.word_spans, vec![Span::single(0)]);
        assert_eq!(map.eos_index, 1);

        let map = segment_subwords(&tokens(&["a@@", "b@@", "c", "d", "EOS"])).unwrap();
        assert_eq!(map.word_spans, vec![Span::new(0, 2), Span::single(3)]);
    }

    #[test]
    fn segmentation_rejects_dangling_marker() {
        assert!(matches!(
            segment_subwords(&tokens(&["a", "b@@", "EOS"])),
            Err(Error::Segmentation(_))
        ));
    }
}
