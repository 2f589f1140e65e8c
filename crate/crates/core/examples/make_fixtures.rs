//! Regenerates the bundled corpora under `tests/data/`.
//!
//! ```text
//! cargo run --example make_fixtures [-- <dir>]
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use attnsyntax::attn_io::write_dumps;
use attnsyntax::synthetic::{planted_fixture, toy_corpus};
use attnsyntax::AttentionDump;

fn write_corpus(
    dir: &Path,
    name: &str,
    dumps: &[AttentionDump],
    gold: &[String],
) -> std::io::Result<()> {
    write_dumps(
        BufWriter::new(File::create(dir.join(format!("{name}.jsonl")))?),
        dumps,
    )?;
    let mut g = BufWriter::new(File::create(dir.join(format!("{name}.gold")))?);
    for line in gold {
        writeln!(g, "{line}")?;
    }
    g.flush()
}

fn main() -> std::io::Result<()> {
    let dir = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data"));
    std::fs::create_dir_all(&dir)?;
    let (dumps, gold) = toy_corpus();
    write_corpus(&dir, "toy", &dumps, &gold)?;
    let (dumps, gold) = planted_fixture();
    write_corpus(&dir, "planted", &dumps, &gold)?;
    Ok(())
}
