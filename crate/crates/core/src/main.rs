use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use attnsyntax::attn_io::{open_dump, LoadOptions, DEFAULT_EOS};
use attnsyntax::eval::{score_trees, CountingPolicy, EvalReport, SentenceScore};
use attnsyntax::head_select::{select_heads, DevSentence, Objective, SelectionOptions, Strategy};
use attnsyntax::heads::{HeadId, HeadMask, Universe};
use attnsyntax::pipeline::{escaped_tokens, extract, reference_tree};
use attnsyntax::render::{write_heatmap, ImageFormat};
use attnsyntax::tree_builder::{lbal_tree, random_attention_dump, rbal_tree, sentence_rng};
use attnsyntax::treebank::{read_bracketed, read_unlabeled};
use attnsyntax::{AttentionDump, Error, Result};

#[derive(Parser)]
#[command(
    name = "attnsyntax",
    version,
    about = "Constituency trees from Transformer self-attention"
)]
struct Cli {
    /// Worker threads (default: one per core). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Symbol every sentence of a dump must end with.
    #[arg(long, global = true, default_value = DEFAULT_EOS)]
    eos: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract one bracketed tree per sentence of a dump.
    Extract(ExtractArgs),
    /// Score extracted trees against reference trees.
    Eval(EvalArgs),
    /// Write baseline trees for the sentences of a dump.
    Baseline(BaselineArgs),
    /// Greedy search for the heads giving the most precise trees.
    SelectHeads(SelectArgs),
    /// Render attention matrices as grayscale heatmaps.
    Render(RenderArgs),
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    dump: PathBuf,
    /// `all` or a comma-separated list of 1-based `layer:head` pairs.
    #[arg(long, default_value = "all")]
    heads: String,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every sentence's phrase table as JSON lines.
    #[arg(long)]
    emit_phrases: Option<PathBuf>,
    /// Write an empty line for a failing sentence and carry on.
    #[arg(long)]
    keep_going: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    extracted: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Dump the trees were extracted from; checks leaves and supplies ids.
    #[arg(long)]
    dump: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Counting::Nontrivial)]
    counting: Counting,
    #[arg(long)]
    per_sentence: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Counting {
    All,
    Nontrivial,
}

impl From<Counting> for CountingPolicy {
    fn from(c: Counting) -> Self {
        match c {
            Counting::All => CountingPolicy::AllSpans,
            Counting::Nontrivial => CountingPolicy::Nontrivial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Lbal,
    Rbal,
    #[value(name = "rand.attn")]
    RandAttn,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(long)]
    dump: PathBuf,
    #[arg(long, value_enum)]
    kind: BaselineKind,
    /// Seed of the random attention baseline.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Add,
    Ablate,
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Precision,
    F1,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    dump: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Number of leading sentences used for the search.
    #[arg(long, default_value_t = 100)]
    dev_size: usize,
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Precision)]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value_t = Counting::Nontrivial)]
    counting: Counting,
    /// Trace output as JSON (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the best mask, in `--heads` syntax, to this file.
    #[arg(long)]
    mask_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Pgm,
    Png,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    dump: PathBuf,
    /// Directory receiving the images and their label files.
    #[arg(long)]
    out_dir: PathBuf,
    /// Sentence id (default: the first sentence).
    #[arg(long)]
    sentence: Option<String>,
    /// 1-based layer.
    #[arg(long, required_unless_present = "all")]
    layer: Option<usize>,
    /// 1-based head.
    #[arg(long, required_unless_present = "all")]
    head: Option<usize>,
    /// Render every head of the sentence.
    #[arg(long, conflicts_with_all = ["layer", "head"])]
    all: bool,
    /// Render the hardened matrix (row maxima only).
    #[arg(long)]
    hardened: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Pgm)]
    format: FormatArg,
}

/// Output file written atomically: nothing appears at the target path
/// unless the command finishes.
enum Output {
    Stdout(BufWriter<io::Stdout>),
    File {
        path: PathBuf,
        tmp: BufWriter<tempfile::NamedTempFile>,
    },
}

impl Output {
    fn create(path: Option<&Path>) -> Result<Output> {
        let Some(path) = path else {
            return Ok(Output::Stdout(BufWriter::new(io::stdout())));
        };
        let dir = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Ok(Output::File {
            path: path.to_path_buf(),
            tmp: BufWriter::new(tmp),
        })
    }

    fn writer(&mut self) -> &mut dyn Write {
        match self {
            Output::Stdout(w) => w,
            Output::File { tmp, .. } => tmp,
        }
    }

    fn write_str(&mut self, s: &str) -> Result<()> {
        let path = self.path();
        self.writer()
            .write_all(s.as_bytes())
            .map_err(|e| Error::Io { path, source: e })
    }

    fn path(&self) -> PathBuf {
        match self {
            Output::Stdout(_) => PathBuf::from("<stdout>"),
            Output::File { path, .. } => path.clone(),
        }
    }

    fn finish(self) -> Result<()> {
        match self {
            Output::Stdout(mut w) => w.flush().map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
            Output::File { path, tmp } => {
                let tmp = tmp.into_inner().map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e.into_error(),
                })?;
                tmp.persist(&path).map_err(|e| Error::Io {
                    path: path.clone(),
                    source: e.error,
                })?;
                Ok(())
            }
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    BufReader::new(file)
        .lines()
        .collect::<io::Result<Vec<_>>>()
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })
}

fn load_options(eos: &str) -> LoadOptions {
    LoadOptions {
        eos: eos.to_string(),
        ..LoadOptions::default()
    }
}

fn load_all(path: &Path, eos: &str) -> Result<Vec<AttentionDump>> {
    open_dump(path, load_options(eos))?.collect()
}

enum MaskSpec {
    All,
    Heads(Vec<HeadId>),
}

impl MaskSpec {
    fn parse(spec: &str) -> Result<MaskSpec> {
        if spec.trim().eq_ignore_ascii_case("all") {
            return Ok(MaskSpec::All);
        }
        let heads = spec
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<HeadId>>>()?;
        if heads.is_empty() {
            return Err(Error::Mask("no heads given".into()));
        }
        Ok(MaskSpec::Heads(heads))
    }

    fn resolve(&self, universe: Universe) -> Result<HeadMask> {
        match self {
            MaskSpec::All => Ok(HeadMask::full(universe)),
            MaskSpec::Heads(heads) => HeadMask::from_heads(universe, heads.iter().copied()),
        }
    }
}

/// Counts failures when `--keep-going` lets processing continue.
struct Failures {
    keep_going: bool,
    count: usize,
}

impl Failures {
    fn record(&mut self, context: &str, e: Error) -> Result<()> {
        if self.keep_going {
            log::error!("{context}: {e}");
            eprintln!("error: {context}: {e}");
            self.count += 1;
            Ok(())
        } else {
            Err(e)
        }
    }
}

fn cmd_extract(args: &ExtractArgs, eos: &str) -> Result<ExitCode> {
    let spec = MaskSpec::parse(&args.heads)?;
    let mut failures = Failures {
        keep_going: args.keep_going,
        count: 0,
    };
    let mut records = Vec::new();
    let mut reader = open_dump(&args.dump, load_options(eos))?;
    while let Some(record) = reader.next() {
        let line = reader.line();
        match record {
            Ok(dump) => records.push(Some(dump)),
            Err(e) => {
                failures.record(&format!("{}:{line}", args.dump.display()), e)?;
                records.push(None);
            }
        }
    }

    let results: Vec<Option<Result<_>>> = records
        .par_iter()
        .map(|d| {
            d.as_ref().map(|dump| {
                spec.resolve(dump.universe())
                    .and_then(|mask| extract(dump, &mask))
            })
        })
        .collect();

    let mut out = Output::create(args.out.as_deref())?;
    let mut phrases = args
        .emit_phrases
        .as_deref()
        .map(|p| Output::create(Some(p)))
        .transpose()?;
    for (dump, result) in records.iter().zip(results) {
        let (Some(dump), Some(result)) = (dump, result) else {
            out.write_str("\n")?;
            continue;
        };
        match result {
            Ok(extraction) => {
                out.write_str(&extraction.tree.to_bracketed(&dump.subwords))?;
                out.write_str("\n")?;
                if let Some(p) = phrases.as_mut() {
                    p.write_str(&extraction.table.to_json_line())?;
                    p.write_str("\n")?;
                }
            }
            Err(e) => {
                failures.record(&format!("sentence {}", dump.id), e)?;
                out.write_str("\n")?;
            }
        }
    }
    out.finish()?;
    if let Some(p) = phrases {
        p.finish()?;
    }
    Ok(exit_status(failures.count))
}

fn exit_status(failures: usize) -> ExitCode {
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        eprintln!("{failures} sentence(s) failed; their output lines are empty");
        ExitCode::FAILURE
    }
}

fn cmd_eval(args: &EvalArgs, eos: &str) -> Result<ExitCode> {
    let extracted = read_lines(&args.extracted)?;
    let gold = read_lines(&args.gold)?;
    if extracted.len() != gold.len() {
        return Err(Error::Invalid(format!(
            "{} has {} lines but {} has {}",
            args.extracted.display(),
            extracted.len(),
            args.gold.display(),
            gold.len()
        )));
    }
    let dumps = args.dump.as_deref().map(|p| load_all(p, eos)).transpose()?;
    if let Some(dumps) = &dumps {
        if dumps.len() != extracted.len() {
            return Err(Error::Invalid(format!(
                "dump has {} sentences, extracted file has {} lines",
                dumps.len(),
                extracted.len()
            )));
        }
    }
    let policy = CountingPolicy::from(args.counting);
    let sentences = (0..extracted.len())
        .into_par_iter()
        .map(|i| {
            let id = match &dumps {
                Some(d) => d[i].id.clone(),
                None => (i + 1).to_string(),
            };
            let tree = read_unlabeled(&extracted[i]).map_err(|e| at_line(&args.extracted, i, e))?;
            let tokens: Vec<String> = tree.leaves().into_iter().map(String::from).collect();
            if let Some(d) = &dumps {
                if escaped_tokens(&d[i].subwords) != tokens {
                    return Err(Error::Alignment {
                        sentence: id,
                        message: "extracted leaves differ from the dump's subwords".into(),
                    });
                }
            }
            let raw = read_bracketed(&gold[i]).map_err(|e| at_line(&args.gold, i, e))?;
            let reference = reference_tree(&id, &tokens, &raw)?;
            let counts = score_trees(&id, &tree, &reference, policy)?;
            Ok(SentenceScore {
                sentence_id: id,
                counts,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = EvalReport::new(policy, sentences);
    let mut out = Output::create(args.out.as_deref())?;
    out.write_str(&report.to_table(args.per_sentence))?;
    out.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn at_line(path: &Path, index: usize, e: Error) -> Error {
    Error::Invalid(format!("{}:{}: {e}", path.display(), index + 1))
}

fn cmd_baseline(args: &BaselineArgs, eos: &str) -> Result<ExitCode> {
    let dumps = load_all(&args.dump, eos)?;
    let lines = dumps
        .par_iter()
        .enumerate()
        .map(|(i, dump)| {
            let n = dump.len();
            let tree = match args.kind {
                BaselineKind::Lbal => lbal_tree(n),
                BaselineKind::Rbal => rbal_tree(n),
                BaselineKind::RandAttn => {
                    let mut rng = sentence_rng(args.seed, i as u64);
                    let random = random_attention_dump(
                        &mut rng,
                        dump.id.clone(),
                        dump.subwords.clone(),
                        dump.universe(),
                    );
                    extract(&random, &HeadMask::full(random.universe()))?.tree
                }
            };
            Ok(tree.to_bracketed(&dump.subwords))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Output::create(args.out.as_deref())?;
    for line in lines {
        out.write_str(&line)?;
        out.write_str("\n")?;
    }
    out.finish()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_select(args: &SelectArgs, eos: &str) -> Result<ExitCode> {
    let dumps = load_all(&args.dump, eos)?;
    let gold = read_lines(&args.gold)?;
    let dev_size = args.dev_size.min(dumps.len());
    if gold.len() < dev_size {
        return Err(Error::Invalid(format!(
            "{} has only {} reference trees for {dev_size} development sentences",
            args.gold.display(),
            gold.len()
        )));
    }
    let Some(first) = dumps.first() else {
        return Err(Error::Invalid("the dump holds no sentences".into()));
    };
    let universe = first.universe();
    let dev = dumps[..dev_size]
        .par_iter()
        .zip(&gold[..dev_size])
        .enumerate()
        .map(|(i, (dump, line))| {
            if dump.universe() != universe {
                return Err(Error::Validation {
                    sentence: dump.id.clone(),
                    message: "all sentences must come from the same encoder shape".into(),
                });
            }
            let raw = read_bracketed(line).map_err(|e| at_line(&args.gold, i, e))?;
            let reference = reference_tree(&dump.id, &dump.subwords, &raw)?;
            DevSentence::new(dump, &reference)
        })
        .collect::<Result<Vec<_>>>()?;
    let strategy = match args.strategy {
        StrategyArg::Add => Strategy::Addition,
        StrategyArg::Ablate => Strategy::Ablation,
    };
    let options = SelectionOptions {
        objective: match args.objective {
            ObjectiveArg::Precision => Objective::Precision,
            ObjectiveArg::F1 => Objective::F1,
        },
        policy: args.counting.into(),
    };
    let trace = select_heads(&dev, universe, strategy, options)?;
    log::info!(
        "{} mask evaluations over {} sentences",
        trace.evaluations,
        trace.dev_size
    );
    let mut out = Output::create(args.out.as_deref())?;
    let json = serde_json::to_string_pretty(&trace.to_json()).expect("trace serializes");
    out.write_str(&json)?;
    out.write_str("\n")?;
    out.finish()?;
    if let Some(path) = &args.mask_out {
        let mut mask = Output::create(Some(path))?;
        mask.write_str(&trace.best_mask.to_spec())?;
        mask.write_str("\n")?;
        mask.finish()?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(args: &RenderArgs, eos: &str) -> Result<ExitCode> {
    let mut reader = open_dump(&args.dump, load_options(eos))?;
    let dump = match &args.sentence {
        None => reader
            .next()
            .transpose()?
            .ok_or_else(|| Error::Invalid("the dump holds no sentences".into()))?,
        Some(id) => loop {
            match reader.next().transpose()? {
                Some(d) if &d.id == id => break d,
                Some(_) => {}
                None => return Err(Error::Invalid(format!("no sentence with id `{id}`"))),
            }
        },
    };
    let universe = dump.universe();
    let heads: Vec<HeadId> = if args.all {
        universe.iter().collect()
    } else {
        let (layer, head) = (args.layer.unwrap_or(0), args.head.unwrap_or(0));
        if layer == 0 || head == 0 || layer > universe.layers || head > universe.heads {
            return Err(Error::Invalid(format!(
                "no head {layer}:{head}; valid layers are 1..={} and heads 1..={}",
                universe.layers, universe.heads
            )));
        }
        vec![HeadId::new(layer - 1, head - 1)]
    };
    fs::create_dir_all(&args.out_dir).map_err(|e| Error::Io {
        path: args.out_dir.clone(),
        source: e,
    })?;
    let format = match args.format {
        FormatArg::Pgm => ImageFormat::Pgm,
        FormatArg::Png => ImageFormat::Png,
    };
    heads
        .par_iter()
        .map(|&head| write_heatmap(&args.out_dir, &dump, head, args.hardened, format).map(|_| ()))
        .collect::<Result<()>>()?;
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| Error::Invalid(format!("cannot start {jobs} workers: {e}")))?;
    }
    match &cli.command {
        Command::Extract(args) => cmd_extract(args, &cli.eos),
        Command::Eval(args) => cmd_eval(args, &cli.eos),
        Command::Baseline(args) => cmd_baseline(args, &cli.eos),
        Command::SelectHeads(args) => cmd_select(args, &cli.eos),
        Command::Render(args) => cmd_render(args, &cli.eos),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ATTNSYNTAX_LOG", "warn"))
        .init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
