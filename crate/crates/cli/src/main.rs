//! `ore`: convert, inspect, train, tag and evaluate relation corpora.
//!
//! Exit codes: 0 on success, 1 on data or validation errors, 2 on usage
//! errors. Logs go to stderr (`RUST_LOG` controls the level); results go to
//! stdout or the named files.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::{info, warn};

use ore_core::corpus::tokens_from;
use ore_core::embed::sniff_static_dim;
use ore_core::scheme::merge_to_nts_logged;
use ore_core::train::write_epoch_csv;
use ore_core::{
    load_checkpoint, load_contextual, load_static_embeddings, parse_config, parse_conll_with, render_config,
    save_checkpoint, write_conll, Corpus, Embedder, EmbeddingMode, Error, FilterLists, LabeledSentence, Model,
    ParseOptions, SchemeKind, Token, TrainConfig,
};

#[derive(Parser, Debug)]
#[command(name = "ore", version, about = "Open relation extraction with a BiLSTM-CRF tagger")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Merge a one-relation-per-column corpus into one multi-relation column
    Convert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Repair orphan inside tags and keep extra predicate spans
        #[arg(long)]
        lenient: bool,
    },
    /// Print sentence and relation counts of a corpus
    Stats {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Train a tagger and write a checkpoint
    Train {
        #[arg(long)]
        corpus: PathBuf,
        /// Tagging scheme to train in; the corpus is converted if needed
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        /// Static vectors (`word f1 .. fD` lines) or contextual vector blocks
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// `key = value` settings file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override one setting, e.g. `--set epochs=20`
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        /// Per-epoch CSV (default: `<out>.epochs.csv`)
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tag plain text (one sentence per line) or a CoNLL file
    Tag {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file (default: stdout)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Vector file replacing the one named in the checkpoint
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Score predicted relations against gold
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Stopword list, one word per line, replacing the built-in one
        #[arg(long)]
        stopwords: Option<PathBuf>,
        /// CSV report with columns dataset,model,P,R,F1,PMS
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Single,
    Nts,
}

impl From<SchemeArg> for SchemeKind {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Single => SchemeKind::Single,
            SchemeArg::Nts => SchemeKind::Nts,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Convert { input, out, lenient } => convert(&input, &out, lenient),
        Command::Stats { input } => stats(&input),
        Command::Train {
            corpus,
            scheme,
            embeddings,
            config,
            out,
            overrides,
            report,
        } => train(TrainArgs {
            corpus,
            scheme: scheme.into(),
            embeddings,
            config,
            out,
            overrides,
            report,
        }),
        Command::Tag {
            checkpoint,
            input,
            out,
            embeddings,
        } => tag(&checkpoint, &input, out.as_deref(), embeddings.as_deref()),
        Command::Eval {
            gold,
            pred,
            stopwords,
            out,
        } => eval(&gold, &pred, stopwords.as_deref(), out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn read_corpus(path: &Path, lenient: bool) -> Result<Corpus> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let opts = ParseOptions {
        lenient,
        ..ParseOptions::default()
    };
    let (corpus, _) =
        parse_conll_with(BufReader::new(file), &opts).with_context(|| format!("reading {}", path.display()))?;
    Ok(corpus)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn convert(input: &Path, out: &Path, lenient: bool) -> Result<()> {
    let corpus = read_corpus(input, lenient)?;
    if corpus.scheme == SchemeKind::Nts {
        bail!("input already in NTS");
    }
    let mut items = Vec::with_capacity(corpus.len());
    let mut failures = Vec::new();
    let (mut relations, mut conflicts) = (0, 0);
    for ls in &corpus.items {
        match merge_to_nts_logged(ls) {
            Ok(m) => {
                relations += m.relations.len();
                conflicts += m.argument_conflicts.len();
                for c in &m.argument_conflicts {
                    warn!(
                        "sentence {:?}: argument span {:?} of column {} lost tokens {:?}",
                        ls.id,
                        c.span,
                        c.sequence + 1,
                        c.lost_tokens
                    );
                }
                items.push(LabeledSentence {
                    id: ls.id.clone(),
                    tokens: ls.tokens.clone(),
                    sequences: vec![m.sequence],
                });
            }
            Err(e) => failures.push(e),
        }
    }
    if !failures.is_empty() {
        for e in &failures {
            eprintln!("{e}");
        }
        bail!("{} of {} sentences could not be merged", failures.len(), corpus.len());
    }
    let merged = Corpus {
        items,
        scheme: SchemeKind::Nts,
    };
    let mut w = create(out)?;
    write_conll(&merged, &mut w)?;
    w.flush()?;
    println!(
        "converted {} sentences: {} relations merged, {} argument conflicts",
        merged.len(),
        relations,
        conflicts
    );
    Ok(())
}

fn stats(input: &Path) -> Result<()> {
    let corpus = read_corpus(input, false)?;
    let s = corpus.stats()?;
    println!("scheme\t{}", corpus.scheme);
    println!("sentences\t{}", s.sentences);
    println!("relations\t{}", s.relations);
    println!("relations_per_sentence\t{:.1}", s.avg_relations_per_sentence);
    Ok(())
}

/// Loads a vector file, telling contextual blocks from a static table by
/// the `#sent` header.
fn load_vectors(path: &Path) -> Result<(Embedder, EmbeddingMode)> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let shown = path.display().to_string();
    if first.starts_with("#sent") {
        let file = load_contextual(text.as_bytes()).with_context(|| format!("reading {shown}"))?;
        return Ok((Embedder::Contextual(file), EmbeddingMode::Contextual { path: shown }));
    }
    let dim = sniff_static_dim(first).ok_or_else(|| anyhow!("{shown}: no vectors found"))?;
    let table = load_static_embeddings(text.as_bytes(), dim).with_context(|| format!("reading {shown}"))?;
    Ok((Embedder::Static(table), EmbeddingMode::Static { path: shown, dim }))
}

fn embedder_for(mode: &EmbeddingMode) -> Result<Embedder> {
    match mode {
        EmbeddingMode::Hashed { dim } => Ok(Embedder::Hashed { dim: *dim }),
        EmbeddingMode::Static { path, dim } => {
            let f = File::open(path).with_context(|| format!("cannot open {path}"))?;
            let table = load_static_embeddings(BufReader::new(f), *dim).with_context(|| format!("reading {path}"))?;
            Ok(Embedder::Static(table))
        }
        EmbeddingMode::Contextual { path } => {
            let f = File::open(path).with_context(|| format!("cannot open {path}"))?;
            let file = load_contextual(BufReader::new(f)).with_context(|| format!("reading {path}"))?;
            Ok(Embedder::Contextual(file))
        }
    }
}

struct TrainArgs {
    corpus: PathBuf,
    scheme: SchemeKind,
    embeddings: Option<PathBuf>,
    config: Option<PathBuf>,
    out: PathBuf,
    overrides: Vec<String>,
    report: Option<PathBuf>,
}

/// Defaults, then the config file, then `ORE_SEED`, then `--set` flags.
fn effective_config(args: &TrainArgs) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(path) = &args.config {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        cfg = parse_config(&text, cfg).with_context(|| format!("in {}", path.display()))?;
    }
    if let Ok(seed) = std::env::var("ORE_SEED") {
        cfg.set("seed", &seed).context("ORE_SEED")?;
    }
    for o in &args.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got {o:?}"))?;
        cfg.set(k, v).with_context(|| format!("--set {o}"))?;
    }
    cfg.scheme = Some(args.scheme);
    Ok(cfg)
}

fn train(args: TrainArgs) -> Result<()> {
    let mut cfg = effective_config(&args)?;
    let embedder = match &args.embeddings {
        Some(path) => {
            let (e, mode) = load_vectors(path)?;
            cfg.embedding = mode;
            e
        }
        None => embedder_for(&cfg.embedding)?,
    };
    cfg.validate()?;
    for line in render_config(&cfg).lines() {
        info!("config: {line}");
    }
    let corpus = read_corpus(&args.corpus, false)?;
    let outcome = ore_core::train(&corpus, &embedder, &cfg)?;

    save_checkpoint(&outcome.checkpoint, &args.out)?;
    let report = args.report.clone().unwrap_or_else(|| {
        let mut p = args.out.clone().into_os_string();
        p.push(".epochs.csv");
        p.into()
    });
    let mut w = create(&report)?;
    write_epoch_csv(&outcome.reports, &mut w)?;
    w.flush()?;

    let last = outcome.reports.last().ok_or_else(|| anyhow!("no epochs ran"))?;
    println!(
        "trained {} epochs ({} steps): loss {:.6}, accuracy {:.6}",
        last.epoch, outcome.steps, last.loss, last.accuracy
    );
    println!("checkpoint {}", args.out.display());
    println!("report {}", report.display());
    Ok(())
}

struct InputSentence {
    id: String,
    tokens: Vec<Token>,
}

/// CoNLL input is recognised by tab-separated columns; the first column
/// holds the token and tags are ignored. Otherwise every non-empty line is
/// one whitespace-tokenised sentence. Unnamed sentences get ids `s1, s2, ..`
/// in file order, matching the corpus reader.
fn read_tag_input(text: &str) -> Vec<InputSentence> {
    let mut out = Vec::new();
    if !text.lines().any(|l| l.contains('\t')) {
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let id = format!("s{}", out.len() + 1);
            out.push(InputSentence {
                id,
                tokens: tokens_from(line.split_whitespace()),
            });
        }
        return out;
    }
    let mut next_id: Option<String> = None;
    let mut words: Vec<String> = Vec::new();
    let flush = |words: &mut Vec<String>, next_id: &mut Option<String>, out: &mut Vec<InputSentence>| {
        if !words.is_empty() {
            let id = next_id.take().unwrap_or_else(|| format!("s{}", out.len() + 1));
            out.push(InputSentence {
                id,
                tokens: tokens_from(words.iter().map(String::as_str)),
            });
            words.clear();
        }
    };
    for line in text.lines() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            flush(&mut words, &mut next_id, &mut out);
        } else if line.starts_with('#') && !line.contains('\t') {
            if let Some(id) = line.strip_prefix("#id ") {
                next_id = Some(id.trim().to_owned());
            }
        } else {
            words.push(line.split('\t').next().unwrap_or("").to_owned());
        }
    }
    flush(&mut words, &mut next_id, &mut out);
    out
}

fn tag(checkpoint: &Path, input: &Path, out: Option<&Path>, embeddings: Option<&Path>) -> Result<()> {
    let cp = load_checkpoint(checkpoint).with_context(|| format!("loading {}", checkpoint.display()))?;
    let model = Model::from_checkpoint(&cp)?;
    let embedder = match embeddings {
        Some(path) => load_vectors(path)?.0,
        None => embedder_for(&cp.config.embedding)?,
    };
    if embedder.dim() != model.input_dim() {
        return Err(Error::Setup(format!(
            "model expects {}-dimensional inputs, vectors have {}",
            model.input_dim(),
            embedder.dim()
        ))
        .into());
    }
    let text = fs::read_to_string(input).with_context(|| format!("cannot read {}", input.display()))?;
    let sentences = read_tag_input(&text);

    let mut s = String::new();
    if !sentences.is_empty() {
        let decoding = if model.bio_constrained { "constrained" } else { "unconstrained" };
        let _ = writeln!(s, "#scheme {}", model.scheme);
        let _ = writeln!(s, "#decoding {decoding}");
    }
    for sent in &sentences {
        let seq = model
            .tag_tokens(&embedder, &sent.id, &sent.tokens)
            .with_context(|| format!("sentence {}", sent.id))?;
        let _ = writeln!(s, "#id {}", sent.id);
        for r in ore_core::extract_relations(&seq, &sent.tokens) {
            let _ = writeln!(s, "#rel {}-{} {}", r.start, r.end, r.surface);
        }
        for (tok, t) in sent.tokens.iter().zip(&seq.tags) {
            let _ = writeln!(s, "{}\t{t}", tok.text);
        }
        s.push('\n');
    }
    match out {
        Some(path) => fs::write(path, s).with_context(|| format!("cannot write {}", path.display()))?,
        None => io::stdout().lock().write_all(s.as_bytes())?,
    }
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn eval(gold: &Path, pred: &Path, stopwords: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let filters = match stopwords {
        Some(path) => {
            let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            let mut text = String::new();
            for line in BufReader::new(f).lines() {
                text.push_str(&line?);
                text.push('\n');
            }
            FilterLists::with_stopwords(&text)
        }
        None => FilterLists::default(),
    };
    let g = read_corpus(gold, false)?;
    // decoded output may hold orphan inside tags unless decoding was constrained
    let p = read_corpus(pred, true)?;
    let report = ore_core::evaluate(&g, &p, &filters)?;
    print!("{}", report.render());
    if let Some(path) = out {
        let mut w = create(path)?;
        report.write_csv(&file_stem(gold), &file_stem(pred), &mut w)?;
        w.flush()?;
    }
    Ok(())
}
