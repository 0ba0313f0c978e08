//! Subcommand implementations.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use precondforge_core::augment::{run_augmentation, AugmentationRecord, LexiconFiller, MaskFiller};
use precondforge_core::corpus::{
    load_corpus, prepare_documents, segment_corpus, Lexicon, LexiconTagger, Segmenter, Statement, Tagger,
};
use precondforge_core::extraction::{run_extraction, ExtractionConfig, ExtractionRecord};
use precondforge_core::labelmodel::{aggregate, compute_lf_stats, stats_report, stats_table};
use precondforge_core::maskprep::{run_maskprep, ConjunctionLists};
use precondforge_core::nliconvert::{self, NliRecord};
use precondforge_core::pabi::{self, LabelSequence, LabeledId, PabiReport, RatePair, RateSource};
use precondforge_core::patterns::{build_label_matrix, filter_registry, PatternRegistry};
use precondforge_core::remote::{RemoteFiller, RemoteTagger, RetryPolicy, ServiceClient};
use precondforge_core::{jsonl, Error};
use rand::RngCore;
use serde::Deserialize;
use serde_json::Value;

use crate::config::{Backend, PipelineConfig};
use crate::manifest::{Manifest, RunContext};
use crate::{Cli, Command, CorpusArgs, GlobalArgs, RegistryArgs};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Mismatch(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Mismatch(m) => write!(f, "replay mismatch: {m}"),
        }
    }
}

type CliResult<T = ()> = std::result::Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Task {
    /// Extraction records.
    Pinks,
    /// Augmentation records.
    PinksAug,
    DeltaNli,
    Atomic,
    Winoventi,
    Anion,
    Paco,
}

impl Task {
    fn name(self) -> &'static str {
        match self {
            Task::Pinks => "pinks",
            Task::PinksAug => "pinks-aug",
            Task::DeltaNli => "delta-nli",
            Task::Atomic => "atomic",
            Task::Winoventi => "winoventi",
            Task::Anion => "anion",
            Task::Paco => "paco",
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Extract { .. } => "extract",
        Command::Augment { .. } => "augment",
        Command::Maskprep { .. } => "maskprep",
        Command::Convert { .. } => "convert",
        Command::Split { .. } => "split",
        Command::Stats { .. } => "stats",
        Command::Pabi { .. } => "pabi",
        Command::RegistryExport { .. } => "registry-export",
        Command::Replay { .. } => "replay",
    }
}

/// File config, then environment, then flags.
pub fn resolve_config(global: &GlobalArgs, command: &Command, base: Option<PipelineConfig>) -> CliResult<PipelineConfig> {
    let mut c = match base {
        Some(c) => c,
        None => {
            let mut c = match &global.config {
                Some(p) => PipelineConfig::load(p)?,
                None => PipelineConfig::default(),
            };
            c.apply_env(|k| std::env::var(k).ok())?;
            c
        }
    };
    if let Some(s) = global.seed {
        c.seed = s;
    }
    if let Some(u) = &global.service_url {
        c.service_url = u.clone();
    }
    if let Some(w) = global.workers {
        c.workers = w;
    }
    let corpus = |c: &mut PipelineConfig, a: &CorpusArgs| {
        if !a.corpus.is_empty() {
            c.corpus.paths = a.corpus.clone();
        }
        if let Some(f) = a.format {
            c.corpus.format = f.into();
        }
        if let Some(s) = &a.source {
            c.corpus.source = s.clone();
        }
    };
    let registry = |c: &mut PipelineConfig, a: &RegistryArgs| {
        if let Some(r) = &a.registry {
            c.patterns.registry = r.clone();
        }
        if let Some(t) = a.threshold {
            c.patterns.precision_threshold = t;
        }
        if !a.enable.is_empty() {
            c.patterns.enable = a.enable.clone();
        }
    };
    match command {
        Command::Extract { corpus: ca, registry: ra, tagger, keep_questions, no_verb_filter, .. } => {
            corpus(&mut c, ca);
            registry(&mut c, ra);
            if let Some(t) = tagger {
                c.tagger = *t;
            }
            c.patterns.drop_questions &= !keep_questions;
            c.patterns.require_verb &= !no_verb_filter;
        }
        Command::Augment { tagger, filler, per_mask, per_statement, placeholder, .. } => {
            if let Some(t) = tagger {
                c.tagger = *t;
            }
            if let Some(f) = filler {
                c.filler = *f;
            }
            if let Some(n) = per_mask {
                c.augment.per_mask = *n;
            }
            if let Some(n) = per_statement {
                c.augment.per_statement = *n;
            }
            if let Some(p) = placeholder {
                c.augment.placeholder = p.clone();
            }
        }
        Command::Maskprep { corpus: ca, placeholder, .. } => {
            corpus(&mut c, ca);
            if let Some(p) = placeholder {
                c.augment.placeholder = p.clone();
            }
        }
        Command::Split { ratios: Some(r), .. } => {
            c.split.ratios = *r;
            if global.seed.is_some() {
                c.split.seed = global.seed;
            }
        }
        Command::Split { ratios: None, .. } => {
            if global.seed.is_some() {
                c.split.seed = global.seed;
            }
        }
        Command::Stats { corpus: ca, registry: ra, .. } => {
            corpus(&mut c, ca);
            registry(&mut c, ra);
        }
        Command::RegistryExport { registry: ra, .. } => registry(&mut c, ra),
        Command::Convert { .. } | Command::Pabi { .. } | Command::Replay { .. } => {}
    }
    c.validate()?;
    Ok(c)
}

pub fn run(cli: Cli, args: &[String]) -> CliResult {
    if let Command::Replay { manifest, into } = &cli.command {
        return replay(manifest, into.as_deref());
    }
    let config = resolve_config(&cli.global, &cli.command, None)?;
    let mut ctx = RunContext::new(None);
    execute(&cli.command, &config, &mut ctx)?;
    let path = cli.global.manifest.clone().or_else(|| ctx.default_manifest_path());
    if let Some(path) = path {
        let m = ctx.manifest(command_name(&cli.command), args, &config)?;
        crate::manifest::write_atomic(&path, serde_json::to_string_pretty(&m).expect("manifest serializes").as_bytes())?;
    }
    Ok(())
}

fn with_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn execute(command: &Command, c: &PipelineConfig, ctx: &mut RunContext) -> CliResult {
    with_pool(c.workers, || execute_in_pool(command, c, ctx))?
}

fn lexicon(c: &PipelineConfig, ctx: &mut RunContext) -> CliResult<Arc<Lexicon>> {
    Ok(Arc::new(match &c.lexicon {
        Some(p) => {
            ctx.input(p)?;
            Lexicon::load(p)?
        }
        None => Lexicon::bundled(),
    }))
}

fn client(c: &PipelineConfig) -> CliResult<ServiceClient> {
    Ok(ServiceClient::new(&c.service_url, RetryPolicy::default())?)
}

fn tagger(c: &PipelineConfig, ctx: &mut RunContext) -> CliResult<Box<dyn Tagger>> {
    Ok(match c.tagger {
        Backend::Lexicon => Box::new(LexiconTagger::new(lexicon(c, ctx)?)),
        Backend::Remote => Box::new(RemoteTagger::connect(client(c)?)?),
    })
}

fn filler(c: &PipelineConfig, ctx: &mut RunContext) -> CliResult<Box<dyn MaskFiller>> {
    Ok(match c.filler {
        Backend::Lexicon => Box::new(LexiconFiller::new(lexicon(c, ctx)?)),
        Backend::Remote => Box::new(RemoteFiller::connect(client(c)?)?),
    })
}

fn statements(c: &PipelineConfig, ctx: &mut RunContext) -> CliResult<Vec<Statement>> {
    if c.corpus.paths.is_empty() {
        return Err(Error::Config("no corpus given (--corpus or [corpus] paths)".into()).into());
    }
    let mut docs = Vec::new();
    for p in &c.corpus.paths {
        if !p.is_file() {
            return Err(Error::Config(format!("corpus {} does not exist", p.display())).into());
        }
        ctx.input(p)?;
        docs.extend(load_corpus(p, c.corpus.format, &c.corpus.source)?);
    }
    let docs = prepare_documents(docs, &c.corpus.prefilter)?;
    Ok(segment_corpus(&docs, &Segmenter::default()))
}

fn registry(c: &PipelineConfig, ctx: &mut RunContext) -> CliResult<PatternRegistry> {
    let base = if c.patterns.registry == "builtin" {
        PatternRegistry::builtin()
    } else {
        let p = Path::new(&c.patterns.registry);
        ctx.input(p)?;
        PatternRegistry::load(p)?
    };
    Ok(filter_registry(&base, c.patterns.precision_threshold)?.with_enabled(&c.patterns.enable)?)
}

fn input_records<T: for<'de> Deserialize<'de>>(path: &Path, ctx: &mut RunContext) -> CliResult<Vec<T>> {
    ctx.input(path)?;
    Ok(jsonl::read(path)?)
}

fn execute_in_pool(command: &Command, c: &PipelineConfig, ctx: &mut RunContext) -> CliResult {
    match command {
        Command::Extract { out, report, .. } => {
            let stmts = statements(c, ctx)?;
            let reg = registry(c, ctx)?;
            let tagger = tagger(c, ctx)?;
            let cfg = ExtractionConfig { drop_questions: c.patterns.drop_questions, require_verb: c.patterns.require_verb };
            let (records, rep) = run_extraction(&stmts, &reg, tagger.as_ref(), &cfg)?;
            ctx.write(out, jsonl::to_string(&records).as_bytes())?;
            let rep_json = serde_json::to_string(&rep).expect("report serializes");
            if let Some(r) = report {
                ctx.write(r, format!("{rep_json}\n").as_bytes())?;
            }
            eprintln!("{rep_json}");
        }
        Command::Augment { input, out, .. } => {
            let records: Vec<ExtractionRecord> = input_records(input, ctx)?;
            let tagger = tagger(c, ctx)?;
            let filler = filler(c, ctx)?;
            let (augs, rep) = run_augmentation(&records, tagger.as_ref(), filler.as_ref(), &c.augment_config())?;
            ctx.write(out, jsonl::to_string(&augs).as_bytes())?;
            eprintln!("{}", serde_json::to_string(&rep).expect("report serializes"));
        }
        Command::Maskprep { out, .. } => {
            let stmts = statements(c, ctx)?;
            let recs = run_maskprep(&stmts, &ConjunctionLists::builtin(), &c.augment.placeholder);
            ctx.write(out, jsonl::to_string(&recs).as_bytes())?;
            eprintln!("{} statements, {} masked records", stmts.len(), recs.len());
        }
        Command::Convert { task, input, out } => {
            let recs = convert(*task, input, c, ctx)?;
            ctx.write(out, jsonl::to_string(&recs).as_bytes())?;
            eprintln!("{} {} records", recs.len(), task.name());
        }
        Command::Split { input, out, .. } => {
            let mut recs: Vec<NliRecord> = input_records(input, ctx)?;
            let [train, dev, test] = nliconvert::split(&mut recs, c.split.ratios, c.split_seed())?;
            ctx.write(out, jsonl::to_string(&recs).as_bytes())?;
            println!("train {train}\ndev {dev}\ntest {test}");
        }
        Command::Stats { out, aggregate: strategy, labels_out, .. } => {
            let stmts = statements(c, ctx)?;
            let reg = registry(c, ctx)?;
            let m = build_label_matrix(&stmts, &reg)?;
            let stats = compute_lf_stats(&m)?;
            print!("{}", stats_table(&stats));
            if let Some(o) = out {
                let json = serde_json::to_string_pretty(&stats_report(&stats)).expect("stats serialize");
                ctx.write(o, format!("{json}\n").as_bytes())?;
            }
            if let Some(s) = strategy {
                let votes = aggregate(&m, &reg, *s)?;
                let rows: Vec<Value> = m
                    .rows
                    .iter()
                    .zip(&votes)
                    .map(|(id, v)| serde_json::json!({"record_id": id, "label": v}))
                    .collect();
                if let Some(o) = labels_out {
                    ctx.write(o, jsonl::to_string(&rows).as_bytes())?;
                }
            }
        }
        Command::Pabi { labels, eta, eta1, eta2, predictions, gold, zero_rate, out } => {
            let report = pabi_report(*labels, *eta, eta1.zip(*eta2), predictions.as_deref(), gold.as_deref(), *zero_rate, ctx)?;
            println!("{}", report.display_score());
            eprintln!("|L| = {}, eta = {:.6}, score = {:.6}", report.label_count, report.eta, report.score);
            if let Some(o) = out {
                let json = serde_json::to_string_pretty(&report).expect("report serializes");
                ctx.write(o, format!("{json}\n").as_bytes())?;
            }
        }
        Command::RegistryExport { out, .. } => {
            let text = registry(c, ctx)?.to_toml();
            match out {
                Some(o) => ctx.write(o, text.as_bytes())?,
                None => print!("{text}"),
            }
        }
        Command::Replay { .. } => unreachable!("replay is handled before dispatch"),
    }
    Ok(())
}

fn labels_file(path: &Path, ctx: &mut RunContext) -> CliResult<LabelSequence> {
    Ok(LabelSequence::from_rows(input_records::<LabeledId>(path, ctx)?))
}

fn pabi_report(
    label_count: u32,
    eta: Option<f64>,
    rates: Option<(f64, f64)>,
    predictions: Option<&Path>,
    gold: Option<&Path>,
    zero_rate: bool,
    ctx: &mut RunContext,
) -> CliResult<PabiReport> {
    if let Some(eta) = eta {
        return Ok(PabiReport::from_eta(label_count, eta, RateSource::Given)?);
    }
    if let Some((eta1, eta2)) = rates {
        return Ok(PabiReport::from_rates(RatePair { label_count, eta1, eta2 }, RateSource::Given, RateSource::Given)?);
    }
    let Some(gold_path) = gold else {
        return Err(Error::Config("pabi needs --eta, --eta1/--eta2, or --gold with --predictions or --zero-rate".into()).into());
    };
    let g = labels_file(gold_path, ctx)?;
    let (pred, source) = if zero_rate {
        let source = RateSource::ZeroRate { gold: gold_path.display().to_string(), records: g.len() };
        (pabi::zero_rate_predictions(&g)?, source)
    } else {
        let p = predictions.ok_or_else(|| Error::Config("--gold needs --predictions or --zero-rate".into()))?;
        let source = RateSource::LabelFiles {
            predictions: p.display().to_string(),
            gold: gold_path.display().to_string(),
            records: g.len(),
        };
        (labels_file(p, ctx)?, source)
    };
    let eta = pabi::error_rate(&pred, &g)?;
    Ok(PabiReport::from_eta(label_count, eta, source)?)
}

/// Rows keep an `id` field when present; otherwise `<task>-<n>`.
fn dataset_rows(task: Task, path: &Path, ctx: &mut RunContext) -> CliResult<Vec<(String, Value)>> {
    let rows: Vec<Value> = input_records(path, ctx)?;
    Ok(rows
        .into_iter()
        .enumerate()
        .map(|(n, v)| {
            let id = match v.get("id") {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(x)) => x.to_string(),
                _ => format!("{}-{n}", task.name()),
            };
            (id, v)
        })
        .collect())
}

fn row<T: for<'de> Deserialize<'de>>(id: &str, v: Value) -> CliResult<T> {
    serde_json::from_value(v).map_err(|e| {
        Error::Parse { location: format!("row {id}"), message: e.to_string() }.into()
    })
}

fn convert(task: Task, input: &Path, c: &PipelineConfig, ctx: &mut RunContext) -> CliResult<Vec<NliRecord>> {
    match task {
        Task::Pinks => {
            let recs: Vec<ExtractionRecord> = input_records(input, ctx)?;
            Ok(recs.iter().map(nliconvert::convert_weak).collect::<Result<_, _>>()?)
        }
        Task::PinksAug => {
            let recs: Vec<AugmentationRecord> = input_records(input, ctx)?;
            let mut ordinal = std::collections::HashMap::<&str, usize>::new();
            recs.iter()
                .map(|r| {
                    let n = ordinal.entry(&r.parent_id).or_default();
                    *n += 1;
                    Ok(nliconvert::convert_augmented(r, *n - 1)?)
                })
                .collect()
        }
        _ => {
            let segmenter = Segmenter::default();
            let lex = c.lexicalization();
            let mut out = Vec::new();
            for (id, v) in dataset_rows(task, input, ctx)? {
                match task {
                    Task::DeltaNli => out.push(nliconvert::convert_delta_nli(&id, &row(&id, v)?)?),
                    Task::Atomic => out.extend(nliconvert::convert_atomic(&id, &row(&id, v)?)?),
                    Task::Paco => out.push(nliconvert::convert_paco(&id, &row(&id, v)?)?),
                    Task::Winoventi => out.extend(nliconvert::convert_winoventi(&id, &row(&id, v)?, &segmenter)?),
                    Task::Anion => {
                        let name_seed = precondforge_core::seed::keyed_rng(c.seed, &id).next_u64();
                        out.extend(nliconvert::convert_anion(&id, &row(&id, v)?, name_seed, &lex)?);
                    }
                    Task::Pinks | Task::PinksAug => unreachable!(),
                }
            }
            Ok(out)
        }
    }
}

fn replay(manifest_path: &Path, into: Option<&Path>) -> CliResult {
    let m = Manifest::load(manifest_path)?;
    std::env::set_current_dir(&m.cwd).map_err(|e| Error::io(m.cwd.display().to_string(), e))?;
    for (path, digest) in &m.inputs {
        let now = crate::manifest::file_digest(Path::new(path))?;
        if &now != digest {
            return Err(CliError::Mismatch(format!("input {path} changed since the recorded run")));
        }
    }
    let cli = <Cli as clap::Parser>::try_parse_from(std::iter::once("precondforge".to_string()).chain(m.args.iter().cloned()))
        .map_err(|e| Error::Config(format!("manifest args: {e}")))?;
    let config = resolve_config(&cli.global, &cli.command, Some(m.config()?))?;
    let scratch;
    let dir: PathBuf = match into {
        Some(d) => d.to_path_buf(),
        None => {
            scratch = tempfile::tempdir().map_err(|e| Error::io("temporary directory", e))?;
            scratch.path().to_path_buf()
        }
    };
    let mut ctx = RunContext::new(Some(dir));
    execute(&cli.command, &config, &mut ctx)?;
    if ctx.outputs() != &m.outputs {
        let diff: Vec<&String> = m
            .outputs
            .iter()
            .filter(|(k, v)| ctx.outputs().get(*k) != Some(v))
            .map(|(k, _)| k)
            .collect();
        return Err(CliError::Mismatch(format!("outputs differ: {diff:?}")));
    }
    println!("replay ok: {} outputs match", m.outputs.len());
    Ok(())
}
