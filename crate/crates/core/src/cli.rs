//! Command-line front end.

use std::collections::HashMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audit::{run_audit, write_report, AuditConfig, AuditReport};
use crate::corpus::{
    filter_language, has_polish_diacritic, load_corpus, split_corpus, Cleaner, CorpusFormat, SplitConfig,
    DEFAULT_MAX_LEN,
};
use crate::error::{Error, Result};
use crate::lexicon::{emotional_weight, load_lexicon, no_stem, score_text_vad, weighted_sample, WeightedStage};
use crate::pruning::{
    apply_mention_stats, detect_mentions, export_review, import_review, mean_mention_valence, mention_stats, prune,
    MatchMode, MatcherConfig, ANNOTATION_MAX,
};
use crate::scorer::{probe, write_score_rows, RemoteConfig, ScorerSpec};
use crate::stats::{icc1_summary, parse_annotations};
use crate::stimuli::{build_stimulus_matrix, load_entities, write_entities, PartySet};

#[derive(Debug, Parser)]
#[command(name = "valence-audit", version, about = "Partisan-bias audits for text valence scorers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Clean, split, language-filter and optionally sample a corpus.
    Prepare(PrepareArgs),
    /// Score the stimulus matrix and write a score table.
    Probe(ProbeArgs),
    /// Run the full regression battery and write a report.
    Audit(AuditArgs),
    /// Detect entity mentions, apply review decisions, and prune.
    Prune(PruneArgs),
    /// Inter-rater reliability from an annotations CSV.
    Icc(IccArgs),
    /// Re-render tables, figure and QQ data from a report.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct PrepareArgs {
    #[arg(long)]
    input: PathBuf,
    /// csv or jsonl; inferred from the extension when omitted.
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    out: PathBuf,
    /// Regex for a leading date artifact; `none` disables stripping.
    #[arg(long)]
    date_prefix: Option<String>,
    #[arg(long, default_value_t = DEFAULT_MAX_LEN)]
    max_len: usize,
    /// Keep only snippets containing a Polish diacritic.
    #[arg(long)]
    polish_only: bool,
    /// Affective lexicon CSV; enables emotion-weighted sampling.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    scale_min: f64,
    #[arg(long, default_value_t = 9.0)]
    scale_max: f64,
    #[arg(long, default_value_t = 0)]
    n_weighted: usize,
    #[arg(long, default_value_t = 0)]
    n_unweighted: usize,
    /// Take the highest-weight snippets instead of drawing proportionally.
    #[arg(long)]
    top_k: bool,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct ScorerArgs {
    /// Audit config whose scorers section supplies the scorer.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Which configured scorer to use.
    #[arg(long, default_value = "original")]
    which: String,
    /// Remote scorer base URL (POST <endpoint>/score).
    #[arg(long)]
    endpoint: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Lexicon CSV for the built-in lexicon scorer.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[command(flatten)]
    scorer: ScorerArgs,
    #[arg(long)]
    entities: Option<PathBuf>,
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    outdir: Option<PathBuf>,
    #[arg(long)]
    n_perm: Option<usize>,
}

#[derive(Debug, Args)]
struct PruneArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    entities: PathBuf,
    /// Pruned corpus CSV.
    #[arg(long)]
    out: PathBuf,
    /// Mention statistics JSON; printed to stdout when omitted.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Write the review CSV here.
    #[arg(long)]
    review_out: Option<PathBuf>,
    /// Apply statuses from an edited review CSV.
    #[arg(long)]
    review_in: Option<PathBuf>,
    /// Confirm every remaining candidate.
    #[arg(long)]
    auto_confirm: bool,
    /// Match whole surnames only.
    #[arg(long)]
    exact: bool,
    #[arg(long, default_value_t = 0)]
    suffix_strip: usize,
    /// Annotations CSV (text_id,rater_id,valence) for mean mention valence.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Entities CSV updated with confirmed counts (and mention valence).
    #[arg(long)]
    entities_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IccArgs {
    #[arg(long)]
    annotations: PathBuf,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    outdir: PathBuf,
}

/// Parse and execute; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Prepare(a) => prepare(a),
        Command::Probe(a) => probe_cmd(a),
        Command::Audit(a) => audit_cmd(a),
        Command::Prune(a) => prune_cmd(a),
        Command::Icc(a) => icc_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn create(path: &Path) -> Result<std::fs::File> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::File::create(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: serde::Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Backend(e.to_string()))? + "\n";
    match path {
        Some(p) => create(p)?.write_all(text.as_bytes()).map_err(|e| Error::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn prepare(a: PrepareArgs) -> Result<()> {
    let format = match a.format.as_deref() {
        Some("csv") => CorpusFormat::Csv,
        Some("jsonl") => CorpusFormat::Jsonl,
        Some(other) => return Err(Error::Config(format!("unknown corpus format `{other}`"))),
        None => CorpusFormat::from_path(&a.input)
            .ok_or_else(|| Error::Config("cannot infer corpus format; pass --format".into()))?,
    };
    let sampling = a.n_weighted + a.n_unweighted > 0;
    if sampling && a.lexicon.is_none() {
        return Err(Error::Config("sampling needs --lexicon".into()));
    }
    let needs_seed = sampling && !(a.top_k && a.n_unweighted == 0);
    if needs_seed && a.seed.is_none() {
        return Err(Error::Config("--seed is required for sampling".into()));
    }

    let cleaner = match a.date_prefix.as_deref() {
        None => Cleaner::default(),
        Some("none") => Cleaner::with_date_prefix(None)?,
        Some(p) => Cleaner::with_date_prefix(Some(p))?,
    };
    let corpus = load_corpus(&a.input, format)?;
    let corpus = cleaner.clean_corpus(corpus);
    let corpus = split_corpus(
        corpus,
        &SplitConfig {
            max_len: a.max_len,
            ..SplitConfig::default()
        },
    )?;
    let corpus = if a.polish_only {
        filter_language(corpus, has_polish_diacritic)
    } else {
        corpus
    };

    let corpus = match &a.lexicon {
        Some(path) if sampling => {
            let lex = load_lexicon(path, (a.scale_min, a.scale_max))?;
            let weights: Vec<f64> = corpus
                .snippets
                .iter()
                .map(|s| emotional_weight(&score_text_vad(&s.clean_text, &lex, no_stem)))
                .collect();
            let stage = if a.top_k {
                WeightedStage::TopK
            } else {
                WeightedStage::Proportional
            };
            let sample = weighted_sample(&corpus, &weights, a.n_weighted, a.n_unweighted, a.seed.unwrap_or(0), stage)?;
            if let Some(m) = &a.manifest {
                sample.write_manifest(create(m)?)?;
            }
            sample.corpus
        }
        _ => corpus,
    };
    corpus.write_csv(create(&a.out)?)?;
    for step in &corpus.provenance.steps {
        eprintln!("{step}");
    }
    Ok(())
}

fn scorer_spec(a: &ScorerArgs) -> Result<(ScorerSpec, Option<AuditConfig>)> {
    if let Some(endpoint) = &a.endpoint {
        let mut c = RemoteConfig::new(endpoint.clone());
        if let Some(b) = a.batch_size {
            c.batch_size = b;
        }
        return Ok((ScorerSpec::Remote(c), None));
    }
    if let Some(path) = &a.lexicon {
        return Ok((
            ScorerSpec::Lexicon {
                path: path.clone(),
                scale_min: 1.0,
                scale_max: 9.0,
            },
            None,
        ));
    }
    if let Some(path) = &a.config {
        let cfg = AuditConfig::load(path)?;
        let spec = match a.which.as_str() {
            "original" => cfg.scorers.original.clone(),
            "modified" => cfg
                .scorers
                .modified
                .clone()
                .ok_or_else(|| Error::Config("config has no modified scorer".into()))?,
            other => return Err(Error::Config(format!("--which must be original or modified, got `{other}`"))),
        };
        return Ok((spec, Some(cfg)));
    }
    Err(Error::Config(
        "no scorer specified: pass --endpoint, --lexicon or --config".into(),
    ))
}

fn probe_cmd(a: ProbeArgs) -> Result<()> {
    let (spec, cfg) = scorer_spec(&a.scorer)?;
    let mut cfg = cfg.unwrap_or_else(|| AuditConfig::new(spec.clone()));
    if a.entities.is_some() {
        cfg.entities = a.entities.clone();
    }
    if a.templates.is_some() {
        cfg.templates = a.templates.clone();
    }
    let (entities, templates) = cfg.load_inputs()?;
    let scorer = spec.build(&entities)?;
    let rows = probe(scorer.as_ref(), &build_stimulus_matrix(&entities, &templates)?)?;
    write_score_rows(&rows, create(&a.out)?)
}

fn audit_cmd(a: AuditArgs) -> Result<()> {
    let mut cfg = AuditConfig::load(&a.config)?;
    if let Some(o) = a.outdir {
        cfg.outdir = o;
    }
    if let Some(n) = a.n_perm {
        cfg.n_perm = n;
    }
    let report = run_audit(&cfg, a.seed)?;
    let files = write_report(&report, &cfg.outdir)?;
    eprintln!("wrote {} files to {}", files.len(), cfg.outdir.display());
    Ok(())
}

fn prune_cmd(a: PruneArgs) -> Result<()> {
    let format = CorpusFormat::from_path(&a.corpus)
        .ok_or_else(|| Error::Config("corpus must be .csv or .jsonl".into()))?;
    let corpus = load_corpus(&a.corpus, format)?;
    let mut entities = load_entities(&a.entities, &PartySet::default())?;
    let matcher = MatcherConfig {
        mode: if a.exact { MatchMode::Exact } else { MatchMode::StemPrefix },
        suffix_strip: a.suffix_strip,
    };
    let mut index = detect_mentions(&corpus, &entities, &matcher)?;
    if let Some(p) = &a.review_in {
        let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
        index = import_review(&index, f, &p.display().to_string())?;
    }
    if a.auto_confirm {
        index = index.auto_confirm();
    }
    if let Some(p) = &a.review_out {
        export_review(&index, &corpus, create(p)?)?;
    }
    let pruned = prune(&corpus, &index);
    pruned.write_csv(create(&a.out)?)?;
    let stats = mention_stats(&index);

    let valence = match &a.annotations {
        Some(p) => {
            let f = std::fs::File::open(p).map_err(|e| Error::io(p, e))?;
            let ratings = parse_annotations(f, &p.display().to_string(), ANNOTATION_MAX as u32)?;
            let means: HashMap<String, f64> = ratings.text_means().into_iter().collect();
            Some(mean_mention_valence(&means, &index)?)
        }
        None => None,
    };
    if let Some(p) = &a.entities_out {
        apply_mention_stats(&mut entities, &stats, valence.as_ref());
        write_entities(&entities, create(p)?)?;
    }
    write_json(&stats, a.stats.as_deref())?;
    eprintln!("{}", pruned.provenance.steps.last().map_or("", String::as_str));
    Ok(())
}

fn icc_cmd(a: IccArgs) -> Result<()> {
    let f = std::fs::File::open(&a.annotations).map_err(|e| Error::io(&a.annotations, e))?;
    let ratings = parse_annotations(f, &a.annotations.display().to_string(), ANNOTATION_MAX as u32)?;
    write_json(&icc1_summary(&ratings)?, None)
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.report).map_err(|e| Error::io(&a.report, e))?;
    let report: AuditReport = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: a.report.display().to_string(),
        record: 0,
        message: e.to_string(),
    })?;
    let files = write_report(&report, &a.outdir)?;
    eprintln!("wrote {} files to {}", files.len(), a.outdir.display());
    Ok(())
}
