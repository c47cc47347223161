use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use longdoc_core::corpus::{
    build_documents, load_corpus, split_stratified, split_train_test, strip_footnotes,
    write_jsonl, CorpusStats, Document, FootnoteRules, Format, Ontology, RawRecord, SplitPlan,
    TaskName,
};
use longdoc_core::metrics::{average_runs, best_epoch, EvalReport};
use longdoc_core::strategies::{train, EpochRecord, HyperParams, StrategyConfig};
use longdoc_core::synth::{generate, SynthSpec};
use longdoc_core::tokenizer::{tokenize, BasicTokenizer, Vocab};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::report::{render_markdown, write_csv, ResultRow};

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::Data(format!("creating {}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))
}

fn token_lengths(records: &[RawRecord]) -> Vec<usize> {
    records.par_iter().map(|r| tokenize(&r.text).len()).collect()
}

/// Loads footnote rules from `path`, falling back to the built-in set when
/// no path is given or the file is missing.
pub fn footnote_rules(path: Option<&Path>) -> CliResult<FootnoteRules> {
    match path {
        Some(p) if p.exists() => Ok(FootnoteRules::load(p)?),
        Some(p) => {
            eprintln!(
                "warning: footnote rules {} not found; using built-in rules",
                p.display()
            );
            Ok(FootnoteRules::default())
        }
        None => Ok(FootnoteRules::default()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessSummary {
    pub before: CorpusStats,
    pub after: CorpusStats,
}

impl PreprocessSummary {
    /// Token statistics before and after cleaning, one statistic per row.
    pub fn table(&self) -> String {
        let (b, a) = (&self.before, &self.after);
        let mut out = String::from("| Statistic | Before | After |\n|---|---|---|\n");
        let _ = writeln!(out, "| # Documents | {} | {} |", b.count, a.count);
        let _ = writeln!(out, "| Min # Tokens | {} | {} |", b.min_tokens, a.min_tokens);
        let _ = writeln!(out, "| Max # Tokens | {} | {} |", b.max_tokens, a.max_tokens);
        let _ = writeln!(out, "| Median # Tokens | {} | {} |", b.median_tokens, a.median_tokens);
        let _ = writeln!(out, "| Mean # Tokens | {:.2} | {:.2} |", b.mean_tokens, a.mean_tokens);
        out
    }
}

pub fn cmd_preprocess(
    input: &Path,
    format: Format,
    rules_path: Option<&Path>,
    output: &Path,
) -> CliResult<PreprocessSummary> {
    let rules = footnote_rules(rules_path)?;
    let records = load_corpus(input, format)?;
    if records.is_empty() {
        return Err(CliError::Data(format!("{} holds no records", input.display())));
    }
    let before = CorpusStats::from_lengths(&token_lengths(&records))?;
    let cleaned: Vec<RawRecord> = records
        .into_par_iter()
        .map(|r| RawRecord {
            text: strip_footnotes(&r.text, &rules),
            ..r
        })
        .collect();
    let after = CorpusStats::from_lengths(&token_lengths(&cleaned))?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::data)?;
    }
    write_jsonl(&cleaned, output)?;
    Ok(PreprocessSummary { before, after })
}

pub fn make_split(
    records: &[RawRecord],
    fraction: f64,
    seed: u64,
    stratify_by: Option<TaskName>,
) -> CliResult<SplitPlan> {
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    Ok(match stratify_by {
        None => split_train_test(&ids, fraction, seed)?,
        Some(task) => {
            let spec = longdoc_core::corpus::TaskSpec::from_records(task, records);
            let labels = longdoc_core::corpus::encode_labels(records, &spec)?;
            split_stratified(&ids, &labels, fraction, seed)?
        }
    })
}

pub fn cmd_split(
    input: &Path,
    format: Format,
    fraction: f64,
    seed: u64,
    stratify_by: Option<TaskName>,
    output: &Path,
) -> CliResult<SplitPlan> {
    let records = load_corpus(input, format)?;
    let plan = make_split(&records, fraction, seed, stratify_by)?;
    let json = serde_json::to_string_pretty(&plan).map_err(CliError::data)?;
    write_text(output, &(json + "\n"))?;
    Ok(plan)
}

/// Writes the corpus to `output` and, when given, the fine→broad ontology CSV.
pub fn cmd_synth(spec: &SynthSpec, output: &Path, ontology: Option<&Path>) -> CliResult<usize> {
    let records = generate(spec).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(CliError::data)?;
    }
    write_jsonl(&records, output)?;
    if let Some(path) = ontology {
        let mut text = String::from("fine_label,broad_label\n");
        for (fine, broad) in spec.ontology() {
            let _ = writeln!(text, "{fine},{broad}");
        }
        write_text(path, &text)?;
    }
    Ok(records.len())
}

/// Everything a strategy run needs, prepared once per experiment.
pub struct Prepared {
    pub vocab: Vocab,
    pub train: Vec<Document>,
    pub test: Vec<Document>,
    pub task: longdoc_core::corpus::TaskSpec,
    pub plan: SplitPlan,
}

pub fn prepare(cfg: &ExperimentConfig) -> CliResult<Prepared> {
    let mut records = load_corpus(&cfg.corpus.path, cfg.format()?)?;
    if records.len() < 2 {
        return Err(CliError::Data(format!(
            "{} needs at least 2 records, has {}",
            cfg.corpus.path.display(),
            records.len()
        )));
    }
    if cfg.corpus.strip_footnotes {
        let rules = footnote_rules(cfg.corpus.footnote_rules.as_deref())?;
        records.par_iter_mut().for_each(|r| r.text = strip_footnotes(&r.text, &rules));
    }
    let ontology = match &cfg.corpus.ontology {
        Some(p) => Ontology::load(p)?,
        None => Ontology::from_records(&records)?,
    };
    ontology.check(&records)?;
    let broad = ontology.task(TaskName::Broad);
    let fine = ontology.task(TaskName::Fine);
    let task_name = cfg.task_name()?;
    let stratify = cfg.split.stratified.then_some(task_name);
    let plan = make_split(&records, cfg.split.fraction, cfg.split.seed, stratify)?;

    let train_set: std::collections::HashSet<&str> =
        plan.train_ids.iter().map(String::as_str).collect();
    let train_streams: Vec<Vec<String>> = records
        .par_iter()
        .filter(|r| train_set.contains(r.id.as_str()))
        .map(|r| tokenize(&r.text))
        .collect();
    let vocab = Vocab::from_token_streams(&train_streams, cfg.vocab.max_size, cfg.vocab.min_freq)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let docs = build_documents(&records, &BasicTokenizer, &vocab, &broad, &fine)?;
    let (train, test) = plan.apply(&docs)?;
    let task = match task_name {
        TaskName::Broad => broad,
        TaskName::Fine => fine,
    };
    Ok(Prepared {
        vocab,
        train: train.into_iter().cloned().collect(),
        test: test.into_iter().cloned().collect(),
        task,
        plan,
    })
}

#[derive(Debug, Clone, Serialize)]
struct RunTrace<'a> {
    strategy: String,
    run: usize,
    seed: u64,
    best_epoch: usize,
    epochs: &'a [EpochRecord],
}

pub struct StrategyResult {
    pub row: ResultRow,
    pub averaged: EvalReport,
}

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    pub task: Option<TaskName>,
    pub format: Option<Format>,
}

/// Trains every configured strategy `runs` times, keeps each run's best
/// epoch, averages across runs and writes `results.csv`, `report.md` and
/// per-run JSON traces under the output directory.
pub fn cmd_run(config_path: &Path, overrides: &RunOverrides) -> CliResult<Vec<ResultRow>> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = overrides.seed {
        cfg.split.seed = seed;
        cfg.hyper.seed = Some(seed);
    }
    if let Some(out) = &overrides.output {
        cfg.output = out.clone();
    }
    if let Some(task) = overrides.task {
        cfg.task = task.to_string();
    }
    if let Some(format) = overrides.format {
        cfg.corpus.format = Some(match format {
            Format::Jsonl => "jsonl".into(),
            Format::Csv => "csv".into(),
        });
    }
    run_experiment(&cfg)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> CliResult<Vec<ResultRow>> {
    cfg.validate()?;
    let hyper = cfg.hyper.resolve()?;
    let data = prepare(cfg)?;
    let traces_dir = cfg.output.join("traces");
    std::fs::create_dir_all(&traces_dir)
        .map_err(|e| CliError::Data(format!("creating {}: {e}", traces_dir.display())))?;

    let results = cfg
        .strategies
        .par_iter()
        .enumerate()
        .map(|(idx, entry)| -> CliResult<StrategyResult> {
            let kind = entry.kind()?;
            let name = kind.to_string();
            let fail = |message: String| CliError::Training {
                strategy: name.clone(),
                message,
            };
            let mut best_reports = Vec::with_capacity(cfg.runs);
            for run in 0..cfg.runs {
                let seed = hyper.seed.wrapping_add(run as u64);
                let config = StrategyConfig {
                    kind,
                    max_chunks: entry.max_chunks(),
                    shared_encoder: entry.shared_encoder,
                    task: data.task.clone(),
                    hyper: HyperParams { seed, ..hyper },
                };
                let outcome = train(&config, &data.train, &data.vocab, Some(&data.test))
                    .map_err(|e| fail(e.to_string()))?;
                let evals = outcome.eval_trace();
                let (best, report) = best_epoch(&evals).map_err(|e| fail(e.to_string()))?;
                let trace = RunTrace {
                    strategy: name.clone(),
                    run: run + 1,
                    seed,
                    best_epoch: best + 1,
                    epochs: &outcome.trace,
                };
                let json = serde_json::to_string_pretty(&trace).map_err(CliError::data)?;
                let file = traces_dir.join(format!("{:02}_{}_run{}.json", idx + 1, kind.key(), run + 1));
                write_text(&file, &(json + "\n"))?;
                best_reports.push(report.clone());
            }
            let averaged = average_runs(&best_reports).map_err(|e| fail(e.to_string()))?;
            Ok(StrategyResult {
                row: ResultRow {
                    technique: name.clone(),
                    model: cfg.model.clone(),
                    task: data.task.name.to_string(),
                    classes: data.task.num_classes(),
                    runs: cfg.runs,
                    accuracy: averaged.accuracy,
                    precision: averaged.weighted_precision,
                    f1: averaged.weighted_f1,
                },
                averaged,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let rows: Vec<ResultRow> = results.into_iter().map(|r| r.row).collect();
    write_csv(&rows, &cfg.output.join("results.csv"))?;
    write_text(&cfg.output.join("report.md"), &render_markdown(&rows))?;
    let split_json = serde_json::to_string_pretty(&data.plan).map_err(CliError::data)?;
    write_text(&cfg.output.join("split.json"), &(split_json + "\n"))?;
    Ok(rows)
}

pub fn cmd_report(results: &Path) -> CliResult<String> {
    Ok(render_markdown(&crate::report::read_csv(results)?))
}
