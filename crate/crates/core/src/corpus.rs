//! Corpus ingestion: labeled records, footnote stripping, label ontologies,
//! seeded train/test splits and token-length statistics.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::tokenizer::{Tokenizer, Vocab};
use crate::{Error, Result};

const FIELDS: [&str; 4] = ["id", "text", "broad_label", "fine_label"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub id: String,
    pub text: String,
    pub broad_label: String,
    pub fine_label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" | "json" => Ok(Format::Jsonl),
            "csv" => Ok(Format::Csv),
            other => Err(Error::Config(format!("unknown corpus format {other:?}"))),
        }
    }
}

impl Format {
    /// Guesses from the file extension, defaulting to JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

pub fn load_corpus(path: &Path, format: Format) -> Result<Vec<RawRecord>> {
    let file =
        File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    let records = match format {
        Format::Jsonl => read_jsonl(BufReader::new(file), path)?,
        Format::Csv => read_csv(file, path)?,
    };
    check_records(&records)?;
    Ok(records)
}

fn read_jsonl(reader: impl BufRead, path: &Path) -> Result<Vec<RawRecord>> {
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_owned(),
            line: lineno + 1,
            message,
        };
        let value: serde_json::Value =
            serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let obj = value
            .as_object()
            .ok_or_else(|| parse_err("expected a JSON object".into()))?;
        let record = records.len() + 1;
        let mut fields = FIELDS.iter().map(|&field| match obj.get(field) {
            None | Some(serde_json::Value::Null) => Err(Error::MissingField {
                record,
                field: field.into(),
            }),
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(parse_err(format!("{field} must be a string"))),
        });
        let mut next = || fields.next().expect("four fields");
        records.push(RawRecord {
            id: next()?,
            text: next()?,
            broad_label: next()?,
            fine_label: next()?,
        });
    }
    Ok(records)
}

fn read_csv(file: File, path: &Path) -> Result<Vec<RawRecord>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let mut rows = reader.records();
    let header = match rows.next() {
        None => return Ok(Vec::new()),
        Some(h) => h.map_err(|e| csv_err(path, e))?,
    };
    let column = |name: &str| header.iter().position(|h| h.trim() == name);
    let columns: Vec<Option<usize>> = FIELDS.iter().map(|f| column(f)).collect();

    let mut records = Vec::new();
    for row in rows {
        let row = row.map_err(|e| csv_err(path, e))?;
        let record = records.len() + 1;
        let mut values = FIELDS.iter().zip(&columns).map(|(&field, col)| {
            col.and_then(|c| row.get(c))
                .map(str::to_owned)
                .ok_or_else(|| Error::MissingField {
                    record,
                    field: field.into(),
                })
        });
        let mut next = || values.next().expect("four fields");
        records.push(RawRecord {
            id: next()?,
            text: next()?,
            broad_label: next()?,
            fine_label: next()?,
        });
    }
    Ok(records)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.to_owned(),
        line,
        message: e.to_string(),
    }
}

fn check_records(records: &[RawRecord]) -> Result<()> {
    let mut ids = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        if !ids.insert(r.id.as_str()) {
            return Err(Error::Data(format!("record {}: duplicate id {:?}", i + 1, r.id)));
        }
        for (field, value) in [("broad_label", &r.broad_label), ("fine_label", &r.fine_label)] {
            if value.is_empty() {
                return Err(Error::MissingField {
                    record: i + 1,
                    field: field.into(),
                });
            }
        }
    }
    Ok(())
}

pub fn write_jsonl(records: &[RawRecord], path: &Path) -> Result<()> {
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Ordered list of removal patterns applied until the text stops changing.
#[derive(Debug, Clone)]
pub struct FootnoteRules {
    patterns: Vec<Regex>,
}

/// Bracketed footnote lines such as `[Footnote 3] ...`.
const BRACKETED_NOTE: &str = r"(?m)^[ \t]*\[(?:Footnote|FOOTNOTE|Fn\.?|FN)[ \t]*\d+\][^\n]*(?:\n|$)";
/// A trailing `Footnotes`/`Notes` heading followed by a numbered list, to end of text.
const TRAILING_NOTES: &str =
    r"(?ms)^[ \t]*(?:FOOTNOTES|Footnotes|NOTES|Notes)[ \t]*:?[ \t]*\n[ \t]*1[.)\]].*\z";

impl Default for FootnoteRules {
    fn default() -> Self {
        Self::new([BRACKETED_NOTE, TRAILING_NOTES]).expect("built-in rules compile")
    }
}

impl FootnoteRules {
    pub fn new<S: AsRef<str>>(patterns: impl IntoIterator<Item = S>) -> Result<Self> {
        let patterns = patterns
            .into_iter()
            .map(|p| {
                Regex::new(p.as_ref())
                    .map_err(|e| Error::Config(format!("invalid footnote rule {:?}: {e}", p.as_ref())))
            })
            .collect::<Result<_>>()?;
        Ok(FootnoteRules { patterns })
    }

    /// One pattern per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::new(
            text.lines()
                .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::parse(&text)
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn strip(&self, text: &str) -> String {
        let mut current = text.to_owned();
        loop {
            let mut next = current.clone();
            for re in &self.patterns {
                next = re.replace_all(&next, "").into_owned();
            }
            if next == current {
                return current;
            }
            current = next;
        }
    }
}

pub fn strip_footnotes(text: &str, rules: &FootnoteRules) -> String {
    rules.strip(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Broad,
    Fine,
}

impl FromStr for TaskName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "broad" => Ok(TaskName::Broad),
            "fine" => Ok(TaskName::Fine),
            other => Err(Error::Config(format!("unknown task {other:?} (broad|fine)"))),
        }
    }
}

impl std::fmt::Display for TaskName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TaskName::Broad => "broad",
            TaskName::Fine => "fine",
        })
    }
}

/// A classification task: label names in index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSpec {
    pub name: TaskName,
    pub label_names: Vec<String>,
}

impl TaskSpec {
    /// Sorts and dedups `names`, so indices never depend on input order.
    pub fn new(name: TaskName, names: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = names.into_iter().collect();
        TaskSpec {
            name,
            label_names: set.into_iter().collect(),
        }
    }

    pub fn from_records(name: TaskName, records: &[RawRecord]) -> Self {
        Self::new(name, records.iter().map(|r| task_label(r, name).to_owned()))
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.label_names
            .binary_search_by(|n| n.as_str().cmp(label))
            .ok()
    }
}

fn task_label(r: &RawRecord, task: TaskName) -> &str {
    match task {
        TaskName::Broad => &r.broad_label,
        TaskName::Fine => &r.fine_label,
    }
}

pub fn encode_labels(records: &[RawRecord], task: &TaskSpec) -> Result<Vec<usize>> {
    records
        .iter()
        .map(|r| {
            let label = task_label(r, task.name);
            task.index_of(label).ok_or_else(|| Error::UnknownLabel {
                label: label.to_owned(),
                id: r.id.clone(),
            })
        })
        .collect()
}

/// The fine→broad label mapping.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Ontology {
    fine_to_broad: BTreeMap<String, String>,
}

impl Ontology {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut fine_to_broad = BTreeMap::new();
        for (fine, broad) in pairs {
            if fine.is_empty() || broad.is_empty() {
                return Err(Error::Data("ontology entries must be non-empty".into()));
            }
            if let Some(prev) = fine_to_broad.insert(fine.clone(), broad.clone()) {
                if prev != broad {
                    return Err(Error::Data(format!(
                        "fine label {fine:?} maps to both {prev:?} and {broad:?}"
                    )));
                }
            }
        }
        Ok(Ontology { fine_to_broad })
    }

    /// Two-column CSV `fine_label,broad_label` with a header row.
    pub fn load(path: &Path) -> Result<Self> {
        let file =
            File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        let mut reader = csv::Reader::from_reader(file);
        let mut pairs = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| csv_err(path, e))?;
            let line = row.position().map_or(0, |p| p.line() as usize);
            match (row.get(0), row.get(1)) {
                (Some(f), Some(b)) => pairs.push((f.trim().to_owned(), b.trim().to_owned())),
                _ => {
                    return Err(Error::Parse {
                        path: path.to_owned(),
                        line,
                        message: "expected fine_label,broad_label".into(),
                    })
                }
            }
        }
        Self::new(pairs)
    }

    pub fn from_records(records: &[RawRecord]) -> Result<Self> {
        Self::new(
            records
                .iter()
                .map(|r| (r.fine_label.clone(), r.broad_label.clone())),
        )
    }

    pub fn broad_of(&self, fine: &str) -> Option<&str> {
        self.fine_to_broad.get(fine).map(String::as_str)
    }

    pub fn task(&self, name: TaskName) -> TaskSpec {
        match name {
            TaskName::Fine => TaskSpec::new(name, self.fine_to_broad.keys().cloned()),
            TaskName::Broad => TaskSpec::new(name, self.fine_to_broad.values().cloned()),
        }
    }

    /// Every record's fine label must map to its broad label.
    pub fn check(&self, records: &[RawRecord]) -> Result<()> {
        for r in records {
            match self.broad_of(&r.fine_label) {
                None => {
                    return Err(Error::UnknownLabel {
                        label: r.fine_label.clone(),
                        id: r.id.clone(),
                    })
                }
                Some(b) if b != r.broad_label => {
                    return Err(Error::Data(format!(
                        "record {:?}: fine label {:?} belongs to {b:?}, not {:?}",
                        r.id, r.fine_label, r.broad_label
                    )))
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub token_ids: Vec<u32>,
    pub broad_y: usize,
    pub fine_y: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, token_ids: Vec<u32>, broad_y: usize, fine_y: usize) -> Self {
        Document {
            id: id.into(),
            token_ids,
            broad_y,
            fine_y,
        }
    }

    /// Unlabeled document, mostly for chunking.
    pub fn from_ids(token_ids: Vec<u32>) -> Self {
        Self::new("", token_ids, 0, 0)
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn label(&self, task: TaskName) -> usize {
        match task {
            TaskName::Broad => self.broad_y,
            TaskName::Fine => self.fine_y,
        }
    }
}

/// Tokenizes and labels every record against both tasks.
pub fn build_documents(
    records: &[RawRecord],
    tokenizer: &dyn Tokenizer,
    vocab: &Vocab,
    broad: &TaskSpec,
    fine: &TaskSpec,
) -> Result<Vec<Document>> {
    let broad_y = encode_labels(records, broad)?;
    let fine_y = encode_labels(records, fine)?;
    Ok(records
        .iter()
        .zip(broad_y.into_iter().zip(fine_y))
        .map(|(r, (b, f))| {
            let ids = tokenizer
                .tokenize(&r.text)
                .iter()
                .map(|t| vocab.lookup(t))
                .collect();
            Document::new(r.id.clone(), ids, b, f)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub train_fraction: f64,
    pub stratified: bool,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

/// Number of training items for `n` items: `floor(n * fraction)`, clamped so
/// both sides are non-empty.
pub fn train_size(n: usize, fraction: f64) -> usize {
    let raw = (n as f64 * fraction + 1e-9).floor() as usize;
    raw.clamp(1, n - 1)
}

fn check_split_args(n: usize, fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::Config(format!("need at least 2 documents to split, got {n}")));
    }
    Ok(())
}

/// Uniform seeded shuffle; the first `train_size` ids go to training.
pub fn split_train_test<S: AsRef<str>>(ids: &[S], fraction: f64, seed: u64) -> Result<SplitPlan> {
    check_split_args(ids.len(), fraction)?;
    let mut order: Vec<&str> = ids.iter().map(AsRef::as_ref).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = train_size(order.len(), fraction);
    Ok(SplitPlan {
        seed,
        train_fraction: fraction,
        stratified: false,
        train_ids: order[..n_train].iter().map(|s| (*s).to_owned()).collect(),
        test_ids: order[n_train..].iter().map(|s| (*s).to_owned()).collect(),
    })
}

/// Class-proportional variant: shuffle, group by label, then walk the grouped
/// order assigning position `j` to training iff `floor((j+1)f) > floor(jf)`.
/// The total training count matches [`train_size`] whenever the clamp is inactive.
pub fn split_stratified<S: AsRef<str>>(
    ids: &[S],
    labels: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<SplitPlan> {
    check_split_args(ids.len(), fraction)?;
    if ids.len() != labels.len() {
        return Err(Error::Dimension {
            expected: ids.len(),
            actual: labels.len(),
        });
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|&i| labels[i]);
    let target = train_size(ids.len(), fraction);
    let quota = |j: usize| ((j as f64) * fraction + 1e-9).floor() as usize;
    let (mut train_ids, mut test_ids) = (Vec::new(), Vec::new());
    for (j, &i) in order.iter().enumerate() {
        let id = ids[i].as_ref().to_owned();
        if quota(j + 1) > quota(j) && train_ids.len() < target {
            train_ids.push(id);
        } else {
            test_ids.push(id);
        }
    }
    // The clamp can demand one more training item than the quota walk produced.
    while train_ids.len() < target {
        train_ids.push(test_ids.pop().expect("test side non-empty"));
    }
    Ok(SplitPlan {
        seed,
        train_fraction: fraction,
        stratified: true,
        train_ids,
        test_ids,
    })
}

impl SplitPlan {
    /// Partitions `docs` into (train, test) following the plan's id lists.
    pub fn apply<'a>(&self, docs: &'a [Document]) -> Result<(Vec<&'a Document>, Vec<&'a Document>)> {
        let by_id: BTreeMap<&str, &Document> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
        let pick = |ids: &[String]| {
            ids.iter()
                .map(|id| {
                    by_id
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Data(format!("split references unknown id {id:?}")))
                })
                .collect::<Result<Vec<_>>>()
        };
        Ok((pick(&self.train_ids)?, pick(&self.test_ids)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub count: usize,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub median_tokens: usize,
    pub mean_tokens: f64,
}

impl CorpusStats {
    /// Median is the lower-middle element for even counts.
    pub fn from_lengths(lengths: &[usize]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::Data("corpus statistics need at least one document".into()));
        }
        let mut sorted = lengths.to_vec();
        sorted.sort_unstable();
        let n = sorted.len();
        let total: u128 = sorted.iter().map(|&l| l as u128).sum();
        Ok(CorpusStats {
            count: n,
            min_tokens: sorted[0],
            max_tokens: sorted[n - 1],
            median_tokens: sorted[(n - 1) / 2],
            mean_tokens: total as f64 / n as f64,
        })
    }
}

pub fn corpus_stats(documents: &[Document]) -> Result<CorpusStats> {
    let lengths: Vec<usize> = documents.iter().map(Document::len).collect();
    CorpusStats::from_lengths(&lengths)
}
