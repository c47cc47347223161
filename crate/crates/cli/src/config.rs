//! Experiment configuration (TOML).
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use longdoc_core::corpus::{Format, TaskName};
use longdoc_core::strategies::{HyperParams, StrategyKind};
use longdoc_core::DEFAULT_MAX_CHUNKS;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSection,
    #[serde(default = "default_task")]
    pub task: String,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    /// Label for the report's Model column.
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub vocab: VocabSection,
    #[serde(default)]
    pub hyper: HyperSection,
    #[serde(default, rename = "strategy")]
    pub strategies: Vec<StrategyEntry>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    pub format: Option<String>,
    pub ontology: Option<PathBuf>,
    #[serde(default)]
    pub strip_footnotes: bool,
    pub footnote_rules: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stratified: bool,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection {
            fraction: default_fraction(),
            seed: 0,
            stratified: false,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabSection {
    #[serde(default = "default_vocab_size")]
    pub max_size: usize,
    #[serde(default = "default_min_freq")]
    pub min_freq: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection {
            max_size: default_vocab_size(),
            min_freq: default_min_freq(),
        }
    }
}

/// Optional overrides of [`HyperParams::default`].
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSection {
    pub batch_size: Option<usize>,
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
    pub embed_dim: Option<usize>,
    pub seed: Option<u64>,
    /// `default`, `published` (3e-5) or `published_roberta` (1e-5).
    pub preset: Option<String>,
}

impl HyperSection {
    pub fn resolve(&self) -> CliResult<HyperParams> {
        let base = match self.preset.as_deref() {
            None | Some("default") => HyperParams::default(),
            Some("published") => HyperParams::published(),
            Some("published_roberta") => HyperParams::published_roberta(),
            Some(other) => return Err(CliError::Config(format!("unknown hyper preset {other:?}"))),
        };
        let h = HyperParams {
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            epochs: self.epochs.unwrap_or(base.epochs),
            learning_rate: self.learning_rate.unwrap_or(base.learning_rate),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
            embed_dim: self.embed_dim.unwrap_or(base.embed_dim),
            seed: self.seed.unwrap_or(base.seed),
        };
        h.validate()?;
        Ok(h)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyEntry {
    pub kind: String,
    pub chunk_index: Option<usize>,
    pub stride: Option<usize>,
    pub max_chunks: Option<usize>,
    #[serde(default)]
    pub shared_encoder: bool,
}

impl StrategyEntry {
    pub fn kind(&self) -> CliResult<StrategyKind> {
        Ok(StrategyKind::from_parts(&self.kind, self.chunk_index, self.stride)?)
    }

    pub fn max_chunks(&self) -> usize {
        self.max_chunks.unwrap_or(DEFAULT_MAX_CHUNKS)
    }
}

fn default_task() -> String {
    "broad".into()
}
fn default_runs() -> usize {
    5
}
fn default_output() -> PathBuf {
    PathBuf::from("results")
}
fn default_model() -> String {
    "MeanPool".into()
}
fn default_fraction() -> f64 {
    0.9
}
fn default_vocab_size() -> usize {
    50_000
}
fn default_min_freq() -> usize {
    1
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(CliError::config)?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("reading {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.corpus.path);
        join(&mut self.output);
        if let Some(p) = self.corpus.ontology.as_mut() {
            join(p);
        }
        if let Some(p) = self.corpus.footnote_rules.as_mut() {
            join(p);
        }
    }

    pub fn task_name(&self) -> CliResult<TaskName> {
        Ok(self.task.parse()?)
    }

    pub fn format(&self) -> CliResult<Format> {
        match &self.corpus.format {
            Some(f) => Ok(f.parse()?),
            None => Ok(Format::from_path(&self.corpus.path)),
        }
    }

    /// Checks everything that can be checked before touching the corpus.
    pub fn validate(&self) -> CliResult<()> {
        let exists = |p: &Path, what: &str| {
            if p.exists() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{what} {} does not exist", p.display())))
            }
        };
        exists(&self.corpus.path, "corpus")?;
        if let Some(p) = &self.corpus.ontology {
            exists(p, "ontology")?;
        }
        if let Some(p) = &self.corpus.footnote_rules {
            exists(p, "footnote rules")?;
        }
        if self.runs == 0 {
            return Err(CliError::Config("runs must be at least 1".into()));
        }
        if !(self.split.fraction > 0.0 && self.split.fraction < 1.0) {
            return Err(CliError::Config(format!(
                "split fraction must lie in (0, 1), got {}",
                self.split.fraction
            )));
        }
        if self.strategies.is_empty() {
            return Err(CliError::Config("no [[strategy]] entries".into()));
        }
        for s in &self.strategies {
            s.kind()?;
            if s.max_chunks() == 0 {
                return Err(CliError::Config("max_chunks must be at least 1".into()));
            }
        }
        self.task_name()?;
        self.format()?;
        self.hyper.resolve()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
        task = "fine"
        runs = 2
        output = "out"

        [corpus]
        path = "corpus.jsonl"

        [hyper]
        preset = "published"
        epochs = 3

        [[strategy]]
        kind = "best512"
        chunk_index = 2

        [[strategy]]
        kind = "stride"
        stride = 128
    "#;

    #[test]
    fn parses_and_resolves() {
        let cfg = ExperimentConfig::parse(SAMPLE, Path::new("/data")).unwrap();
        assert_eq!(cfg.corpus.path, Path::new("/data/corpus.jsonl"));
        assert_eq!(cfg.output, Path::new("/data/out"));
        assert_eq!(cfg.task_name().unwrap(), TaskName::Fine);
        let h = cfg.hyper.resolve().unwrap();
        assert_eq!((h.learning_rate, h.epochs, h.batch_size), (3e-5, 3, 8));
        assert_eq!(
            cfg.strategies[1].kind().unwrap(),
            StrategyKind::Stride { stride: 128 }
        );
        assert_eq!(cfg.split.fraction, 0.9);
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::parse("[corpus]\npath='x'\nbogus=1\n", Path::new(".")).is_err());
        let cfg = ExperimentConfig::parse(
            "[corpus]\npath='x'\n[[strategy]]\nkind='concat512'\nstride=64\n",
            Path::new("."),
        )
        .unwrap();
        assert!(cfg.strategies[0].kind().is_err());
        let cfg = ExperimentConfig::parse("[corpus]\npath='missing.jsonl'\n", Path::new("/nonexistent")).unwrap();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }
}
