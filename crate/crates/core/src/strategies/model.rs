use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::head::{argmax, cross_entropy, Head};
use super::vote::{majority_vote, VoteMatrix};
use crate::chunker::{
    best_chunk, disjoint_chunks, stride_chunks, summarize, summary_budget, LeadingTokens,
    StrideConfig, Summarizer,
};
use crate::corpus::{Document, TaskName, TaskSpec};
use crate::encoder::{EncoderParams, SparseGrad, DEFAULT_DIM};
use crate::tokenizer::{pad_or_truncate, TokenSeq};
use crate::{Error, Result, DEFAULT_MAX_CHUNKS, LONG_WINDOW, WINDOW};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StrategyKind {
    Best512 { chunk_index: usize },
    Summarization512,
    Concat512,
    Ensemble,
    Stride { stride: usize },
    Lsm,
}

impl StrategyKind {
    pub const ALL_NAMES: [&'static str; 6] =
        ["best512", "summarization512", "concat512", "ensemble", "stride", "lsm"];

    /// Short machine name, as used in configs.
    pub fn key(&self) -> &'static str {
        match self {
            StrategyKind::Best512 { .. } => "best512",
            StrategyKind::Summarization512 => "summarization512",
            StrategyKind::Concat512 => "concat512",
            StrategyKind::Ensemble => "ensemble",
            StrategyKind::Stride { .. } => "stride",
            StrategyKind::Lsm => "lsm",
        }
    }

    /// Builds a kind from its key plus the kind-specific parameters. Supplying a
    /// parameter the kind does not take is an error.
    pub fn from_parts(key: &str, chunk_index: Option<usize>, stride: Option<usize>) -> Result<Self> {
        let unexpected = |field: &str| {
            Err(Error::Config(format!("strategy {key} does not take {field}")))
        };
        let kind = match key {
            "best512" => StrategyKind::Best512 {
                chunk_index: chunk_index.unwrap_or(1),
            },
            "stride" => StrategyKind::Stride {
                stride: stride
                    .ok_or_else(|| Error::Config("stride strategy needs a stride".into()))?,
            },
            "summarization512" => StrategyKind::Summarization512,
            "concat512" => StrategyKind::Concat512,
            "ensemble" => StrategyKind::Ensemble,
            "lsm" => StrategyKind::Lsm,
            other => {
                return Err(Error::Config(format!(
                    "unknown strategy {other:?}; expected one of {}",
                    Self::ALL_NAMES.join(", ")
                )))
            }
        };
        if chunk_index.is_some() && key != "best512" {
            return unexpected("chunk_index");
        }
        if stride.is_some() && key != "stride" {
            return unexpected("stride");
        }
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            StrategyKind::Best512 { chunk_index: 0 } => {
                Err(Error::Config("chunk_index is 1-based".into()))
            }
            StrategyKind::Stride { stride } => StrideConfig::new(stride).map(|_| ()),
            _ => Ok(()),
        }
    }

    /// Number of parallel input slots feeding the head.
    pub fn slots(&self, max_chunks: usize) -> usize {
        match self {
            StrategyKind::Concat512 | StrategyKind::Stride { .. } => max_chunks,
            _ => 1,
        }
    }

    pub fn window(&self) -> usize {
        match self {
            StrategyKind::Lsm => LONG_WINDOW,
            _ => WINDOW,
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyKind::Best512 { chunk_index } => write!(f, "Best-512 (c{chunk_index})"),
            StrategyKind::Summarization512 => f.write_str("Summarization-512"),
            StrategyKind::Concat512 => f.write_str("Concat-512"),
            StrategyKind::Ensemble => f.write_str("Ensemble"),
            StrategyKind::Stride { stride } => write!(f, "Stride-{stride}"),
            StrategyKind::Lsm => f.write_str("LSM"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub embed_dim: usize,
    pub seed: u64,
}

impl Default for HyperParams {
    /// Batch size and epochs as published; the learning rate is scaled up
    /// for the mean-pool encoder.
    fn default() -> Self {
        HyperParams {
            batch_size: 8,
            epochs: 5,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            embed_dim: DEFAULT_DIM,
            seed: 0,
        }
    }
}

impl HyperParams {
    /// The published fine-tuning preset for pre-trained encoders.
    pub fn published() -> Self {
        HyperParams {
            learning_rate: 3e-5,
            ..Self::default()
        }
    }

    /// The published preset for RoBERTa-style encoders.
    pub fn published_roberta() -> Self {
        HyperParams {
            learning_rate: 1e-5,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.learning_rate, self.epsilon]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        let betas = [self.beta1, self.beta2]
            .iter()
            .all(|b| (0.0..1.0).contains(b));
        if self.batch_size == 0 || self.epochs == 0 || self.embed_dim == 0 || !positive || !betas {
            return Err(Error::Config(format!("invalid hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyConfig {
    pub kind: StrategyKind,
    pub max_chunks: usize,
    /// Concat/stride slots share one encoder instead of one each.
    pub shared_encoder: bool,
    pub task: TaskSpec,
    pub hyper: HyperParams,
}

impl StrategyConfig {
    pub fn new(kind: StrategyKind, task: TaskSpec, hyper: HyperParams) -> Self {
        StrategyConfig {
            kind,
            max_chunks: DEFAULT_MAX_CHUNKS,
            shared_encoder: false,
            task,
            hyper,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        self.hyper.validate()?;
        if self.max_chunks == 0 {
            return Err(Error::Config("max_chunks must be at least 1".into()));
        }
        if self.task.num_classes() < 2 {
            return Err(Error::Config(format!(
                "task {} needs at least 2 classes, has {}",
                self.task.name,
                self.task.num_classes()
            )));
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.task.num_classes()
    }

    /// Number of independent single-slot members an ensemble trains.
    pub fn ensemble_members(&self) -> usize {
        self.max_chunks
    }
}

/// Per-slot encoder inputs for one document; `None` marks an empty slot.
pub type SlotInputs = Vec<Option<TokenSeq>>;

/// Encoder inputs for `kind`. Ensembles are handled per member by
/// [`ensemble_member_input`].
pub fn extract_inputs(
    kind: &StrategyKind,
    max_chunks: usize,
    summarizer: &dyn Summarizer,
    doc: &Document,
) -> Result<SlotInputs> {
    let slots = kind.slots(max_chunks);
    let fill = |seqs: Vec<TokenSeq>| -> SlotInputs {
        let mut out: SlotInputs = seqs.into_iter().map(Some).collect();
        out.resize(slots, None);
        out
    };
    Ok(match *kind {
        StrategyKind::Best512 { chunk_index } => vec![Some(best_chunk(doc, chunk_index).seq)],
        StrategyKind::Summarization512 => {
            let summary = summarize(doc, &summary_budget(doc.len()), summarizer)?;
            vec![Some(pad_or_truncate(&summary, WINDOW))]
        }
        StrategyKind::Concat512 => {
            fill(disjoint_chunks(doc, max_chunks).into_iter().map(|c| c.seq).collect())
        }
        StrategyKind::Stride { stride } => {
            let cfg = StrideConfig {
                stride,
                window: WINDOW,
                max_chunks,
            };
            cfg.validate()?;
            fill(stride_chunks(doc, &cfg).into_iter().map(|c| c.seq).collect())
        }
        StrategyKind::Lsm => {
            let n = doc.len().min(LONG_WINDOW);
            vec![Some(TokenSeq::from_ids(doc.token_ids[..n].to_vec()))]
        }
        StrategyKind::Ensemble => vec![ensemble_member_input(doc, 1)],
    })
}

/// Tokens `[(i-1)*512, min(i*512, len))` for member `i`, or `None` when the
/// document has no such chunk. Member 1 always gets an input.
pub fn ensemble_member_input(doc: &Document, member: usize) -> Option<TokenSeq> {
    let start = (member - 1) * WINDOW;
    if member > 1 && doc.len() <= start {
        return None;
    }
    let end = (start + WINDOW).min(doc.len());
    let seq = TokenSeq::from_ids(doc.token_ids[start.min(end)..end].to_vec());
    Some(pad_or_truncate(&seq, WINDOW))
}

/// Encoders feeding a softmax head through concatenated slot vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    /// One per slot, or a single shared encoder.
    pub encoders: Vec<EncoderParams>,
    pub slots: usize,
    pub head: Head,
}

/// Loss and parameter gradients for one labeled document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocGrad {
    pub loss: f64,
    pub head_weight: Vec<f64>,
    pub head_bias: Vec<f64>,
    /// Per slot; `None` for empty slots.
    pub slots: Vec<Option<SparseGrad>>,
}

impl Classifier {
    pub fn new(encoders: Vec<EncoderParams>, slots: usize, head: Head) -> Result<Self> {
        let dim = encoders.first().map(|e| e.dim).unwrap_or(0);
        if encoders.is_empty()
            || !(encoders.len() == 1 || encoders.len() == slots)
            || encoders.iter().any(|e| e.dim != dim)
            || head.d_in != dim * slots
        {
            return Err(Error::Config(format!(
                "inconsistent classifier: {} encoders, {slots} slots, head input {}",
                encoders.len(),
                head.d_in
            )));
        }
        Ok(Classifier {
            encoders,
            slots,
            head,
        })
    }

    pub fn dim(&self) -> usize {
        self.encoders[0].dim
    }

    pub fn encoder_for(&self, slot: usize) -> &EncoderParams {
        &self.encoders[if self.encoders.len() == 1 { 0 } else { slot }]
    }

    pub fn encoder_index(&self, slot: usize) -> usize {
        if self.encoders.len() == 1 {
            0
        } else {
            slot
        }
    }

    fn check_slots(&self, inputs: &[Option<TokenSeq>]) -> Result<()> {
        if inputs.len() != self.slots {
            return Err(Error::Dimension {
                expected: self.slots,
                actual: inputs.len(),
            });
        }
        Ok(())
    }

    /// Slot vectors concatenated in slot order; empty slots are zero.
    pub fn features(&self, inputs: &[Option<TokenSeq>]) -> Result<Vec<f64>> {
        self.check_slots(inputs)?;
        let mut x = Vec::with_capacity(self.head.d_in);
        for (slot, input) in inputs.iter().enumerate() {
            match input {
                Some(seq) => x.extend(self.encoder_for(slot).encode(seq)?),
                None => x.extend(std::iter::repeat(0.0).take(self.dim())),
            }
        }
        Ok(x)
    }

    pub fn probabilities(&self, inputs: &[Option<TokenSeq>]) -> Result<Vec<f64>> {
        self.head.forward(&self.features(inputs)?)
    }

    pub fn predict(&self, inputs: &[Option<TokenSeq>]) -> Result<usize> {
        Ok(argmax(&self.probabilities(inputs)?))
    }

    pub fn loss(&self, inputs: &[Option<TokenSeq>], y: usize) -> Result<f64> {
        Ok(cross_entropy(&self.probabilities(inputs)?, y)?.0)
    }

    /// Cross-entropy loss with gradients for the head and every slot encoder.
    pub fn loss_and_grad(&self, inputs: &[Option<TokenSeq>], y: usize) -> Result<DocGrad> {
        let x = self.features(inputs)?;
        let probs = self.head.forward(&x)?;
        let (loss, dlogits) = cross_entropy(&probs, y)?;
        let (head_weight, head_bias, dx) = self.head.backward(&x, &dlogits);
        let d = self.dim();
        let slots = inputs
            .iter()
            .enumerate()
            .map(|(slot, input)| {
                input
                    .as_ref()
                    .map(|seq| self.encoder_for(slot).backward(seq, &dx[slot * d..(slot + 1) * d]))
                    .transpose()
            })
            .collect::<Result<_>>()?;
        Ok(DocGrad {
            loss,
            head_weight,
            head_bias,
            slots,
        })
    }

    fn save(&self, dir: &Path) -> Result<()> {
        for (j, enc) in self.encoders.iter().enumerate() {
            enc.save(&dir.join(format!("encoder_{}.txt", j + 1)))?;
        }
        write_file(&dir.join("head.txt"), &self.head.to_text())
    }

    fn load(dir: &Path, encoders: usize, slots: usize) -> Result<Self> {
        let encoders = (1..=encoders)
            .map(|j| EncoderParams::load(&dir.join(format!("encoder_{j}.txt"))))
            .collect::<Result<_>>()?;
        let head = Head::from_text(&read_file(&dir.join("head.txt"))?)?;
        Self::new(encoders, slots, head)
    }
}

/// Members `m_1..m_n`; `None` marks a member with no training data, which
/// abstains at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleModel {
    pub members: Vec<Option<Classifier>>,
    pub num_classes: usize,
}

impl EnsembleModel {
    /// Member `i` votes iff it exists and the document has a non-empty chunk `i`.
    pub fn votes(&self, doc: &Document) -> Result<VoteMatrix> {
        let mut m = VoteMatrix::new(self.num_classes);
        for (i, member) in self.members.iter().enumerate() {
            let start = i * WINDOW;
            match member {
                Some(clf) if doc.len() > start => {
                    let input = ensemble_member_input(doc, i + 1);
                    m.vote(clf.predict(&[input])?)?;
                }
                _ => m.abstain(),
            }
        }
        Ok(m)
    }

    /// Majority vote; if every member abstains, member 1's argmax decides.
    pub fn predict(&self, doc: &Document) -> Result<usize> {
        let votes = self.votes(doc)?;
        match majority_vote(&votes, self.num_classes) {
            Ok(label) => Ok(label),
            Err(_) => match self.members.first().and_then(Option::as_ref) {
                Some(first) => first.predict(&[ensemble_member_input(doc, 1)]),
                None => Err(Error::Contract("ensemble has no first member".into())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelBody {
    Single(Classifier),
    Ensemble(EnsembleModel),
}

/// A trained strategy: configuration plus parameters.
#[derive(Clone)]
pub struct TrainedModel {
    pub config: StrategyConfig,
    pub body: ModelBody,
    pub summarizer: Arc<dyn Summarizer>,
}

impl fmt::Debug for TrainedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TrainedModel")
            .field("config", &self.config)
            .field("body", &self.body)
            .finish_non_exhaustive()
    }
}

impl TrainedModel {
    pub fn inputs(&self, doc: &Document) -> Result<SlotInputs> {
        extract_inputs(&self.config.kind, self.config.max_chunks, self.summarizer.as_ref(), doc)
    }

    pub fn predict(&self, doc: &Document) -> Result<usize> {
        match &self.body {
            ModelBody::Single(clf) => clf.predict(&self.inputs(doc)?),
            ModelBody::Ensemble(ens) => ens.predict(doc),
        }
    }

    /// Writes `manifest.txt` plus per-encoder and head matrices into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        create_dir(dir)?;
        let c = &self.config;
        let h = &c.hyper;
        let mut manifest = BTreeMap::new();
        manifest.insert("kind", c.kind.key().to_owned());
        if let StrategyKind::Best512 { chunk_index } = c.kind {
            manifest.insert("chunk_index", chunk_index.to_string());
        }
        if let StrategyKind::Stride { stride } = c.kind {
            manifest.insert("stride", stride.to_string());
        }
        manifest.insert("max_chunks", c.max_chunks.to_string());
        manifest.insert("shared_encoder", c.shared_encoder.to_string());
        manifest.insert("task", c.task.name.to_string());
        manifest.insert("labels", c.task.label_names.join("\t"));
        manifest.insert("seed", h.seed.to_string());
        manifest.insert("batch_size", h.batch_size.to_string());
        manifest.insert("epochs", h.epochs.to_string());
        manifest.insert("learning_rate", h.learning_rate.to_string());
        manifest.insert("beta1", h.beta1.to_string());
        manifest.insert("beta2", h.beta2.to_string());
        manifest.insert("epsilon", h.epsilon.to_string());
        manifest.insert("embed_dim", h.embed_dim.to_string());
        match &self.body {
            ModelBody::Single(clf) => {
                manifest.insert("encoders", clf.encoders.len().to_string());
                clf.save(dir)?;
            }
            ModelBody::Ensemble(ens) => {
                let present: Vec<String> = ens
                    .members
                    .iter()
                    .enumerate()
                    .filter(|(_, m)| m.is_some())
                    .map(|(i, _)| (i + 1).to_string())
                    .collect();
                manifest.insert("members", present.join(","));
                for (i, m) in ens.members.iter().enumerate() {
                    if let Some(clf) = m {
                        let sub = dir.join(format!("member_{}", i + 1));
                        create_dir(&sub)?;
                        clf.save(&sub)?;
                    }
                }
            }
        }
        let text: String = manifest
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect();
        write_file(&dir.join("manifest.txt"), &text)
    }

    /// Loads a checkpoint written by [`TrainedModel::save`]. Summarization
    /// models come back with the leading-tokens summarizer.
    pub fn load(dir: &Path) -> Result<Self> {
        let text = read_file(&dir.join("manifest.txt"))?;
        let manifest: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once(" = "))
            .collect();
        let get = |k: &str| {
            manifest
                .get(k)
                .copied()
                .ok_or_else(|| Error::Data(format!("manifest lacks {k}")))
        };
        fn num<T: FromStr>(k: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Data(format!("manifest {k} = {v:?} is not a number")))
        }
        let opt = |k: &str| manifest.get(k).map(|v| num::<usize>(k, v)).transpose();
        let kind = StrategyKind::from_parts(get("kind")?, opt("chunk_index")?, opt("stride")?)?;
        let labels: Vec<String> = get("labels")?.split('\t').map(str::to_owned).collect();
        let task = TaskSpec::new(get("task")?.parse::<TaskName>()?, labels);
        let hyper = HyperParams {
            batch_size: num("batch_size", get("batch_size")?)?,
            epochs: num("epochs", get("epochs")?)?,
            learning_rate: num("learning_rate", get("learning_rate")?)?,
            beta1: num("beta1", get("beta1")?)?,
            beta2: num("beta2", get("beta2")?)?,
            epsilon: num("epsilon", get("epsilon")?)?,
            embed_dim: num("embed_dim", get("embed_dim")?)?,
            seed: num("seed", get("seed")?)?,
        };
        let config = StrategyConfig {
            kind,
            max_chunks: num("max_chunks", get("max_chunks")?)?,
            shared_encoder: get("shared_encoder")? == "true",
            task,
            hyper,
        };
        let body = if kind == StrategyKind::Ensemble {
            let present: Vec<usize> = get("members")?
                .split(',')
                .filter(|s| !s.is_empty())
                .map(|s| num("members", s))
                .collect::<Result<_>>()?;
            let members = (1..=config.ensemble_members())
                .map(|i| {
                    present
                        .contains(&i)
                        .then(|| Classifier::load(&dir.join(format!("member_{i}")), 1, 1))
                        .transpose()
                })
                .collect::<Result<_>>()?;
            ModelBody::Ensemble(EnsembleModel {
                members,
                num_classes: config.num_classes(),
            })
        } else {
            let encoders = num("encoders", get("encoders")?)?;
            ModelBody::Single(Classifier::load(dir, encoders, kind.slots(config.max_chunks))?)
        };
        Ok(TrainedModel {
            config,
            body,
            summarizer: Arc::new(LeadingTokens),
        })
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

/// Argmax over a single-input classifier fed by `extractor`.
pub fn predict_single(
    clf: &Classifier,
    doc: &Document,
    extractor: impl Fn(&Document) -> Result<TokenSeq>,
) -> Result<usize> {
    clf.predict(&[Some(extractor(doc)?)])
}

/// Argmax over concatenated slot vectors of the windows produced by `chunker`.
pub fn predict_concat(
    clf: &Classifier,
    doc: &Document,
    chunker: impl Fn(&Document) -> Vec<crate::chunker::Chunk>,
) -> Result<usize> {
    let mut inputs: SlotInputs = chunker(doc).into_iter().map(|c| Some(c.seq)).collect();
    inputs.truncate(clf.slots);
    inputs.resize(clf.slots, None);
    clf.predict(&inputs)
}

pub fn predict_ensemble(model: &EnsembleModel, doc: &Document) -> Result<usize> {
    model.predict(doc)
}

/// One forward pass over the first `min(len, 4096)` tokens.
pub fn predict_lsm(clf: &Classifier, doc: &Document) -> Result<usize> {
    if clf.encoders[0].window != LONG_WINDOW {
        return Err(Error::Config(format!(
            "long-context prediction needs a {LONG_WINDOW}-token encoder"
        )));
    }
    let n = doc.len().min(LONG_WINDOW);
    clf.predict(&[Some(TokenSeq::from_ids(doc.token_ids[..n].to_vec()))])
}
