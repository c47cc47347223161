use std::borrow::Borrow;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamConfig};
use super::head::Head;
use super::model::{
    ensemble_member_input, extract_inputs, Classifier, EnsembleModel, HyperParams, ModelBody,
    SlotInputs, StrategyConfig, StrategyKind, TrainedModel,
};
use crate::chunker::{LeadingTokens, Summarizer};
use crate::corpus::Document;
use crate::encoder::EncoderParams;
use crate::metrics::{evaluate, EvalReport};
use crate::tokenizer::Vocab;
use crate::{Error, Result, WINDOW};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Mean per-document loss over the epoch's batches, measured before each update.
    pub train_loss: f64,
    pub eval: Option<EvalReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub trace: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn eval_trace(&self) -> Vec<EvalReport> {
        self.trace.iter().filter_map(|r| r.eval.clone()).collect()
    }
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    ChaCha8Rng::seed_from_u64(seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)).gen()
}

/// Builds a freshly initialized classifier for `config`.
pub fn init_classifier(config: &StrategyConfig, slots: usize, vocab_size: usize, seed: u64) -> Classifier {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_enc = if config.shared_encoder { 1 } else { slots };
    let dim = config.hyper.embed_dim;
    let encoders = (0..n_enc)
        .map(|_| EncoderParams::new(vocab_size, dim, config.kind.window(), rng.gen()))
        .collect();
    let head = Head::init(config.num_classes(), dim * slots, &mut rng);
    Classifier::new(encoders, slots, head).expect("consistent by construction")
}

/// Mini-batch Adam over one classifier and its fixed, pre-extracted inputs.
struct Trainer {
    clf: Classifier,
    inputs: Vec<SlotInputs>,
    labels: Vec<usize>,
    enc_opt: Vec<Adam>,
    weight_opt: Adam,
    bias_opt: Adam,
    enc_grad: Vec<Vec<f64>>,
    step: u64,
    rng: ChaCha8Rng,
}

impl Trainer {
    fn new(clf: Classifier, inputs: Vec<SlotInputs>, labels: Vec<usize>, seed: u64) -> Self {
        let enc_opt = clf.encoders.iter().map(|e| Adam::new(e.table.len())).collect();
        let enc_grad = clf.encoders.iter().map(|e| vec![0.0; e.table.len()]).collect();
        let weight_opt = Adam::new(clf.head.weight.len());
        let bias_opt = Adam::new(clf.head.bias.len());
        Trainer {
            clf,
            inputs,
            labels,
            enc_opt,
            weight_opt,
            bias_opt,
            enc_grad,
            step: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    fn run_epoch(&mut self, hyper: &HyperParams) -> Result<f64> {
        let adam = AdamConfig {
            learning_rate: hyper.learning_rate,
            beta1: hyper.beta1,
            beta2: hyper.beta2,
            epsilon: hyper.epsilon,
        };
        let mut order: Vec<usize> = (0..self.inputs.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total_loss = 0.0;
        for batch in order.chunks(hyper.batch_size) {
            let clf = &self.clf;
            let grads = batch
                .par_iter()
                .map(|&i| clf.loss_and_grad(&self.inputs[i], self.labels[i]))
                .collect::<Result<Vec<_>>>()?;

            // Reduce in batch order so results do not depend on thread timing.
            let scale = 1.0 / batch.len() as f64;
            let mut dw = vec![0.0; clf.head.weight.len()];
            let mut db = vec![0.0; clf.head.bias.len()];
            self.enc_grad.iter_mut().for_each(|g| g.fill(0.0));
            for g in &grads {
                total_loss += g.loss;
                dw.iter_mut().zip(&g.head_weight).for_each(|(a, b)| *a += b * scale);
                db.iter_mut().zip(&g.head_bias).for_each(|(a, b)| *a += b * scale);
                for (slot, sg) in g.slots.iter().enumerate() {
                    if let Some(sg) = sg {
                        let buf = &mut self.enc_grad[clf.encoder_index(slot)];
                        for (row, v) in &sg.rows {
                            let base = *row as usize * sg.dim;
                            buf[base..base + sg.dim]
                                .iter_mut()
                                .zip(v)
                                .for_each(|(a, b)| *a += b * scale);
                        }
                    }
                }
            }

            self.step += 1;
            let step = self.step;
            self.weight_opt.update(&adam, step, &mut self.clf.head.weight, &dw);
            self.bias_opt.update(&adam, step, &mut self.clf.head.bias, &db);
            for ((enc, opt), grad) in self
                .clf
                .encoders
                .iter_mut()
                .zip(&mut self.enc_opt)
                .zip(&self.enc_grad)
            {
                opt.update(&adam, step, &mut enc.table, grad);
            }
        }
        Ok(total_loss / self.inputs.len() as f64)
    }
}

fn labels_of<D: Borrow<Document>>(config: &StrategyConfig, docs: &[D]) -> Result<Vec<usize>> {
    let k = config.num_classes();
    docs.iter()
        .map(|d| {
            let d = d.borrow();
            let y = d.label(config.task.name);
            if y >= k {
                return Err(Error::Data(format!(
                    "document {:?} has label {y} but the task has {k} classes",
                    d.id
                )));
            }
            Ok(y)
        })
        .collect()
}

pub fn train<D: Borrow<Document> + Sync>(
    config: &StrategyConfig,
    train_docs: &[D],
    vocab: &Vocab,
    eval_docs: Option<&[D]>,
) -> Result<TrainOutcome> {
    train_with_summarizer(config, train_docs, vocab.len(), eval_docs, Arc::new(LeadingTokens))
}

/// Trains `config` on `train_docs`, evaluating on `eval_docs` after every
/// epoch when given. Deterministic in `config.hyper.seed`.
pub fn train_with_summarizer<D: Borrow<Document> + Sync>(
    config: &StrategyConfig,
    train_docs: &[D],
    vocab_size: usize,
    eval_docs: Option<&[D]>,
    summarizer: Arc<dyn Summarizer>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_docs.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    let labels = labels_of(config, train_docs)?;
    let eval = eval_docs
        .map(|docs| Ok::<_, Error>((docs, labels_of(config, docs)?)))
        .transpose()?;
    let hyper = config.hyper;

    if config.kind == StrategyKind::Ensemble {
        return train_ensemble(config, train_docs, &labels, vocab_size, eval, summarizer);
    }

    let slots = config.kind.slots(config.max_chunks);
    let extract = |docs: &[D]| -> Result<Vec<SlotInputs>> {
        docs.par_iter()
            .map(|d| extract_inputs(&config.kind, config.max_chunks, summarizer.as_ref(), d.borrow()))
            .collect()
    };
    let inputs = extract(train_docs)?;
    let eval_inputs = eval.as_ref().map(|(docs, _)| extract(docs)).transpose()?;

    let clf = init_classifier(config, slots, vocab_size, derive_seed(hyper.seed, 0));
    let mut trainer = Trainer::new(clf, inputs, labels, derive_seed(hyper.seed, 1));
    let mut trace = Vec::with_capacity(hyper.epochs);
    for epoch in 1..=hyper.epochs {
        let train_loss = trainer.run_epoch(&hyper)?;
        let report = match (&eval, &eval_inputs) {
            (Some((_, y_true)), Some(xs)) => {
                let clf = &trainer.clf;
                let y_pred = xs.par_iter().map(|x| clf.predict(x)).collect::<Result<Vec<_>>>()?;
                Some(evaluate(y_true, &y_pred, config.num_classes())?)
            }
            _ => None,
        };
        trace.push(EpochRecord {
            epoch,
            train_loss,
            eval: report,
        });
    }
    Ok(TrainOutcome {
        model: TrainedModel {
            config: config.clone(),
            body: ModelBody::Single(trainer.clf),
            summarizer,
        },
        trace,
    })
}

/// Member `i` trains on documents longer than `(i-1) * 512` tokens using
/// chunk `i`; members without data are left absent. Members advance one
/// epoch at a time so the ensemble can be scored after each epoch.
fn train_ensemble<D: Borrow<Document> + Sync>(
    config: &StrategyConfig,
    train_docs: &[D],
    labels: &[usize],
    vocab_size: usize,
    eval: Option<(&[D], Vec<usize>)>,
    summarizer: Arc<dyn Summarizer>,
) -> Result<TrainOutcome> {
    let hyper = config.hyper;
    let mut members: Vec<Option<Trainer>> = (1..=config.ensemble_members())
        .map(|i| {
            let min_len = (i - 1) * WINDOW + 1;
            let (inputs, ys): (Vec<SlotInputs>, Vec<usize>) = train_docs
                .iter()
                .zip(labels)
                .filter(|(d, _)| i == 1 || Borrow::<Document>::borrow(*d).len() >= min_len)
                .map(|(d, &y)| (vec![ensemble_member_input(d.borrow(), i)], y))
                .unzip();
            if inputs.is_empty() {
                return None;
            }
            let stream = 2 * i as u64;
            let clf = init_classifier(config, 1, vocab_size, derive_seed(hyper.seed, stream));
            Some(Trainer::new(clf, inputs, ys, derive_seed(hyper.seed, stream + 1)))
        })
        .collect();

    let snapshot = |members: &[Option<Trainer>]| EnsembleModel {
        members: members
            .iter()
            .map(|m| m.as_ref().map(|t| t.clf.clone()))
            .collect(),
        num_classes: config.num_classes(),
    };

    let mut trace = Vec::with_capacity(hyper.epochs);
    for epoch in 1..=hyper.epochs {
        let mut losses = Vec::new();
        for trainer in members.iter_mut().flatten() {
            losses.push(trainer.run_epoch(&hyper)?);
        }
        let report = match &eval {
            Some((docs, y_true)) => {
                let ens = snapshot(&members);
                let y_pred = docs
                    .par_iter()
                    .map(|d| ens.predict(d.borrow()))
                    .collect::<Result<Vec<_>>>()?;
                Some(evaluate(y_true, &y_pred, config.num_classes())?)
            }
            None => None,
        };
        trace.push(EpochRecord {
            epoch,
            train_loss: losses.iter().sum::<f64>() / losses.len() as f64,
            eval: report,
        });
    }
    Ok(TrainOutcome {
        model: TrainedModel {
            config: config.clone(),
            body: ModelBody::Ensemble(snapshot(&members)),
            summarizer,
        },
        trace,
    })
}
