//! The six long-document strategies over a shared encoder/head stack.
//!
//! Best-512, Summarization-512 and LSM feed one window to one encoder.
//! Concat-512 and Stride-`s` feed up to `max_chunks` windows to per-slot
//! encoders and concatenate the pooled vectors. The ensemble trains one
//! single-window model per chunk position and combines them by majority vote.

pub mod adam;
pub mod head;
mod model;
mod train;
pub mod vote;

pub use head::{argmax, cross_entropy, head_forward, softmax, Head};
pub use model::{
    ensemble_member_input, extract_inputs, predict_concat, predict_ensemble, predict_lsm,
    predict_single, Classifier, DocGrad, EnsembleModel, HyperParams, ModelBody, SlotInputs,
    StrategyConfig, StrategyKind, TrainedModel,
};
pub use train::{init_classifier, train, train_with_summarizer, EpochRecord, TrainOutcome};
pub use vote::{majority_vote, VoteMatrix};
