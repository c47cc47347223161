//! Long-document classification with fixed-window encoders.
//!
//! Documents longer than an encoder window (512 tokens) are fed to a classifier
//! through one of six strategies:
//!
//! | Strategy            | Input to the encoder(s)                                   |
//! |---------------------|-----------------------------------------------------------|
//! | Best-512 (`i`)      | the `i`-th 512-token chunk, last-512 fallback             |
//! | Summarization-512   | per-split extracts concatenated into one 512 window       |
//! | Concat-512          | up to 6 disjoint chunks, pooled vectors concatenated      |
//! | Ensemble            | one model per chunk, majority vote over one-hot votes     |
//! | Stride-`s`          | up to 6 windows overlapping by `s` tokens, concatenated   |
//! | LSM                 | one long-window encoder (up to 4096 tokens)               |
//!
//! The encoder is a masked mean-pool over a trainable embedding table, which
//! stands in for a transformer's classification vector while keeping training
//! fast and fully deterministic.

pub mod chunker;
pub mod corpus;
pub mod encoder;
mod error;
pub mod metrics;
pub mod strategies;
pub mod synth;
pub mod tokenizer;

pub use error::{Error, Result};

/// Width of the standard encoder window, in tokens.
pub const WINDOW: usize = 512;

/// Width of the long-context encoder window, in tokens.
pub const LONG_WINDOW: usize = 4096;

/// Chunk cap used by the multi-chunk strategies.
pub const DEFAULT_MAX_CHUNKS: usize = 6;
