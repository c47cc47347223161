//! Window arithmetic over token sequences.
//!
//! All chunk origins are half-open token ranges into the source document.
//! Every [`Chunk`] is padded to the full window so encoders always see a fixed
//! shape; the mask records which positions are real.

use crate::corpus::Document;
use crate::tokenizer::{pad_or_truncate, TokenSeq};
use crate::{Error, Result, DEFAULT_MAX_CHUNKS, WINDOW};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunk {
    /// Padded to the window length.
    pub seq: TokenSeq,
    pub origin_start: usize,
    pub origin_end: usize,
    /// 1-based chunk number.
    pub index: usize,
}

impl Chunk {
    fn from_range(doc: &Document, start: usize, end: usize, index: usize, window: usize) -> Self {
        let seq = TokenSeq::from_ids(doc.token_ids[start..end].to_vec());
        Chunk {
            seq: pad_or_truncate(&seq, window),
            origin_start: start,
            origin_end: end,
            index,
        }
    }

    pub fn real_len(&self) -> usize {
        self.origin_end - self.origin_start
    }

    pub fn is_all_pad(&self) -> bool {
        self.origin_end == self.origin_start
    }
}

/// The `i`-th 512-token chunk. Documents shorter than `i * 512` fall back to
/// their last 512 tokens (or all of them when `i == 1`).
pub fn best_chunk(doc: &Document, i: usize) -> Chunk {
    assert!(i >= 1, "chunk index is 1-based");
    let len = doc.len();
    let (start, end) = if len >= i * WINDOW {
        ((i - 1) * WINDOW, i * WINDOW)
    } else if i > 1 {
        (len - len.min(WINDOW), len)
    } else {
        (0, len)
    };
    Chunk::from_range(doc, start, end, i, WINDOW)
}

/// Non-overlapping windows at offsets 0, 512, 1024, ... capped at `max_chunks`.
/// An empty document yields one all-pad chunk.
pub fn disjoint_chunks(doc: &Document, max_chunks: usize) -> Vec<Chunk> {
    assert!(max_chunks >= 1, "max_chunks must be at least 1");
    let len = doc.len();
    if len == 0 {
        return vec![Chunk::from_range(doc, 0, 0, 1, WINDOW)];
    }
    (0..max_chunks)
        .map(|k| k * WINDOW)
        .take_while(|&start| start < len)
        .enumerate()
        .map(|(k, start)| Chunk::from_range(doc, start, (start + WINDOW).min(len), k + 1, WINDOW))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StrideConfig {
    /// Tokens shared by consecutive windows.
    pub stride: usize,
    pub window: usize,
    pub max_chunks: usize,
}

impl StrideConfig {
    pub fn new(stride: usize) -> Result<Self> {
        let cfg = StrideConfig {
            stride,
            window: WINDOW,
            max_chunks: DEFAULT_MAX_CHUNKS,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 || self.stride >= self.window {
            return Err(Error::Config(format!(
                "stride must lie in (0, {}), got {}",
                self.window, self.stride
            )));
        }
        if self.max_chunks == 0 {
            return Err(Error::Config("max_chunks must be at least 1".into()));
        }
        Ok(())
    }

    pub fn step(&self) -> usize {
        self.window - self.stride
    }
}

/// Windows starting every `window - stride` tokens. A new window is opened only
/// while the previous one stopped short of the document end.
pub fn stride_chunks(doc: &Document, cfg: &StrideConfig) -> Vec<Chunk> {
    let len = doc.len();
    let mut chunks = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + cfg.window).min(len);
        chunks.push(Chunk::from_range(doc, start, end, chunks.len() + 1, cfg.window));
        if start + cfg.window >= len || chunks.len() == cfg.max_chunks {
            return chunks;
        }
        start += cfg.step();
    }
}

/// How a document is compressed into one window: `splits` contiguous ranges,
/// each contributing at most `per_split_budget` tokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SummarySpec {
    pub splits: usize,
    pub per_split_budget: usize,
    pub split_boundaries: Vec<(usize, usize)>,
}

/// `splits = max(1, floor(len / 1024))`, `budget = floor(512 / splits)`.
/// Leftover budget is dropped.
pub fn summary_budget(length: usize) -> SummarySpec {
    let splits = (length / (2 * WINDOW)).max(1);
    let split_boundaries = (0..splits)
        .map(|k| (k * length / splits, (k + 1) * length / splits))
        .collect();
    SummarySpec {
        splits,
        per_split_budget: WINDOW / splits,
        split_boundaries,
    }
}

/// Produces at most `budget` tokens summarizing one split.
pub trait Summarizer: Send + Sync {
    fn summarize(&self, split: &[u32], budget: usize) -> Vec<u32>;
}

/// Keeps the first `budget` tokens of each split.
#[derive(Debug, Default, Clone, Copy)]
pub struct LeadingTokens;

impl Summarizer for LeadingTokens {
    fn summarize(&self, split: &[u32], budget: usize) -> Vec<u32> {
        split[..budget.min(split.len())].to_vec()
    }
}

/// Concatenates per-split summaries in split order. Documents that already
/// fit in one window are returned unchanged.
pub fn summarize(doc: &Document, spec: &SummarySpec, summarizer: &dyn Summarizer) -> Result<TokenSeq> {
    let len = doc.len();
    let covers = spec.split_boundaries.len() == spec.splits
        && spec.split_boundaries.first().map_or(false, |b| b.0 == 0)
        && spec.split_boundaries.last().map_or(false, |b| b.1 == len)
        && spec.split_boundaries.windows(2).all(|w| w[0].1 == w[1].0);
    if !covers {
        return Err(Error::Contract(format!(
            "summary spec does not partition a document of {len} tokens"
        )));
    }
    if len <= WINDOW {
        return Ok(TokenSeq::from_ids(doc.token_ids.clone()));
    }
    let mut ids = Vec::with_capacity(WINDOW);
    for (k, &(start, end)) in spec.split_boundaries.iter().enumerate() {
        let part = summarizer.summarize(&doc.token_ids[start..end], spec.per_split_budget);
        if part.len() > spec.per_split_budget {
            return Err(Error::Contract(format!(
                "summarizer returned {} tokens for split {} with budget {}",
                part.len(),
                k + 1,
                spec.per_split_budget
            )));
        }
        ids.extend(part);
    }
    Ok(TokenSeq::from_ids(ids))
}
