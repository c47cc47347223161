//! Synthetic labeled corpora with a class-indicative token planted at a
//! controlled token offset.
//!
//! Every document is a sequence of space-separated filler words (`w17`), so the
//! word at position `p` is exactly token `p` after tokenization. The signal
//! word `sBBfFF` (broad class `BB`, fine class `FF`) is planted
//! `signal_copies` times inside one of `signal_ranges`, picked uniformly per
//! document.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::RawRecord;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub classes: usize,
    pub fine_per_class: usize,
    pub docs: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Half-open token ranges; one is chosen per document.
    pub signal_ranges: Vec<(usize, usize)>,
    pub signal_copies: usize,
    pub filler_vocab: usize,
    /// Probability that a document gets trailing footnote lines.
    pub footnote_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            classes: 15,
            fine_per_class: 1,
            docs: 1000,
            min_len: 1536,
            max_len: 3072,
            signal_ranges: vec![(0, 512)],
            signal_copies: 8,
            filler_vocab: 1000,
            footnote_rate: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(format!("synthetic corpus: {msg}")));
        if self.classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.docs < self.classes {
            return fail(format!(
                "need at least as many documents ({}) as classes ({})",
                self.docs, self.classes
            ));
        }
        if self.fine_per_class == 0 || self.filler_vocab == 0 {
            return fail("fine_per_class and filler_vocab must be positive".into());
        }
        if self.min_len > self.max_len {
            return fail(format!("min_len {} exceeds max_len {}", self.min_len, self.max_len));
        }
        if self.signal_ranges.is_empty() {
            return fail("at least one signal range is required".into());
        }
        for &(lo, hi) in &self.signal_ranges {
            if lo >= hi || hi > self.min_len {
                return fail(format!(
                    "signal range [{lo}, {hi}) must be non-empty and end within min_len {}",
                    self.min_len
                ));
            }
            if self.signal_copies == 0 || self.signal_copies > hi - lo {
                return fail(format!(
                    "signal_copies {} does not fit range [{lo}, {hi})",
                    self.signal_copies
                ));
            }
        }
        if !(0.0..=1.0).contains(&self.footnote_rate) {
            return fail(format!("footnote_rate {} outside [0, 1]", self.footnote_rate));
        }
        Ok(())
    }

    pub fn broad_label(class: usize) -> String {
        format!("class_{class:02}")
    }

    pub fn fine_label(class: usize, fine: usize) -> String {
        format!("class_{class:02}.{fine:02}")
    }

    pub fn signal_word(class: usize, fine: usize) -> String {
        format!("s{class:02}f{fine:02}")
    }

    /// `(fine_label, broad_label)` pairs covering every label the spec can emit.
    pub fn ontology(&self) -> Vec<(String, String)> {
        (0..self.classes)
            .flat_map(|c| {
                (0..self.fine_per_class).map(move |f| (Self::fine_label(c, f), Self::broad_label(c)))
            })
            .collect()
    }
}

/// Documents cycle through the broad classes in order, so every class occurs.
pub fn generate(spec: &SynthSpec) -> Result<Vec<RawRecord>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::with_capacity(spec.docs);
    for j in 0..spec.docs {
        let class = j % spec.classes;
        let fine = rng.gen_range(0..spec.fine_per_class);
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let mut words: Vec<String> = (0..len)
            .map(|_| format!("w{}", rng.gen_range(0..spec.filler_vocab)))
            .collect();
        let (lo, hi) = spec.signal_ranges[rng.gen_range(0..spec.signal_ranges.len())];
        let signal = SynthSpec::signal_word(class, fine);
        for offset in sample(&mut rng, hi - lo, spec.signal_copies) {
            words[lo + offset] = signal.clone();
        }
        let mut text = words.join(" ");
        if rng.gen_bool(spec.footnote_rate) {
            let notes = rng.gen_range(1..=3);
            for n in 1..=notes {
                let filler: Vec<String> = (0..rng.gen_range(5..40))
                    .map(|_| format!("w{}", rng.gen_range(0..spec.filler_vocab)))
                    .collect();
                text.push_str(&format!("\n[Footnote {n}] {}", filler.join(" ")));
            }
        }
        records.push(RawRecord {
            id: format!("doc{j:06}"),
            text,
            broad_label: SynthSpec::broad_label(class),
            fine_label: SynthSpec::fine_label(class, fine),
        });
    }
    Ok(records)
}
