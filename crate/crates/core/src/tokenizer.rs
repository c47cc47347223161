//! Deterministic word/punctuation tokenizer and vocabulary.
//!
//! Ids `0..3` are reserved for the special tokens. Everything else is assigned
//! by descending frequency, ties broken lexicographically, so a vocabulary is
//! a pure function of the multiset of tokens it was built from.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

pub const PAD: u32 = 0;
pub const UNK: u32 = 1;
pub const CLS: u32 = 2;

const SPECIALS: [&str; 3] = ["[PAD]", "[UNK]", "[CLS]"];
const NUM_SPECIALS: usize = SPECIALS.len();

/// Splits text into token strings.
pub trait Tokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<String>;
}

/// Lowercases, splits on whitespace, and emits every non-alphanumeric,
/// non-whitespace character as its own token.
#[derive(Debug, Default, Clone, Copy)]
pub struct BasicTokenizer;

impl Tokenizer for BasicTokenizer {
    fn tokenize(&self, text: &str) -> Vec<String> {
        tokenize(text)
    }
}

pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for c in text.chars() {
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() {
                out.push(c.to_lowercase().collect());
            }
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_to_id: HashMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocab {
    /// Keeps the `max_size - 3` most frequent tokens seen at least `min_freq`
    /// times.
    pub fn build<S: AsRef<str>>(texts: &[S], max_size: usize, min_freq: usize) -> Result<Self> {
        let streams: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t.as_ref())).collect();
        Self::from_token_streams(&streams, max_size, min_freq)
    }

    pub fn from_token_streams<S: AsRef<str>>(
        streams: &[Vec<S>],
        max_size: usize,
        min_freq: usize,
    ) -> Result<Self> {
        if max_size < NUM_SPECIALS + 1 {
            return Err(Error::Config(format!(
                "vocabulary max_size must be at least {}, got {max_size}",
                NUM_SPECIALS + 1
            )));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for stream in streams {
            for tok in stream {
                *counts.entry(tok.as_ref()).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(tok, n)| n >= min_freq.max(1) && !SPECIALS.contains(&tok))
            .collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(max_size - NUM_SPECIALS);
        Ok(Self::from_tokens(ranked.into_iter().map(|(t, _)| t.to_owned())))
    }

    fn from_tokens(tokens: impl IntoIterator<Item = String>) -> Self {
        let id_to_token: Vec<String> = SPECIALS
            .iter()
            .map(|s| (*s).to_owned())
            .chain(tokens)
            .collect();
        let token_to_id = id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocab {
            token_to_id,
            id_to_token,
        }
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Id of `token`, or [`UNK`] when absent.
    pub fn lookup(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.token_to_id.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    /// One token per line; line `n` (0-based) holds id `n + 3`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for tok in &self.id_to_token[NUM_SPECIALS..] {
            let _ = writeln!(out, "{tok}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(Error::Data(format!("vocab line {}: invalid token {line:?}", i + 1)));
            }
            if SPECIALS.contains(&line) || !seen.insert(line) {
                return Err(Error::Data(format!("vocab line {}: duplicate token {line:?}", i + 1)));
            }
            tokens.push(line.to_owned());
        }
        Ok(Self::from_tokens(tokens))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_text(&text)
    }
}

/// Token ids with a prefix attention mask (`true` = real token).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub mask: Vec<bool>,
}

impl TokenSeq {
    /// A fully unmasked sequence.
    pub fn from_ids(ids: Vec<u32>) -> Self {
        let mask = vec![true; ids.len()];
        TokenSeq { ids, mask }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Number of mask-1 positions.
    pub fn real_len(&self) -> usize {
        self.mask.iter().take_while(|&&m| m).count()
    }

    pub fn real_ids(&self) -> &[u32] {
        &self.ids[..self.real_len()]
    }

    /// `true` when the mask is a run of 1s followed by a run of 0s.
    pub fn mask_is_prefix(&self) -> bool {
        self.mask.len() == self.ids.len() && self.mask[self.real_len()..].iter().all(|&m| !m)
    }
}

pub fn encode<S: AsRef<str>>(tokens: &[S], vocab: &Vocab, prepend_cls: bool) -> TokenSeq {
    let ids = prepend_cls
        .then_some(CLS)
        .into_iter()
        .chain(tokens.iter().map(|t| vocab.lookup(t.as_ref())))
        .collect();
    TokenSeq::from_ids(ids)
}

pub fn decode(ids: &[u32], vocab: &Vocab) -> Vec<String> {
    ids.iter()
        .map(|&id| vocab.token(id).unwrap_or(SPECIALS[UNK as usize]).to_owned())
        .collect()
}

/// Truncates to the prefix or pads with [`PAD`] (mask 0) to exactly `target_len`.
pub fn pad_or_truncate(seq: &TokenSeq, target_len: usize) -> TokenSeq {
    assert!(target_len >= 1, "target_len must be at least 1");
    let mut ids = seq.ids.clone();
    let mut mask = seq.mask.clone();
    ids.resize(target_len, PAD);
    mask.resize(target_len, false);
    TokenSeq { ids, mask }
}
