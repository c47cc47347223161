//! Window encoders producing one fixed-size vector per token window.
//!
//! [`EncoderParams`] is a trainable embedding table pooled by a masked mean;
//! its output plays the role of a transformer's classification vector.
//! [`hash_encode`] is a parameter-free feature-hashing encoder for tests.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chunker::Chunk;
use crate::tokenizer::{TokenSeq, PAD};
use crate::{Error, Result};

pub const DEFAULT_DIM: usize = 64;
pub const INIT_SCALE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub vocab_size: usize,
    pub dim: usize,
    pub window: usize,
    pub seed: u64,
    /// Row-major `vocab_size x dim` embedding table.
    pub table: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkVector {
    pub values: Vec<f64>,
    pub grad: Option<Vec<f64>>,
}

impl ChunkVector {
    pub fn zeros(dim: usize) -> Self {
        ChunkVector {
            values: vec![0.0; dim],
            grad: None,
        }
    }
}

/// Gradient of a loss with respect to the rows of an embedding table that a
/// single window touched. Rows are sorted and unique.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseGrad {
    pub dim: usize,
    pub rows: Vec<(u32, Vec<f64>)>,
}

impl SparseGrad {
    pub fn add_into(&self, dense: &mut [f64]) {
        for (row, g) in &self.rows {
            let base = *row as usize * self.dim;
            for (d, v) in dense[base..base + self.dim].iter_mut().zip(g) {
                *d += v;
            }
        }
    }

    pub fn row(&self, id: u32) -> Option<&[f64]> {
        self.rows
            .binary_search_by_key(&id, |(r, _)| *r)
            .ok()
            .map(|i| self.rows[i].1.as_slice())
    }
}

impl EncoderParams {
    /// Uniform `±0.05` initialization; the PAD row is zero.
    pub fn new(vocab_size: usize, dim: usize, window: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut table: Vec<f64> = (0..vocab_size * dim)
            .map(|_| rng.gen_range(-INIT_SCALE..INIT_SCALE))
            .collect();
        table[PAD as usize * dim..(PAD as usize + 1) * dim].fill(0.0);
        EncoderParams {
            vocab_size,
            dim,
            window,
            seed,
            table,
        }
    }

    pub fn row(&self, id: u32) -> &[f64] {
        let base = id as usize * self.dim;
        &self.table[base..base + self.dim]
    }

    fn check_seq(&self, seq: &TokenSeq) -> Result<()> {
        if seq.len() > self.window {
            return Err(Error::Data(format!(
                "sequence of {} tokens exceeds encoder window {}",
                seq.len(),
                self.window
            )));
        }
        if let Some(&bad) = seq.real_ids().iter().find(|&&id| id as usize >= self.vocab_size) {
            return Err(Error::Data(format!(
                "token id {bad} out of range for vocabulary of {}",
                self.vocab_size
            )));
        }
        Ok(())
    }

    /// Masked mean of embedding rows; an all-pad sequence encodes to zero.
    pub fn encode(&self, seq: &TokenSeq) -> Result<Vec<f64>> {
        self.check_seq(seq)?;
        let real = seq.real_ids();
        let mut out = vec![0.0; self.dim];
        if real.is_empty() {
            return Ok(out);
        }
        for &id in real {
            for (o, v) in out.iter_mut().zip(self.row(id)) {
                *o += v;
            }
        }
        let n = real.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(out)
    }

    /// Spreads `upstream / n` onto every contributing row (weighted by
    /// multiplicity). The PAD row never receives gradient.
    pub fn backward(&self, seq: &TokenSeq, upstream: &[f64]) -> Result<SparseGrad> {
        if upstream.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                actual: upstream.len(),
            });
        }
        self.check_seq(seq)?;
        let mut ids: Vec<u32> = seq.real_ids().to_vec();
        let n = ids.len() as f64;
        ids.sort_unstable();
        let mut rows: Vec<(u32, Vec<f64>)> = Vec::new();
        for run in ids.chunk_by(|a, b| a == b) {
            if run[0] == PAD {
                continue;
            }
            let scale = run.len() as f64 / n;
            rows.push((run[0], upstream.iter().map(|g| g * scale).collect()));
        }
        Ok(SparseGrad {
            dim: self.dim,
            rows,
        })
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "encoder vocab_size={} dim={} window={} seed={}\n",
            self.vocab_size, self.dim, self.window, self.seed
        );
        for row in self.table.chunks(self.dim) {
            let line: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Data("empty encoder checkpoint".into()))?;
        let field = |key: &str| -> Result<u64> {
            header
                .split_whitespace()
                .find_map(|kv| kv.strip_prefix(key)?.strip_prefix('='))
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Data(format!("encoder checkpoint header lacks {key}")))
        };
        if !header.starts_with("encoder ") {
            return Err(Error::Data("not an encoder checkpoint".into()));
        }
        let vocab_size = field("vocab_size")? as usize;
        let dim = field("dim")? as usize;
        let window = field("window")? as usize;
        let seed = field("seed")?;
        let mut table = Vec::with_capacity(vocab_size * dim);
        for (i, line) in lines.enumerate() {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Data(format!("encoder checkpoint row {i}: {e}")))?;
            if row.len() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    actual: row.len(),
                });
            }
            table.extend(row);
        }
        if table.len() != vocab_size * dim {
            return Err(Error::Data(format!(
                "encoder checkpoint has {} rows, header says {vocab_size}",
                table.len() / dim.max(1)
            )));
        }
        Ok(EncoderParams {
            vocab_size,
            dim,
            window,
            seed,
            table,
        })
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

pub fn encode_chunk(chunk: &Chunk, params: &EncoderParams) -> Result<ChunkVector> {
    Ok(ChunkVector {
        values: params.encode(&chunk.seq)?,
        grad: None,
    })
}

pub fn encode_chunk_backward(
    chunk: &Chunk,
    params: &EncoderParams,
    upstream_grad: &[f64],
) -> Result<SparseGrad> {
    params.backward(&chunk.seq, upstream_grad)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Signed feature hashing of the chunk's real token ids.
pub fn hash_encode(chunk: &Chunk, dim: usize, seed: u64) -> ChunkVector {
    assert!(dim >= 1, "dim must be at least 1");
    let mut values = vec![0.0; dim];
    for &id in chunk.seq.real_ids() {
        let h = splitmix64(seed ^ splitmix64(u64::from(id)));
        let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
        values[(h % dim as u64) as usize] += sign;
    }
    ChunkVector { values, grad: None }
}
