//! Dense softmax classification head and categorical cross-entropy.

use std::fmt::Write as _;

use rand::Rng;

use crate::encoder::INIT_SCALE;
use crate::{Error, Result};

/// Added inside the logarithm so a zero probability gives a finite loss.
pub const LOG_CLIP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub k: usize,
    pub d_in: usize,
    /// Row-major `k x d_in`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Head {
    pub fn zeros(k: usize, d_in: usize) -> Self {
        Head {
            k,
            d_in,
            weight: vec![0.0; k * d_in],
            bias: vec![0.0; k],
        }
    }

    /// Uniform `±0.05` weights, zero bias.
    pub fn init(k: usize, d_in: usize, rng: &mut impl Rng) -> Self {
        let mut head = Self::zeros(k, d_in);
        head.weight
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-INIT_SCALE..INIT_SCALE));
        head
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in {
            return Err(Error::Dimension {
                expected: self.d_in,
                actual: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite input to classification head".into()));
        }
        Ok(self
            .weight
            .chunks(self.d_in)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Gradients of the head parameters and of its input, given the loss
    /// gradient with respect to the logits.
    pub fn backward(&self, x: &[f64], dlogits: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut dw = Vec::with_capacity(self.weight.len());
        for &g in dlogits {
            dw.extend(x.iter().map(|v| g * v));
        }
        let mut dx = vec![0.0; self.d_in];
        for (row, &g) in self.weight.chunks(self.d_in).zip(dlogits) {
            for (d, w) in dx.iter_mut().zip(row) {
                *d += g * w;
            }
        }
        (dw, dlogits.to_vec(), dx)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("head k={} d_in={}\n", self.k, self.d_in);
        let mut line = |vals: &[f64]| {
            let parts: Vec<String> = vals.iter().map(f64::to_string).collect();
            let _ = writeln!(out, "{}", parts.join(" "));
        };
        for row in self.weight.chunks(self.d_in) {
            line(row);
        }
        line(&self.bias);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let dims: Vec<usize> = header
            .strip_prefix("head ")
            .map(|rest| {
                rest.split_whitespace()
                    .filter_map(|kv| kv.split_once('=')?.1.parse().ok())
                    .collect()
            })
            .unwrap_or_default();
        let [k, d_in] = dims[..] else {
            return Err(Error::Data(format!("bad head checkpoint header {header:?}")));
        };
        let rows: Vec<Vec<f64>> = lines
            .map(|l| l.split_whitespace().map(str::parse).collect())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Data(format!("head checkpoint: {e}")))?;
        if rows.len() != k + 1 || rows[..k].iter().any(|r| r.len() != d_in) || rows[k].len() != k {
            return Err(Error::Data("head checkpoint has the wrong shape".into()));
        }
        Ok(Head {
            k,
            d_in,
            weight: rows[..k].concat(),
            bias: rows[k].clone(),
        })
    }
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn head_forward(x: &[f64], head: &Head) -> Result<Vec<f64>> {
    head.forward(x)
}

/// Returns the loss and its gradient with respect to the logits.
pub fn cross_entropy(probs: &[f64], y: usize) -> Result<(f64, Vec<f64>)> {
    if y >= probs.len() {
        return Err(Error::Data(format!(
            "label {y} out of range for {} classes",
            probs.len()
        )));
    }
    let loss = -(probs[y] + LOG_CLIP).ln();
    let mut grad = probs.to_vec();
    grad[y] -= 1.0;
    Ok((loss, grad))
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_and_biased() {
        let h = Head::zeros(3, 4);
        let p = h.forward(&[1.0, -2.0, 0.5, 3.0]).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let mut h = Head::zeros(3, 2);
        h.bias[0] = 10.0;
        assert_eq!(argmax(&h.forward(&[0.3, 0.1]).unwrap()), 0);
        assert!(h.forward(&[f64::NAN, 0.0]).is_err());
        assert!(h.forward(&[0.0]).is_err());
    }

    #[test]
    fn softmax_survives_large_logits() {
        let p = softmax(&[1000.0, 999.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn cross_entropy_examples() {
        let (loss, grad) = cross_entropy(&[0.0, 1.0, 0.0], 1).unwrap();
        assert!(loss.abs() < 1e-11);
        assert!(grad.iter().all(|g| g.abs() < 1e-15));
        let (loss, _) = cross_entropy(&[1.0 / 15.0; 15], 3).unwrap();
        assert!((loss - 15f64.ln()).abs() < 1e-9);
        assert!((loss - 2.708).abs() < 1e-3);
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let k = rng.gen_range(2..20);
            let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let y = rng.gen_range(0..k);
            let (_, grad) = cross_entropy(&softmax(&logits), y).unwrap();
            let eps = 1e-6;
            for j in 0..k {
                let mut up = logits.clone();
                up[j] += eps;
                let mut down = logits.clone();
                down[j] -= eps;
                let numeric = (cross_entropy(&softmax(&up), y).unwrap().0
                    - cross_entropy(&softmax(&down), y).unwrap().0)
                    / (2.0 * eps);
                let rel = (numeric - grad[j]).abs() / numeric.abs().max(grad[j].abs()).max(1e-8);
                assert!(rel <= 1e-4, "rel {rel}");
            }
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.3]), 1);
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
    }

    #[test]
    fn head_checkpoint_roundtrip() {
        let h = Head::init(4, 3, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(Head::from_text(&h.to_text()).unwrap(), h);
        assert!(Head::from_text("head k=2 d_in=1\n1\n").is_err());
    }
}
