//! One-hot voting over ensemble members.

use crate::{Error, Result};

/// Row `i` is voter `i`'s one-hot choice, or all zeros when it abstains.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoteMatrix {
    nc: usize,
    rows: Vec<Option<usize>>,
}

impl VoteMatrix {
    pub fn new(nc: usize) -> Self {
        VoteMatrix { nc, rows: Vec::new() }
    }

    /// Builds a matrix from per-voter choices (`None` = abstain).
    pub fn from_votes(nc: usize, votes: impl IntoIterator<Item = Option<usize>>) -> Result<Self> {
        let mut m = Self::new(nc);
        for v in votes {
            match v {
                Some(t) => m.vote(t)?,
                None => m.abstain(),
            }
        }
        Ok(m)
    }

    pub fn vote(&mut self, class: usize) -> Result<()> {
        if class >= self.nc {
            return Err(Error::Data(format!(
                "vote for class {class} with only {} classes",
                self.nc
            )));
        }
        self.rows.push(Some(class));
        Ok(())
    }

    pub fn abstain(&mut self) {
        self.rows.push(None);
    }

    pub fn num_classes(&self) -> usize {
        self.nc
    }

    pub fn voters(&self) -> usize {
        self.rows.len()
    }

    /// `m[i][t]`.
    pub fn entry(&self, voter: usize, class: usize) -> u8 {
        u8::from(self.rows[voter] == Some(class))
    }

    pub fn row_sum(&self, voter: usize) -> u8 {
        u8::from(self.rows[voter].is_some())
    }

    pub fn choices(&self) -> &[Option<usize>] {
        &self.rows
    }
}

/// `argmax_t sum_i m[i][t]`, lowest class on ties.
pub fn majority_vote(votes: &VoteMatrix, nc: usize) -> Result<usize> {
    if nc != votes.nc {
        return Err(Error::Dimension {
            expected: votes.nc,
            actual: nc,
        });
    }
    let mut totals = vec![0usize; nc];
    for t in votes.rows.iter().flatten() {
        totals[*t] += 1;
    }
    if totals.iter().all(|&n| n == 0) {
        return Err(Error::Data("every voter abstained".into()));
    }
    let mut best = 0;
    for (t, &n) in totals.iter().enumerate() {
        if n > totals[best] {
            best = t;
        }
    }
    Ok(best)
}
