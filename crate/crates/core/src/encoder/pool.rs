use std::ops::Range;

use crate::error::{Error, Result};

/// For each token, the contiguous range of its subtokens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubtokenAlignment {
    ranges: Vec<Range<usize>>,
}

impl SubtokenAlignment {
    /// Checks that `ranges` are non-empty, ordered, and tile `0..total`.
    pub fn new(ranges: Vec<Range<usize>>, total: usize) -> Result<Self> {
        let mut next = 0;
        for (i, r) in ranges.iter().enumerate() {
            if r.is_empty() {
                return Err(Error::Alignment(format!("token {} has no subtokens", i + 1)));
            }
            if r.start != next {
                return Err(Error::Alignment(format!(
                    "token {} starts at subtoken {}, expected {next}",
                    i + 1,
                    r.start
                )));
            }
            next = r.end;
        }
        if next != total {
            return Err(Error::Alignment(format!(
                "alignment covers {next} of {total} subtokens"
            )));
        }
        Ok(Self { ranges })
    }

    /// Alignment from per-token subtoken counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let mut ranges = Vec::with_capacity(counts.len());
        let mut start = 0;
        for &c in counts {
            ranges.push(start..start + c);
            start += c;
        }
        Self::new(ranges, start)
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn num_tokens(&self) -> usize {
        self.ranges.len()
    }
}

/// Componentwise max over each token's subtoken vectors.
pub fn subtoken_pool(subtokens: &[Vec<f64>], alignment: &SubtokenAlignment) -> Result<Vec<Vec<f64>>> {
    let total = alignment.ranges.last().map_or(0, |r| r.end);
    if total != subtokens.len() {
        return Err(Error::Alignment(format!(
            "alignment covers {total} subtokens, got {}",
            subtokens.len()
        )));
    }
    let dim = subtokens.first().map_or(0, Vec::len);
    if subtokens.iter().any(|v| v.len() != dim) {
        return Err(Error::shape(format!("subtoken vectors of dim {dim}"), "ragged vectors"));
    }
    Ok(alignment
        .ranges
        .iter()
        .map(|r| {
            let mut pooled = subtokens[r.start].clone();
            for v in &subtokens[r.start + 1..r.end] {
                for (p, &x) in pooled.iter_mut().zip(v) {
                    if x > *p {
                        *p = x;
                    }
                }
            }
            pooled
        })
        .collect())
}
