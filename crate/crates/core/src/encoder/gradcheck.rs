//! Central finite-difference check of analytic gradients.

use std::collections::BTreeSet;

use rand::seq::index;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Minimum number of coordinates probed; every coordinate when fewer exist.
    pub samples: usize,
    pub step: f64,
    pub tolerance: f64,
    /// Denominator floor: `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
    pub seed: u64,
    /// Optional tensor sizes; when given, every tensor gets at least
    /// `min_per_tensor` probes before the remainder is drawn uniformly.
    pub strata: Vec<usize>,
    pub min_per_tensor: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            samples: 200,
            step: 1e-4,
            tolerance: 1e-4,
            floor: 1e-6,
            seed: 0,
            strata: Vec::new(),
            min_per_tensor: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_error: f64,
    /// Coordinate with the largest relative error.
    pub worst: Option<usize>,
    pub passed: bool,
}

fn coordinates(len: usize, opts: &GradCheckOptions) -> Vec<usize> {
    if len <= opts.samples {
        return (0..len).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut picked = Vec::new();
    let mut offset = 0;
    for &size in &opts.strata {
        let take = opts.min_per_tensor.min(size);
        picked.extend(index::sample(&mut rng, size, take).into_iter().map(|i| offset + i));
        offset += size;
    }
    let mut seen: BTreeSet<usize> = picked.into_iter().collect();
    while seen.len() < opts.samples {
        seen.insert(rng.gen_range(0..len));
    }
    seen.into_iter().collect()
}

/// Compares `analytic` against central differences of `loss` around `params`.
///
/// `loss` is evaluated at perturbed copies of `params`; a non-finite value at
/// any probe is a numeric error.
pub fn grad_check<F>(
    mut loss: F,
    params: &[f64],
    analytic: &[f64],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(Error::shape(
            format!("{} gradient entries", params.len()),
            analytic.len(),
        ));
    }
    let base = loss(params)?;
    if !base.is_finite() {
        return Err(Error::Numeric(format!("loss is {base}")));
    }
    let mut probe = params.to_vec();
    let mut max_rel = 0.0f64;
    let mut worst = None;
    let coords = coordinates(params.len(), opts);
    for &i in &coords {
        let orig = probe[i];
        probe[i] = orig + opts.step;
        let up = loss(&probe)?;
        probe[i] = orig - opts.step;
        let down = loss(&probe)?;
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::Numeric(format!("loss is non-finite around coordinate {i}")));
        }
        let numeric = (up - down) / (2.0 * opts.step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
        if rel > max_rel || worst.is_none() {
            max_rel = max_rel.max(rel);
            worst = Some(i);
        }
    }
    Ok(GradCheckReport {
        checked: coords.len(),
        max_rel_error: max_rel,
        worst,
        passed: max_rel < opts.tolerance,
    })
}
