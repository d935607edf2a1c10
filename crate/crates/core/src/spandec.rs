//! Span head: enumeration under a length threshold, span representations,
//! classification, negative sampling, and overlap-free decoding.

use std::cmp::Ordering;

use log::warn;
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::TypedSpan;
use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::{argmax, axpy, softmax, Matrix};
use crate::params::ParamTensors;
use crate::seqdec::PROB_FLOOR;

/// Contiguous token segment, 1-based and inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(1 <= start && start <= end);
        Self { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }
}

/// All spans of length at most `min(threshold, n)`, ordered by `(start, end)`.
///
/// There are `ε(2n − ε + 1)/2` of them when `ε ≤ n`, else `n(n + 1)/2`.
pub fn enumerate_spans(n: usize, threshold: usize) -> Vec<Span> {
    let mut out = Vec::new();
    for start in 1..=n {
        for end in start..=(start + threshold.max(1) - 1).min(n) {
            out.push(Span { start, end });
        }
    }
    out
}

/// How a span is turned into a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    /// `[e_start ; e_end ; len]`
    Boundary,
    /// `[maxpool(e_start..e_end) ; e_0 ; len]`
    Pooling,
    /// `[e_start ; e_end ; maxpool ; e_0 ; len]`
    #[default]
    Hybrid,
}

impl Representation {
    pub fn dim(self, d: usize, len_dim: usize) -> usize {
        match self {
            Representation::Boundary | Representation::Pooling => 2 * d + len_dim,
            Representation::Hybrid => 4 * d + len_dim,
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boundary" => Ok(Representation::Boundary),
            "pooling" => Ok(Representation::Pooling),
            "hybrid" => Ok(Representation::Hybrid),
            other => Err(Error::Config(format!("unknown span representation {other:?}"))),
        }
    }
}

/// Length embeddings plus the span classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanRepParams {
    pub method: Representation,
    /// Row `k - 1` embeds span length `k`; one row per allowed length.
    pub len_emb: Matrix,
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl SpanRepParams {
    pub fn new<R: Rng + ?Sized>(
        method: Representation,
        threshold: usize,
        len_dim: usize,
        dim: usize,
        num_types: usize,
        scale: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            method,
            len_emb: Matrix::uniform(threshold, len_dim, scale, rng),
            w: Matrix::uniform(num_types, method.dim(dim, len_dim), scale, rng),
            b: Matrix::uniform(1, num_types, scale, rng).data,
        }
    }

    pub fn threshold(&self) -> usize {
        self.len_emb.rows
    }

    pub fn num_types(&self) -> usize {
        self.b.len()
    }

    /// Probabilities for every span of the sentence under the threshold.
    pub fn predict(&self, e: &EmbeddingMatrix) -> Result<Vec<SpanPrediction>> {
        enumerate_spans(e.len(), self.threshold())
            .into_iter()
            .map(|s| classify(&represent(s, e, self.method, self)?, self).map(|p| p.with_span(s)))
            .collect()
    }

    /// Summed cross-entropy over `spans` with gold class ids; adds
    /// `scale · ∂loss` into `grads` and `d_e`.
    pub fn accumulate(
        &self,
        e: &EmbeddingMatrix,
        spans: &[(Span, usize)],
        scale: f64,
        grads: &mut SpanRepParams,
        d_e: &mut EmbeddingMatrix,
    ) -> Result<f64> {
        let d = e.dim();
        let mut loss = 0.0;
        for &(span, gold) in spans {
            if gold >= self.num_types() {
                return Err(Error::Schema(format!("span class {gold} out of range")));
            }
            let trace = RepTrace::build(span, e, self.method, self)?;
            let probs = softmax(&self.w.affine(&trace.rep, &self.b));
            loss -= probs[gold].max(PROB_FLOOR).ln();
            let mut dz = probs;
            dz[gold] -= 1.0;
            dz.iter_mut().for_each(|v| *v *= scale);
            grads.w.add_outer(&dz, &trace.rep);
            axpy(1.0, &dz, &mut grads.b);
            let mut d_rep = vec![0.0; trace.rep.len()];
            self.w.add_transpose_mul(&dz, &mut d_rep);
            trace.backward(&d_rep, d, grads, d_e);
        }
        Ok(loss)
    }
}

impl ParamTensors for SpanRepParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![&self.len_emb.data, &self.w.data, &self.b]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.len_emb.data, &mut self.w.data, &mut self.b]
    }
}

/// Span vector with the bookkeeping needed to route gradients back.
struct RepTrace {
    span: Span,
    method: Representation,
    /// Token index that won the max pool, per component.
    pool_src: Vec<usize>,
    rep: Vec<f64>,
}

impl RepTrace {
    fn build(span: Span, e: &EmbeddingMatrix, method: Representation, p: &SpanRepParams) -> Result<Self> {
        if span.start < 1 || span.end < span.start || span.end > e.len() {
            return Err(Error::Input(format!(
                "span {}..{} outside sentence of length {}",
                span.start,
                span.end,
                e.len()
            )));
        }
        if span.len() > p.threshold() {
            return Err(Error::Threshold {
                length: span.len(),
                threshold: p.threshold(),
            });
        }
        let d = e.dim();
        let len_vec = p.len_emb.row(span.len() - 1);
        let mut rep = Vec::with_capacity(method.dim(d, len_vec.len()));
        let mut pool_src = Vec::new();
        if matches!(method, Representation::Boundary | Representation::Hybrid) {
            rep.extend_from_slice(e.token(span.start));
            rep.extend_from_slice(e.token(span.end));
        }
        if matches!(method, Representation::Pooling | Representation::Hybrid) {
            let mut pooled = e.token(span.start).to_vec();
            pool_src = vec![span.start; d];
            for i in span.start + 1..=span.end {
                for (c, &x) in e.token(i).iter().enumerate() {
                    if x > pooled[c] {
                        pooled[c] = x;
                        pool_src[c] = i;
                    }
                }
            }
            rep.extend_from_slice(&pooled);
            rep.extend_from_slice(&e.global);
        }
        rep.extend_from_slice(len_vec);
        Ok(Self {
            span,
            method,
            pool_src,
            rep,
        })
    }

    fn backward(&self, d_rep: &[f64], d: usize, grads: &mut SpanRepParams, d_e: &mut EmbeddingMatrix) {
        let mut off = 0;
        if matches!(self.method, Representation::Boundary | Representation::Hybrid) {
            axpy(1.0, &d_rep[off..off + d], d_e.token_mut(self.span.start));
            axpy(1.0, &d_rep[off + d..off + 2 * d], d_e.token_mut(self.span.end));
            off += 2 * d;
        }
        if matches!(self.method, Representation::Pooling | Representation::Hybrid) {
            for (c, &src) in self.pool_src.iter().enumerate() {
                d_e.token_mut(src)[c] += d_rep[off + c];
            }
            axpy(1.0, &d_rep[off + d..off + 2 * d], &mut d_e.global);
            off += 2 * d;
        }
        axpy(1.0, &d_rep[off..], grads.len_emb.row_mut(self.span.len() - 1));
    }
}

/// Span vector under `method`. Single-token spans use the token as both
/// head and tail.
pub fn represent(span: Span, e: &EmbeddingMatrix, method: Representation, p: &SpanRepParams) -> Result<Vec<f64>> {
    RepTrace::build(span, e, method, p).map(|t| t.rep)
}

/// Class distribution for one span; the last class is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpanPrediction {
    pub span: Span,
    pub probs: Vec<f64>,
    pub type_id: usize,
    pub prob: f64,
}

impl SpanPrediction {
    pub fn from_probs(span: Span, probs: Vec<f64>) -> Self {
        let type_id = argmax(&probs);
        Self {
            span,
            prob: probs[type_id],
            type_id,
            probs,
        }
    }

    fn with_span(mut self, span: Span) -> Self {
        self.span = span;
        self
    }

    pub fn none_id(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn is_entity(&self) -> bool {
        self.type_id != self.none_id()
    }
}

/// `softmax(W · rep + b)` with a lowest-index argmax. The returned span is a
/// placeholder `1..1`; [`SpanRepParams::predict`] fills in the real one.
pub fn classify(rep: &[f64], p: &SpanRepParams) -> Result<SpanPrediction> {
    if rep.len() != p.w.cols {
        return Err(Error::shape(format!("span vector of dim {}", p.w.cols), rep.len()));
    }
    Ok(SpanPrediction::from_probs(
        Span::new(1, 1),
        softmax(&p.w.affine(rep, &p.b)),
    ))
}

/// Mean cross-entropy of predictions against gold class ids.
pub fn span_loss(predictions: &[SpanPrediction], gold: &[usize]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::shape(format!("{} gold classes", predictions.len()), gold.len()));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, &g) in predictions.iter().zip(gold) {
        let pg = *p
            .probs
            .get(g)
            .ok_or_else(|| Error::Schema(format!("span class {g} out of range")))?;
        if pg < PROB_FLOOR {
            warn!("span probability {pg:e} at gold class clamped to {PROB_FLOOR:e}");
        }
        total -= pg.max(PROB_FLOOR).ln();
    }
    Ok(total / gold.len() as f64)
}

/// Draws `min(|negatives|, cap)` non-gold spans uniformly without replacement.
/// The result keeps the enumeration order of `all_spans`.
pub fn sample_negatives<R: Rng + ?Sized>(all_spans: &[Span], gold: &[Span], cap: usize, rng: &mut R) -> Vec<Span> {
    let pool: Vec<Span> = all_spans.iter().filter(|s| !gold.contains(s)).copied().collect();
    let amount = pool.len().min(cap);
    let mut picked = index::sample(rng, pool.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pool[i]).collect()
}

/// Drops `None` predictions, then keeps spans greedily by descending
/// probability (ties: earlier start, then shorter) while skipping any span
/// that overlaps one already kept. Output is ordered by start.
pub fn heuristic_decode(predictions: &[SpanPrediction]) -> Vec<TypedSpan> {
    let mut candidates: Vec<&SpanPrediction> = predictions.iter().filter(|p| p.is_entity()).collect();
    candidates.sort_by(|a, b| {
        b.prob
            .partial_cmp(&a.prob)
            .unwrap_or(Ordering::Equal)
            .then(a.span.start.cmp(&b.span.start))
            .then(a.span.len().cmp(&b.span.len()))
    });
    let mut kept: Vec<&SpanPrediction> = Vec::new();
    for c in candidates {
        if kept.iter().all(|k| !k.span.overlaps(&c.span)) {
            kept.push(c);
        }
    }
    let mut out: Vec<TypedSpan> = kept
        .into_iter()
        .map(|p| TypedSpan {
            start: p.span.start,
            end: p.span.end,
            type_id: p.type_id,
        })
        .collect();
    out.sort();
    out
}
