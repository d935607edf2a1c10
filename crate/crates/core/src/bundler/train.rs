use std::fmt::Write as _;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{bl_loss, predict, Hyperparams, Model, RunMode};
use crate::corpus::{bio_encode, Dataset, Sentence};
use crate::encoder::{grad_check, EmbeddingMatrix, EncoderParams, GradCheckOptions, GradCheckReport, TrainableEncoder};
use crate::error::{Error, Result};
use crate::evaluator::{score, ScoreReport};
use crate::params::ParamTensors;
use crate::spandec::{enumerate_spans, sample_negatives, Span};

pub(crate) fn init_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Shuffling and negative sampling draw from a stream separate from initialization.
fn train_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}

/// Sentences with their gold tag sequences and span training instances.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub sentences: Vec<&'a Sentence>,
    pub labels: Vec<Vec<usize>>,
    /// Gold spans with their type ids, then sampled negatives with the `None` id.
    pub spans: Vec<Vec<(Span, usize)>>,
}

impl Batch<'_> {
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.len()).sum()
    }

    pub fn num_span_instances(&self) -> usize {
        self.spans.iter().map(Vec::len).sum()
    }
}

/// Encodes gold labels and draws fresh negatives for each sentence.
///
/// Gold entities longer than the span threshold cannot be enumerated and
/// are left out of the span instances.
pub fn prepare_batch<'a, E, R>(model: &Model<E>, sentences: &[&'a Sentence], rng: &mut R) -> Result<Batch<'a>>
where
    E: TrainableEncoder,
    R: Rng + ?Sized,
{
    let mut labels = Vec::with_capacity(sentences.len());
    let mut spans = Vec::with_capacity(sentences.len());
    for s in sentences {
        labels.push(bio_encode(s, &model.scheme)?);
        let Some(head) = &model.span_head else {
            spans.push(Vec::new());
            continue;
        };
        let thr = head.threshold();
        let mut inst = Vec::new();
        let mut gold_spans = Vec::new();
        for e in &s.gold {
            let id = model
                .types
                .type_id(&e.etype)
                .ok_or_else(|| Error::Schema(format!("entity type {:?} not in the model's type set", e.etype)))?;
            if e.len() > thr {
                debug!("gold entity of length {} exceeds threshold {thr}", e.len());
                continue;
            }
            let span = Span::new(e.start, e.end);
            gold_spans.push(span);
            inst.push((span, id));
        }
        let none = model.types.none_id();
        let negatives = sample_negatives(&enumerate_spans(s.len(), thr), &gold_spans, model.hp.neg_cap, rng);
        inst.extend(negatives.into_iter().map(|sp| (sp, none)));
        spans.push(inst);
    }
    Ok(Batch {
        sentences: sentences.to_vec(),
        labels,
        spans,
    })
}

/// Per-head loss weights; `None` leaves the head out of the pass entirely.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub seq: Option<f64>,
    pub span: Option<f64>,
}

impl LossWeights {
    pub fn for_mode(mode: RunMode, alpha: f64) -> Self {
        match mode {
            RunMode::Seq => Self {
                seq: Some(1.0),
                span: None,
            },
            RunMode::Span => Self {
                seq: None,
                span: Some(1.0),
            },
            RunMode::BlSeq | RunMode::BlSpan => Self {
                seq: Some(alpha),
                span: Some(1.0 - alpha),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    /// Sequence loss per batch token.
    pub seq: f64,
    /// Span loss per span instance.
    pub span: f64,
    pub total: f64,
}

/// Batch loss and its gradient, added into `grads`.
///
/// The sequence loss is summed over sentences and divided by the batch's
/// token count; the span loss is divided by the number of span instances.
pub fn batch_gradient<E: TrainableEncoder>(
    model: &Model<E>,
    batch: &Batch<'_>,
    weights: LossWeights,
    grads: &mut Model<E>,
) -> Result<BatchLoss> {
    let inv = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    let inv_tok = inv(batch.num_tokens());
    let inv_span = inv(batch.num_span_instances());
    let seq_head = weights.seq.map(|_| model.seq()).transpose()?;
    let span_head = weights.span.map(|_| model.span()).transpose()?;
    let d = model.encoder.dim();
    let (mut seq_sum, mut span_sum) = (0.0, 0.0);
    for (i, s) in batch.sentences.iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        let (e, trace) = model.encoder.forward(s)?;
        let mut d_e = EmbeddingMatrix::zeros(s.len(), d);
        if let (Some(head), Some(w)) = (seq_head, weights.seq) {
            let g = grads
                .seq_head
                .as_mut()
                .ok_or_else(|| Error::Config("gradient buffer lacks a sequence head".into()))?;
            seq_sum += head.accumulate(&e, &batch.labels[i], w * inv_tok, g, &mut d_e)?;
        }
        if let (Some(head), Some(w)) = (span_head, weights.span) {
            let g = grads
                .span_head
                .as_mut()
                .ok_or_else(|| Error::Config("gradient buffer lacks a span head".into()))?;
            span_sum += head.accumulate(&e, &batch.spans[i], w * inv_span, g, &mut d_e)?;
        }
        model.encoder.backward(&trace, &d_e, &mut grads.encoder);
    }
    let seq = seq_sum * inv_tok;
    let span = span_sum * inv_span;
    let total = weights.seq.map_or(0.0, |w| w * seq) + weights.span.map_or(0.0, |w| w * span);
    Ok(BatchLoss { seq, span, total })
}

/// Adam with decoupled weight decay over a fixed set of tensors.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamW {
    pub fn new(num_params: usize, weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter and gradient tensor counts differ");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let mut k = 0;
        for (p, g) in params.into_iter().zip(grads) {
            assert_eq!(p.len(), g.len(), "parameter and gradient shapes differ");
            for (x, &gx) in p.iter_mut().zip(g) {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gx;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gx * gx;
                let update = (*m / c1) / ((*v / c2).sqrt() + self.eps);
                *x -= lr * (update + self.weight_decay * *x);
                k += 1;
            }
        }
        assert_eq!(k, self.m.len(), "optimizer state size mismatch");
    }
}

/// Linear warmup over the first `warmup` share of steps, then linear decay.
fn lr_at(step: usize, total: usize, hp: &Hyperparams) -> f64 {
    let warm = (hp.warmup * total as f64).ceil() as usize;
    if step < warm {
        hp.lr * (step + 1) as f64 / warm as f64
    } else {
        hp.lr * (total - step) as f64 / (total - warm) as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean batch losses over the epoch.
    pub loss: f64,
    pub seq_loss: f64,
    pub span_loss: f64,
    pub lr: f64,
    pub dev: ScoreReport,
    /// Whether this epoch's parameters became the kept model.
    pub kept: bool,
}

impl EpochLog {
    pub const TSV_HEADER: &'static str = "epoch\tloss\tseq_loss\tspan_loss\tlr\tdev_TP\tdev_FP\tdev_FN\tdev_P\tdev_R\tdev_F1\tkept";

    pub fn to_tsv(history: &[EpochLog]) -> String {
        let mut out = format!("{}\n", Self::TSV_HEADER);
        for h in history {
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                h.epoch,
                h.loss,
                h.seq_loss,
                h.span_loss,
                h.lr,
                h.dev.tsv_fields(),
                h.kept
            )
            .expect("write to string");
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct Trained<E = EncoderParams> {
    pub model: Model<E>,
    pub history: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
}

/// Trains a fresh reference-encoder model.
pub fn train(train: &Dataset, dev: &Dataset, hp: &Hyperparams) -> Result<Trained> {
    train_model(Model::new(train, hp)?, train, dev)
}

/// Trains `model` in `model.hp.mode` and returns the epoch with the highest
/// dev micro-F1 (the earliest on ties). Only the encoder and the heads the
/// mode uses are updated.
pub fn train_model<E: TrainableEncoder>(mut model: Model<E>, train: &Dataset, dev: &Dataset) -> Result<Trained<E>> {
    let hp = model.hp.clone();
    hp.validate()?;
    model.check_mode(hp.mode)?;
    train.validate()?;
    if hp.epochs == 0 {
        return Ok(Trained {
            model,
            history: Vec::new(),
            best_epoch: None,
        });
    }
    let mode = hp.mode;
    let weights = LossWeights::for_mode(mode, hp.alpha);
    let mut rng = train_rng(hp.seed);
    let mut order: Vec<usize> = (0..train.len()).filter(|&i| !train.sentences[i].is_empty()).collect();
    let per_epoch = order.len().div_ceil(hp.batch_size);
    let total = per_epoch * hp.epochs;
    let mut opt = AdamW::new(model.active_tensors(mode).iter().map(|t| t.len()).sum(), hp.weight_decay);
    let mut grads = model.zeros_like();
    let dev_gold = dev.gold();
    let mut step = 0;
    let mut best: Option<(f64, usize, Model<E>)> = None;
    let mut history = Vec::with_capacity(hp.epochs);
    for epoch in 1..=hp.epochs {
        order.shuffle(&mut rng);
        let (mut sum, mut seq_sum, mut span_sum) = (0.0, 0.0, 0.0);
        let mut lr = 0.0;
        for (b, chunk) in order.chunks(hp.batch_size).enumerate() {
            let sents: Vec<&Sentence> = chunk.iter().map(|&i| &train.sentences[i]).collect();
            let batch = prepare_batch(&model, &sents, &mut rng)?;
            grads.fill_zero();
            let loss = batch_gradient(&model, &batch, weights, &mut grads)?;
            if !loss.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss in epoch {epoch}, batch {b}: seq {}, span {}, total {}",
                    loss.seq, loss.span, loss.total
                )));
            }
            lr = lr_at(step, total, &hp);
            opt.step(model.active_tensors_mut(mode), grads.active_tensors(mode), lr);
            step += 1;
            sum += loss.total;
            seq_sum += loss.seq;
            span_sum += loss.span;
        }
        if !model.all_finite() {
            return Err(Error::Numeric(format!("parameters became non-finite in epoch {epoch}")));
        }
        let dev_report = score(&predict(&model, &dev.sentences, mode)?, &dev_gold)?;
        let kept = best.as_ref().is_none_or(|(f1, _, _)| dev_report.f1 > *f1);
        if kept {
            best = Some((dev_report.f1, epoch, model.clone()));
        }
        let n = per_epoch.max(1) as f64;
        info!(
            "epoch {epoch}: loss {:.5}, dev P {:.4} R {:.4} F1 {:.4}{}",
            sum / n,
            dev_report.precision,
            dev_report.recall,
            dev_report.f1,
            if kept { " (kept)" } else { "" }
        );
        // Mode-specific losses are reported only for the heads that train.
        history.push(EpochLog {
            epoch,
            loss: sum / n,
            seq_loss: if weights.seq.is_some() { seq_sum / n } else { 0.0 },
            span_loss: if weights.span.is_some() { span_sum / n } else { 0.0 },
            lr,
            dev: dev_report,
            kept,
        });
    }
    let (_, best_epoch, model) = best.expect("at least one epoch ran");
    Ok(Trained {
        model,
        history,
        best_epoch: Some(best_epoch),
    })
}

/// Result of comparing the bundled gradient with its two single-head parts.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub alpha: f64,
    /// Largest `|∇bl − (α ∇seq + (1 − α) ∇span)|` over every parameter.
    pub max_deviation: f64,
    /// The same restricted to encoder parameters.
    pub max_encoder_deviation: f64,
    /// Largest gradient entry on a head whose weight is zero (0 when both weights are positive).
    pub idle_head_max: f64,
    pub loss_deviation: f64,
    pub passed: bool,
}

/// Checks that the bundled gradient is the α-weighted sum of the sequence-only
/// and span-only gradients on one batch.
pub fn bundle_gradient_equivalence<E: TrainableEncoder>(
    model: &Model<E>,
    batch: &Batch<'_>,
    alpha: f64,
) -> Result<EquivalenceReport> {
    const TOLERANCE: f64 = 1e-10;
    model.check_mode(RunMode::BlSpan)?;
    let run = |w: LossWeights| -> Result<(BatchLoss, Model<E>)> {
        let mut g = model.zeros_like();
        let loss = batch_gradient(model, batch, w, &mut g)?;
        Ok((loss, g))
    };
    let (l_seq, g_seq) = run(LossWeights {
        seq: Some(1.0),
        span: None,
    })?;
    let (l_span, g_span) = run(LossWeights {
        seq: None,
        span: Some(1.0),
    })?;
    let (l_bl, g_bl) = run(LossWeights {
        seq: Some(alpha),
        span: Some(1.0 - alpha),
    })?;
    let n_enc = model.encoder.num_params();
    let (seq, span, bl) = (g_seq.flatten(), g_span.flatten(), g_bl.flatten());
    let mut max_dev = 0.0f64;
    let mut max_enc = 0.0f64;
    for k in 0..bl.len() {
        let dev = (bl[k] - (alpha * seq[k] + (1.0 - alpha) * span[k])).abs();
        max_dev = max_dev.max(dev);
        if k < n_enc {
            max_enc = max_enc.max(dev);
        }
    }
    let max_abs = |t: Vec<&[f64]>| t.iter().flat_map(|x| x.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let idle_head_max = if alpha == 0.0 {
        max_abs(g_bl.seq_head.tensors())
    } else if alpha == 1.0 {
        max_abs(g_bl.span_head.tensors())
    } else {
        0.0
    };
    let loss_deviation = (l_bl.total - bl_loss(l_seq.total, l_span.total, alpha)?).abs();
    Ok(EquivalenceReport {
        alpha,
        max_deviation: max_dev,
        max_encoder_deviation: max_enc,
        idle_head_max,
        loss_deviation,
        passed: max_dev < TOLERANCE && idle_head_max == 0.0 && loss_deviation < TOLERANCE,
    })
}

/// Finite-difference check of [`batch_gradient`] over every model tensor.
/// Empty `opts.strata` is filled with the model's tensor sizes.
pub fn model_grad_check<E: TrainableEncoder>(
    model: &Model<E>,
    batch: &Batch<'_>,
    weights: LossWeights,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mut g = model.zeros_like();
    batch_gradient(model, batch, weights, &mut g)?;
    let mut opts = opts.clone();
    if opts.strata.is_empty() {
        opts.strata = model.tensors().iter().map(|t| t.len()).collect();
    }
    let mut probe = model.clone();
    let mut scratch = model.zeros_like();
    grad_check(
        |flat| {
            probe.assign(flat);
            Ok(batch_gradient(&probe, batch, weights, &mut scratch)?.total)
        },
        &model.flatten(),
        &g.flatten(),
        &opts,
    )
}
