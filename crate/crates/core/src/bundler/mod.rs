//! Joint training of the sequence and span heads over one shared encoder.
//!
//! A [`Model`] holds an encoder and up to two heads. The run mode decides
//! which heads are trained and which one emits entities at prediction time.

mod checkpoint;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Entity, LabelScheme, Sentence, TypeSet};
use crate::encoder::{EncoderConfig, EncoderParams, TrainableEncoder};
use crate::error::{Error, Result};
use crate::params::ParamTensors;
use crate::seqdec::{combine_labels, SeqHead, Tagging};
use crate::spandec::{heuristic_decode, Representation, SpanRepParams};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use train::{
    batch_gradient, bundle_gradient_equivalence, model_grad_check, prepare_batch, train, train_model, AdamW, Batch,
    BatchLoss, EpochLog, EquivalenceReport, LossWeights, Trained,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum RunMode {
    #[serde(rename = "seq")]
    Seq,
    #[serde(rename = "span")]
    Span,
    #[serde(rename = "bl-seq")]
    BlSeq,
    #[default]
    #[serde(rename = "bl-span")]
    BlSpan,
}

impl RunMode {
    pub const ALL: [RunMode; 4] = [RunMode::Seq, RunMode::Span, RunMode::BlSeq, RunMode::BlSpan];

    pub fn name(self) -> &'static str {
        match self {
            RunMode::Seq => "seq",
            RunMode::Span => "span",
            RunMode::BlSeq => "bl-seq",
            RunMode::BlSpan => "bl-span",
        }
    }

    pub fn is_bundled(self) -> bool {
        matches!(self, RunMode::BlSeq | RunMode::BlSpan)
    }

    /// Whether the sequence head is trained in this mode.
    pub fn trains_seq(self) -> bool {
        self != RunMode::Span
    }

    pub fn trains_span(self) -> bool {
        self != RunMode::Seq
    }

    /// Whether entities come from the sequence head.
    pub fn emits_seq(self) -> bool {
        matches!(self, RunMode::Seq | RunMode::BlSeq)
    }
}

impl fmt::Display for RunMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RunMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown run mode {s:?} (expected seq, span, bl-seq or bl-span)")))
    }
}

/// Training and architecture settings. Field names double as config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    pub mode: RunMode,
    /// Weight of the sequence loss in the bundled loss.
    pub alpha: f64,
    /// Longest span, in tokens, the span head considers.
    pub threshold: usize,
    /// Negative spans sampled per sentence.
    pub neg_cap: usize,
    pub tagging: Tagging,
    pub representation: Representation,
    pub len_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Reference encoder width.
    pub dim: usize,
    /// Reference encoder context window on each side.
    pub window: usize,
    pub init_scale: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            mode: RunMode::BlSpan,
            alpha: 0.1,
            threshold: 6,
            neg_cap: 100,
            tagging: Tagging::Softmax,
            representation: Representation::Hybrid,
            len_dim: 16,
            epochs: 20,
            batch_size: 16,
            lr: 1e-2,
            warmup: 0.1,
            weight_decay: 1e-2,
            seed: 1,
            dim: 64,
            window: 2,
            init_scale: 0.1,
        }
    }
}

impl Hyperparams {
    /// Learning rate intended for fine-tuning a large pretrained encoder.
    pub const PRETRAINED_LR: f64 = 5e-5;

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..=1.0).contains(&self.alpha) {
            return bad(format!("alpha must lie in [0, 1], got {}", self.alpha));
        }
        if self.threshold == 0 {
            return bad("threshold must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(0.0..=1.0).contains(&self.warmup) {
            return bad(format!("warmup must lie in [0, 1], got {}", self.warmup));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay must be non-negative, got {}", self.weight_decay));
        }
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if !(self.init_scale.is_finite() && self.init_scale >= 0.0) {
            return bad(format!("init_scale must be non-negative, got {}", self.init_scale));
        }
        Ok(())
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        EncoderConfig {
            dim: self.dim,
            window: self.window,
            init_scale: self.init_scale,
            ..EncoderConfig::default()
        }
    }
}

/// `α · seq + (1 − α) · span`.
pub fn bl_loss(seq: f64, span: f64, alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !seq.is_finite() || !span.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss: seq {seq}, span {span}")));
    }
    if alpha == 0.0 {
        return Ok(span);
    }
    if alpha == 1.0 {
        return Ok(seq);
    }
    Ok(alpha * seq + (1.0 - alpha) * span)
}

/// Encoder plus sequence and span heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model<E = EncoderParams> {
    pub hp: Hyperparams,
    pub scheme: LabelScheme,
    pub types: TypeSet,
    pub encoder: E,
    pub seq_head: Option<SeqHead>,
    pub span_head: Option<SpanRepParams>,
}

impl Model<EncoderParams> {
    /// Reference encoder over the training vocabulary, with the heads `hp.mode` needs.
    pub fn new(train: &Dataset, hp: &Hyperparams) -> Result<Self> {
        hp.validate()?;
        let mut rng = train::init_rng(hp.seed);
        let encoder = EncoderParams::new(
            hp.encoder_config(),
            train.sentences.iter().flat_map(|s| s.words()),
            &mut rng,
        );
        let mut model = Model::bare(encoder, &train.type_names, hp.clone());
        model.attach_heads(hp.mode.trains_seq(), hp.mode.trains_span(), &mut rng);
        Ok(model)
    }
}

impl<E: TrainableEncoder> Model<E> {
    /// A model with no heads attached.
    pub fn bare(encoder: E, type_names: &[String], hp: Hyperparams) -> Self {
        Self {
            scheme: LabelScheme::new(type_names),
            types: TypeSet::new(type_names),
            hp,
            encoder,
            seq_head: None,
            span_head: None,
        }
    }

    /// Adds freshly initialized heads where requested and missing.
    pub fn attach_heads<R: Rng + ?Sized>(&mut self, seq: bool, span: bool, rng: &mut R) {
        let d = self.encoder.dim();
        let scale = self.hp.init_scale;
        if seq && self.seq_head.is_none() {
            self.seq_head = Some(SeqHead::new(self.hp.tagging, self.scheme.len(), d, scale, rng));
        }
        if span && self.span_head.is_none() {
            self.span_head = Some(SpanRepParams::new(
                self.hp.representation,
                self.hp.threshold,
                self.hp.len_dim,
                d,
                self.types.len(),
                scale,
                rng,
            ));
        }
    }

    pub fn seq(&self) -> Result<&SeqHead> {
        self.seq_head
            .as_ref()
            .ok_or_else(|| Error::Config("model has no sequence head".into()))
    }

    pub fn span(&self) -> Result<&SpanRepParams> {
        self.span_head
            .as_ref()
            .ok_or_else(|| Error::Config("model has no span head".into()))
    }

    /// Checks the model carries every head `mode` trains.
    pub fn check_mode(&self, mode: RunMode) -> Result<()> {
        if mode.trains_seq() {
            self.seq()?;
        }
        if mode.trains_span() {
            self.span()?;
        }
        Ok(())
    }

    /// Gradient buffer shaped like this model.
    pub fn zeros_like(&self) -> Self {
        let mut g = Self {
            hp: self.hp.clone(),
            scheme: self.scheme.clone(),
            types: self.types.clone(),
            encoder: self.encoder.zeros_like(),
            seq_head: self.seq_head.clone(),
            span_head: self.span_head.clone(),
        };
        g.seq_head.fill_zero();
        g.span_head.fill_zero();
        g
    }

    /// Tensors updated when training in `mode`: the encoder's and those of the heads the mode uses.
    pub fn active_tensors_mut(&mut self, mode: RunMode) -> Vec<&mut [f64]> {
        let mut v = self.encoder.tensors_mut();
        if mode.trains_seq() {
            v.extend(self.seq_head.tensors_mut());
        }
        if mode.trains_span() {
            v.extend(self.span_head.tensors_mut());
        }
        v
    }

    pub fn active_tensors(&self, mode: RunMode) -> Vec<&[f64]> {
        let mut v = self.encoder.tensors();
        if mode.trains_seq() {
            v.extend(self.seq_head.tensors());
        }
        if mode.trains_span() {
            v.extend(self.span_head.tensors());
        }
        v
    }

    /// Entities for each sentence in the model's own run mode.
    pub fn predict(&self, sentences: &[Sentence]) -> Result<Vec<Vec<Entity>>> {
        predict(self, sentences, self.hp.mode)
    }
}

impl<E: ParamTensors> ParamTensors for Model<E> {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v = self.encoder.tensors();
        v.extend(self.seq_head.tensors());
        v.extend(self.span_head.tensors());
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.encoder.tensors_mut();
        v.extend(self.seq_head.tensors_mut());
        v.extend(self.span_head.tensors_mut());
        v
    }
}

/// Entities emitted by the head `mode` selects: the label combiner over the
/// decoded tag sequence, or heuristic decoding over every span under the threshold.
pub fn predict<E: TrainableEncoder>(model: &Model<E>, sentences: &[Sentence], mode: RunMode) -> Result<Vec<Vec<Entity>>> {
    if mode.emits_seq() {
        model.seq().map_err(|_| Error::Config(format!("{mode} prediction needs a sequence head")))?;
    } else {
        model.span().map_err(|_| Error::Config(format!("{mode} prediction needs a span head")))?;
    }
    let names = model.types.names();
    sentences
        .iter()
        .map(|s| {
            if s.is_empty() {
                return Ok(Vec::new());
            }
            let e = model.encoder.encode(s)?;
            let spans = if mode.emits_seq() {
                combine_labels(&model.seq()?.decode(&e)?, &model.scheme)
            } else {
                heuristic_decode(&model.span()?.predict(&e)?)
            };
            Ok(s.entities_from(&spans, names))
        })
        .collect()
}
