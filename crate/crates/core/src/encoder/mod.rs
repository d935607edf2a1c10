//! Contextual encoders: the interface the heads consume, subtoken pooling,
//! a small trainable reference encoder, and a finite-difference checker.

mod gradcheck;
mod pool;
mod reference;

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::params::ParamTensors;

pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use pool::{subtoken_pool, SubtokenAlignment};
pub use reference::{subtokenize, EncoderConfig, EncoderParams, ReferenceTrace};

/// Contextual vectors for one sentence: `global` is the whole-text slot at
/// position 0, `tokens` row `i - 1` belongs to token `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMatrix {
    pub global: Vec<f64>,
    pub tokens: Matrix,
}

impl EmbeddingMatrix {
    pub fn zeros(n: usize, dim: usize) -> Self {
        Self {
            global: vec![0.0; dim],
            tokens: Matrix::zeros(n, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.global.len()
    }

    pub fn len(&self) -> usize {
        self.tokens.rows
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.rows == 0
    }

    /// Vector of 1-based token `i`.
    #[inline]
    pub fn token(&self, i: usize) -> &[f64] {
        self.tokens.row(i - 1)
    }

    #[inline]
    pub fn token_mut(&mut self, i: usize) -> &mut [f64] {
        self.tokens.row_mut(i - 1)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.tokens.rows != n {
            return Err(Error::shape(format!("{n} token vectors"), self.tokens.rows));
        }
        if self.tokens.cols != self.global.len() {
            return Err(Error::shape(
                format!("token dim {}", self.global.len()),
                self.tokens.cols,
            ));
        }
        if !self.tokens.is_finite() || self.global.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite embedding".into()));
        }
        Ok(())
    }
}

/// Produces contextual embeddings for a sentence.
pub trait Encoder {
    fn dim(&self) -> usize;
    fn encode(&self, sentence: &Sentence) -> Result<EmbeddingMatrix>;
}

/// An encoder the bundler can fine-tune.
///
/// Gradients are accumulated into a value of the encoder's own type built by
/// [`zeros_like`](TrainableEncoder::zeros_like), so `tensors()` of the
/// gradient lines up with `tensors()` of the parameters.
pub trait TrainableEncoder: Encoder + ParamTensors + Clone {
    type Trace;

    fn forward(&self, sentence: &Sentence) -> Result<(EmbeddingMatrix, Self::Trace)>;

    /// Adds `∂loss/∂params` into `grads`, given `∂loss/∂output`.
    fn backward(&self, trace: &Self::Trace, d_out: &EmbeddingMatrix, grads: &mut Self);

    fn zeros_like(&self) -> Self;
}

/// Adapter exposing a fixed encoder as a trainable one with no parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Frozen<E>(pub E);

impl<E: Encoder> Encoder for Frozen<E> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn encode(&self, sentence: &Sentence) -> Result<EmbeddingMatrix> {
        self.0.encode(sentence)
    }
}

impl<E> ParamTensors for Frozen<E> {
    fn tensors(&self) -> Vec<&[f64]> {
        Vec::new()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        Vec::new()
    }
}

impl<E: Encoder + Clone> TrainableEncoder for Frozen<E> {
    type Trace = ();

    fn forward(&self, sentence: &Sentence) -> Result<(EmbeddingMatrix, ())> {
        Ok((self.0.encode(sentence)?, ()))
    }

    fn backward(&self, _: &(), _: &EmbeddingMatrix, _: &mut Self) {}

    fn zeros_like(&self) -> Self {
        self.clone()
    }
}
