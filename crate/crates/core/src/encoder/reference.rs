//! Reference encoder: character-chunk subtokens, max pooling into tokens,
//! one windowed context-mixing layer, and an affine global vector.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{EmbeddingMatrix, Encoder, TrainableEncoder};
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::params::ParamTensors;

const UNK_ROW: usize = 0;
const GLOBAL_ROW: usize = 1;
const UNK: &str = "<unk>";
const GLOBAL: &str = "<global>";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Embedding dimension `d`.
    pub dim: usize,
    /// Neighbors on each side; each side is averaged separately.
    pub window: usize,
    /// Maximum characters per subtoken.
    pub chunk: usize,
    /// Initial parameters are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            window: 2,
            chunk: 6,
            init_scale: 0.1,
        }
    }
}

/// Splits a word into consecutive chunks of at most `chunk` characters.
pub fn subtokenize(word: &str, chunk: usize) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut count = 0;
    for (i, _) in word.char_indices() {
        if count == chunk {
            out.push(&word[start..i]);
            start = i;
            count = 0;
        }
        count += 1;
    }
    if start < word.len() {
        out.push(&word[start..]);
    }
    out
}

/// Parameters of the reference encoder.
///
/// Token vector `i` is `tanh(W_mix · [mean of left window ; u_i ; mean of right window] + b_mix)`
/// where `u_i` max-pools the embeddings of the token's subtokens. The global
/// vector is `W_glob · mean(token vectors) + b_glob + embed[<global>]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub config: EncoderConfig,
    pub vocab: BTreeMap<String, usize>,
    pub embed: Matrix,
    pub mix_w: Matrix,
    pub mix_b: Vec<f64>,
    pub global_w: Matrix,
    pub global_b: Vec<f64>,
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ReferenceTrace {
    /// Per token and component, the embedding row that won the max pool.
    pool_src: Vec<Vec<usize>>,
    mix_in: Matrix,
    hidden: Matrix,
    mean: Vec<f64>,
}

impl EncoderParams {
    /// Builds a vocabulary from `words` and initializes every parameter.
    pub fn new<'a, R, I>(config: EncoderConfig, words: I, rng: &mut R) -> Self
    where
        R: Rng + ?Sized,
        I: IntoIterator<Item = &'a str>,
    {
        let mut vocab = BTreeMap::new();
        vocab.insert(UNK.to_string(), UNK_ROW);
        vocab.insert(GLOBAL.to_string(), GLOBAL_ROW);
        for w in words {
            for piece in subtokenize(w, config.chunk) {
                let next = vocab.len();
                vocab.entry(piece.to_string()).or_insert(next);
            }
        }
        let d = config.dim;
        let s = config.init_scale;
        Self {
            config,
            embed: Matrix::uniform(vocab.len(), d, s, rng),
            mix_w: Matrix::uniform(d, 3 * d, s, rng),
            mix_b: Matrix::uniform(1, d, s, rng).data,
            global_w: Matrix::uniform(d, d, s, rng),
            global_b: Matrix::uniform(1, d, s, rng).data,
            vocab,
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    /// Subtoken row ids for a word, unknown chunks mapping to `<unk>`.
    pub fn subtoken_ids(&self, word: &str) -> Vec<usize> {
        subtokenize(word, self.config.chunk)
            .into_iter()
            .map(|p| self.vocab.get(p).copied().unwrap_or(UNK_ROW))
            .collect()
    }

    /// Left and right context windows of 0-based token `i`, paired with
    /// their column offset in the mixing input.
    fn context(&self, i: usize, n: usize) -> [(std::ops::Range<usize>, usize); 2] {
        let w = self.config.window;
        let d = self.config.dim;
        [(i.saturating_sub(w)..i, 0), (i + 1..(i + w + 1).min(n), 2 * d)]
    }
}

impl ParamTensors for EncoderParams {
    fn tensors(&self) -> Vec<&[f64]> {
        vec![
            &self.embed.data,
            &self.mix_w.data,
            &self.mix_b,
            &self.global_w.data,
            &self.global_b,
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.embed.data,
            &mut self.mix_w.data,
            &mut self.mix_b,
            &mut self.global_w.data,
            &mut self.global_b,
        ]
    }
}

impl Encoder for EncoderParams {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn encode(&self, sentence: &Sentence) -> Result<EmbeddingMatrix> {
        self.forward(sentence).map(|(e, _)| e)
    }
}

impl TrainableEncoder for EncoderParams {
    type Trace = ReferenceTrace;

    fn forward(&self, sentence: &Sentence) -> Result<(EmbeddingMatrix, ReferenceTrace)> {
        let n = sentence.len();
        if n == 0 {
            return Err(Error::Input("cannot encode an empty sentence".into()));
        }
        let d = self.config.dim;

        let mut pooled = Matrix::zeros(n, d);
        let mut pool_src = Vec::with_capacity(n);
        for (i, word) in sentence.words().enumerate() {
            let ids = self.subtoken_ids(word);
            let mut src = vec![ids[0]; d];
            let row = pooled.row_mut(i);
            row.copy_from_slice(self.embed.row(ids[0]));
            for &id in &ids[1..] {
                for (c, &x) in self.embed.row(id).iter().enumerate() {
                    if x > row[c] {
                        row[c] = x;
                        src[c] = id;
                    }
                }
            }
            pool_src.push(src);
        }

        let mut mix_in = Matrix::zeros(n, 3 * d);
        let mut hidden = Matrix::zeros(n, d);
        for i in 0..n {
            let row = mix_in.row_mut(i);
            for (range, off) in self.context(i, n) {
                if range.is_empty() {
                    continue;
                }
                let inv = 1.0 / range.len() as f64;
                let slot = &mut row[off..off + d];
                for j in range {
                    for (r, &x) in slot.iter_mut().zip(pooled.row(j)) {
                        *r += x * inv;
                    }
                }
            }
            row[d..2 * d].copy_from_slice(pooled.row(i));
            let z = self.mix_w.affine(mix_in.row(i), &self.mix_b);
            for (h, zc) in hidden.row_mut(i).iter_mut().zip(z) {
                *h = zc.tanh();
            }
        }

        let mut mean = vec![0.0; d];
        for i in 0..n {
            for (m, &h) in mean.iter_mut().zip(hidden.row(i)) {
                *m += h;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut global = self.global_w.affine(&mean, &self.global_b);
        for (g, &e) in global.iter_mut().zip(self.embed.row(GLOBAL_ROW)) {
            *g += e;
        }

        let out = EmbeddingMatrix {
            global,
            tokens: hidden.clone(),
        };
        Ok((
            out,
            ReferenceTrace {
                pool_src,
                mix_in,
                hidden,
                mean,
            },
        ))
    }

    fn backward(&self, trace: &ReferenceTrace, d_out: &EmbeddingMatrix, grads: &mut Self) {
        let n = trace.hidden.rows;
        let d = self.config.dim;

        grads.global_w.add_outer(&d_out.global, &trace.mean);
        for (g, &x) in grads.global_b.iter_mut().zip(&d_out.global) {
            *g += x;
        }
        for (g, &x) in grads.embed.row_mut(GLOBAL_ROW).iter_mut().zip(&d_out.global) {
            *g += x;
        }
        let mut d_mean = vec![0.0; d];
        self.global_w.add_transpose_mul(&d_out.global, &mut d_mean);
        let inv_n = 1.0 / n as f64;

        let mut d_pooled = Matrix::zeros(n, d);
        let mut d_in = vec![0.0; 3 * d];
        for i in 0..n {
            let dz: Vec<f64> = trace
                .hidden
                .row(i)
                .iter()
                .zip(d_out.tokens.row(i))
                .zip(&d_mean)
                .map(|((&h, &g), &gm)| (g + gm * inv_n) * (1.0 - h * h))
                .collect();
            grads.mix_w.add_outer(&dz, trace.mix_in.row(i));
            for (g, &x) in grads.mix_b.iter_mut().zip(&dz) {
                *g += x;
            }
            d_in.fill(0.0);
            self.mix_w.add_transpose_mul(&dz, &mut d_in);
            for (p, &x) in d_pooled.row_mut(i).iter_mut().zip(&d_in[d..2 * d]) {
                *p += x;
            }
            for (range, off) in self.context(i, n) {
                if range.is_empty() {
                    continue;
                }
                let inv = 1.0 / range.len() as f64;
                for j in range {
                    for (p, &x) in d_pooled.row_mut(j).iter_mut().zip(&d_in[off..off + d]) {
                        *p += x * inv;
                    }
                }
            }
        }

        for i in 0..n {
            for (c, &g) in d_pooled.row(i).iter().enumerate() {
                let row = trace.pool_src[i][c];
                grads.embed.data[row * d + c] += g;
            }
        }
    }

    fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill_zero();
        z
    }
}
