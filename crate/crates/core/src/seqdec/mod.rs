//! Sequence-labeling head: emission scores, softmax or CRF tagging, and the
//! Label Combiner that turns BIO labels into entities.

mod combiner;
pub mod crf;

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::linalg::{argmax, softmax, Matrix};
use crate::params::ParamTensors;

pub use combiner::{combine_labels, illegal_positions};

/// Probabilities below this are clamped before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Per-token affine projection onto the label alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmissionParams {
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl EmissionParams {
    pub fn uniform<R: Rng + ?Sized>(labels: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            w: Matrix::uniform(labels, dim, scale, rng),
            b: Matrix::uniform(1, labels, scale, rng).data,
        }
    }

    pub fn num_labels(&self) -> usize {
        self.b.len()
    }
}

/// Transition scores; row 0 is the start state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrfParams {
    pub a: Matrix,
}

impl CrfParams {
    pub fn zeros(labels: usize) -> Self {
        Self {
            a: Matrix::zeros(labels + 1, labels),
        }
    }

    pub fn uniform<R: Rng + ?Sized>(labels: usize, scale: f64, rng: &mut R) -> Self {
        Self {
            a: Matrix::uniform(labels + 1, labels, scale, rng),
        }
    }
}

/// Row-wise label distributions for a sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TagDistribution {
    pub probs: Vec<Vec<f64>>,
}

impl TagDistribution {
    /// Per-token argmax, lowest label index on ties.
    pub fn argmax(&self) -> Vec<usize> {
        self.probs.iter().map(|p| argmax(p)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Tagging {
    #[default]
    Softmax,
    Crf,
}

impl std::str::FromStr for Tagging {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Tagging::Softmax),
            "crf" => Ok(Tagging::Crf),
            other => Err(Error::Config(format!("unknown tagging mode {other:?}"))),
        }
    }
}

/// Row `i` is `W · e_i + b`.
pub fn emissions(e: &EmbeddingMatrix, p: &EmissionParams) -> Result<Matrix> {
    if p.w.cols != e.dim() || p.w.rows != p.b.len() {
        return Err(Error::shape(
            format!("emission weights {}x{}", p.b.len(), e.dim()),
            format!("{}x{}", p.w.rows, p.w.cols),
        ));
    }
    let mut out = Matrix::zeros(e.len(), p.b.len());
    for i in 0..e.len() {
        out.row_mut(i).copy_from_slice(&p.w.affine(e.tokens.row(i), &p.b));
    }
    Ok(out)
}

pub fn softmax_tag(e: &EmbeddingMatrix, p: &EmissionParams) -> Result<TagDistribution> {
    let scores = emissions(e, p)?;
    Ok(TagDistribution {
        probs: (0..scores.rows).map(|i| softmax(scores.row(i))).collect(),
    })
}

fn clamped_log(p: f64) -> f64 {
    if p < PROB_FLOOR {
        warn!("probability {p:e} at gold label clamped to {PROB_FLOOR:e}");
        PROB_FLOOR.ln()
    } else {
        p.ln()
    }
}

/// Mean token cross-entropy against gold label ids.
pub fn softmax_loss(dist: &TagDistribution, gold: &[usize]) -> Result<f64> {
    if dist.probs.len() != gold.len() {
        return Err(Error::shape(format!("{} gold labels", dist.probs.len()), gold.len()));
    }
    if gold.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (p, &g) in dist.probs.iter().zip(gold) {
        let pg = *p
            .get(g)
            .ok_or_else(|| Error::Schema(format!("label index {g} out of range")))?;
        total -= clamped_log(pg);
    }
    Ok(total / gold.len() as f64)
}

/// `-log Pr(gold | sentence)` under the linear-chain CRF.
pub fn crf_nll(e: &EmbeddingMatrix, ep: &EmissionParams, cp: &CrfParams, gold: &[usize]) -> Result<f64> {
    crf::nll_from_scores(&emissions(e, ep)?, &cp.a, gold)
}

pub fn viterbi(e: &EmbeddingMatrix, ep: &EmissionParams, cp: &CrfParams) -> Result<Vec<usize>> {
    crf::viterbi_from_scores(&emissions(e, ep)?, &cp.a)
}

/// Trainable sequence head: emissions plus optional CRF transitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqHead {
    pub tagging: Tagging,
    pub emission: EmissionParams,
    pub crf: Option<CrfParams>,
}

impl SeqHead {
    pub fn new<R: Rng + ?Sized>(tagging: Tagging, labels: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        let emission = EmissionParams::uniform(labels, dim, scale, rng);
        let crf = (tagging == Tagging::Crf).then(|| CrfParams::uniform(labels, scale, rng));
        Self {
            tagging,
            emission,
            crf,
        }
    }

    fn crf_params(&self) -> Result<&CrfParams> {
        self.crf
            .as_ref()
            .ok_or_else(|| Error::Config("CRF tagging without transition parameters".into()))
    }

    /// Best label sequence: Viterbi for CRF tagging, per-token argmax otherwise.
    pub fn decode(&self, e: &EmbeddingMatrix) -> Result<Vec<usize>> {
        match self.tagging {
            Tagging::Softmax => Ok(softmax_tag(e, &self.emission)?.argmax()),
            Tagging::Crf => viterbi(e, &self.emission, self.crf_params()?),
        }
    }

    /// Sentence loss before batch normalization: summed token cross-entropy
    /// for softmax tagging, the sentence NLL for CRF tagging.
    ///
    /// Adds `scale · ∂loss` into `grads` and `d_e`.
    pub fn accumulate(
        &self,
        e: &EmbeddingMatrix,
        gold: &[usize],
        scale: f64,
        grads: &mut SeqHead,
        d_e: &mut EmbeddingMatrix,
    ) -> Result<f64> {
        let scores = emissions(e, &self.emission)?;
        let l = scores.cols;
        let (loss, d_scores) = match self.tagging {
            Tagging::Softmax => {
                if gold.len() != scores.rows {
                    return Err(Error::shape(format!("{} gold labels", scores.rows), gold.len()));
                }
                let mut d = Matrix::zeros(scores.rows, l);
                let mut loss = 0.0;
                for (i, &g) in gold.iter().enumerate() {
                    if g >= l {
                        return Err(Error::Schema(format!("label index {g} out of range")));
                    }
                    let p = softmax(scores.row(i));
                    loss -= clamped_log(p[g]);
                    let row = d.row_mut(i);
                    row.copy_from_slice(&p);
                    row[g] -= 1.0;
                }
                (loss, d)
            }
            Tagging::Crf => {
                let g = crf::nll_with_grad(&scores, &self.crf_params()?.a, gold)?;
                let gt = grads
                    .crf
                    .as_mut()
                    .ok_or_else(|| Error::Config("gradient buffer lacks CRF transitions".into()))?;
                crate::linalg::axpy(scale, &g.d_trans.data, &mut gt.a.data);
                (g.nll, g.d_scores)
            }
        };
        for i in 0..scores.rows {
            let ds: Vec<f64> = d_scores.row(i).iter().map(|v| v * scale).collect();
            grads.emission.w.add_outer(&ds, e.tokens.row(i));
            crate::linalg::axpy(1.0, &ds, &mut grads.emission.b);
            self.emission.w.add_transpose_mul(&ds, d_e.tokens.row_mut(i));
        }
        Ok(loss)
    }
}

impl ParamTensors for SeqHead {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![&self.emission.w.data, &self.emission.b];
        if let Some(c) = &self.crf {
            v.push(&c.a.data);
        }
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![&mut self.emission.w.data, &mut self.emission.b];
        if let Some(c) = &mut self.crf {
            v.push(&mut c.a.data);
        }
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn embedding(rows: &[Vec<f64>]) -> EmbeddingMatrix {
        EmbeddingMatrix {
            global: vec![0.0; rows[0].len()],
            tokens: Matrix::from_rows(rows),
        }
    }

    #[test]
    fn emissions_match_naive_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let e = EmbeddingMatrix {
            global: vec![0.0; 4],
            tokens: Matrix::uniform(3, 4, 1.0, &mut rng),
        };
        let p = EmissionParams::uniform(5, 4, 1.0, &mut rng);
        let s = emissions(&e, &p).unwrap();
        for i in 0..3 {
            for l in 0..5 {
                let mut acc = p.b[l];
                for k in 0..4 {
                    acc += p.w.get(l, k) * e.tokens.get(i, k);
                }
                assert!((s.get(i, l) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_bias_rows() {
        let e = embedding(&[vec![1.0, 2.0], vec![-3.0, 0.5]]);
        let p = EmissionParams {
            w: Matrix::zeros(3, 2),
            b: vec![0.1, -0.2, 0.3],
        };
        let s = emissions(&e, &p).unwrap();
        assert_eq!(s.row(0), &[0.1, -0.2, 0.3]);
        assert_eq!(s.row(1), &[0.1, -0.2, 0.3]);
        let single = emissions(&embedding(&[vec![1.0, 1.0]]), &p).unwrap();
        assert_eq!(single.rows, 1);
        let bad = EmissionParams {
            w: Matrix::zeros(3, 5),
            b: vec![0.0; 3],
        };
        assert!(matches!(emissions(&e, &bad), Err(Error::Shape { .. })));
    }

    fn bias_only(b: Vec<f64>) -> EmissionParams {
        EmissionParams {
            w: Matrix::zeros(b.len(), 1),
            b,
        }
    }

    #[test]
    fn softmax_tag_cases() {
        let e = embedding(&[vec![0.0]]);
        let uniform = softmax_tag(&e, &bias_only(vec![0.0; 4])).unwrap();
        for p in &uniform.probs[0] {
            assert!((p - 0.25).abs() < 1e-15);
        }
        let dominant = softmax_tag(&e, &bias_only(vec![0.0, 1000.0, 0.0])).unwrap();
        assert!((dominant.probs[0][1] - 1.0).abs() < 1e-12);
        assert!(dominant.probs[0].iter().all(|p| p.is_finite()));
        let d = softmax_tag(&e, &bias_only(vec![1.0, 2.0, 3.0])).unwrap();
        let z = 1f64.exp() + 2f64.exp() + 3f64.exp();
        for (k, p) in d.probs[0].iter().enumerate() {
            assert!((p - ((k + 1) as f64).exp() / z).abs() < 1e-12);
        }
        assert_eq!(uniform.argmax(), vec![0]);
    }

    #[test]
    fn softmax_loss_cases() {
        let one_hot = TagDistribution {
            probs: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        assert_eq!(softmax_loss(&one_hot, &[0, 1]).unwrap(), 0.0);
        let uniform = TagDistribution {
            probs: vec![vec![1.0 / 9.0; 9]; 3],
        };
        assert!((softmax_loss(&uniform, &[0, 4, 8]).unwrap() - 9f64.ln()).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rows: Vec<Vec<f64>> = (0..4).map(|_| softmax(&Matrix::uniform(1, 5, 3.0, &mut rng).data)).collect();
        let gold = [4, 0, 2, 2];
        let direct = -(rows[0][4].ln() + rows[1][0].ln() + rows[2][2].ln() + rows[3][2].ln()) / 4.0;
        let got = softmax_loss(&TagDistribution { probs: rows }, &gold).unwrap();
        assert!((got - direct).abs() < 1e-10);
        assert!(softmax_loss(&one_hot, &[0]).is_err());
        let zero = TagDistribution {
            probs: vec![vec![1.0, 0.0]],
        };
        assert!((softmax_loss(&zero, &[1]).unwrap() + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn crf_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e = EmbeddingMatrix {
            global: vec![0.0; 3],
            tokens: Matrix::uniform(1, 3, 1.0, &mut rng),
        };
        let ep = EmissionParams::uniform(5, 3, 1.0, &mut rng);
        let mut cp = CrfParams::uniform(5, 1.0, &mut rng);
        cp.a.row_mut(0).fill(0.0);
        let dist = softmax_tag(&e, &ep).unwrap();
        for g in 0..5 {
            let ce = softmax_loss(&dist, &[g]).unwrap();
            assert!((crf_nll(&e, &ep, &cp, &[g]).unwrap() - ce).abs() < 1e-12);
        }
        // all-zero scores: uniform path measure
        let zero = EmbeddingMatrix::zeros(4, 3);
        let ep0 = EmissionParams {
            w: Matrix::zeros(5, 3),
            b: vec![0.0; 5],
        };
        let nll = crf_nll(&zero, &ep0, &CrfParams::zeros(5), &[0, 1, 2, 3]).unwrap();
        assert!((nll - 4.0 * 5f64.ln()).abs() < 1e-12);
        assert!(matches!(
            crf_nll(&zero, &ep0, &CrfParams::zeros(5), &[0, 1, 2, 9]),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn viterbi_decouples_without_transitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let e = EmbeddingMatrix {
            global: vec![0.0; 4],
            tokens: Matrix::uniform(6, 4, 1.0, &mut rng),
        };
        let ep = EmissionParams::uniform(5, 4, 1.0, &mut rng);
        let path = viterbi(&e, &ep, &CrfParams::zeros(5)).unwrap();
        assert_eq!(path, softmax_tag(&e, &ep).unwrap().argmax());
        // single token: emission plus start transition
        let one = EmbeddingMatrix {
            global: vec![0.0; 4],
            tokens: Matrix::uniform(1, 4, 1.0, &mut rng),
        };
        let cp = CrfParams::uniform(5, 1.0, &mut rng);
        let s = emissions(&one, &ep).unwrap();
        let expect = argmax(&(0..5).map(|y| s.get(0, y) + cp.a.get(0, y)).collect::<Vec<_>>());
        assert_eq!(viterbi(&one, &ep, &cp).unwrap(), vec![expect]);
    }

    #[test]
    fn shift_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let e = EmbeddingMatrix {
                global: vec![0.0; 3],
                tokens: Matrix::uniform(5, 3, 1.0, &mut rng),
            };
            let ep = EmissionParams::uniform(4, 3, 1.0, &mut rng);
            let cp = CrfParams::uniform(4, 1.0, &mut rng);
            let mut shifted = ep.clone();
            shifted.b.iter_mut().for_each(|b| *b += 37.5);
            assert_eq!(viterbi(&e, &ep, &cp).unwrap(), viterbi(&e, &shifted, &cp).unwrap());
            let gold = [0, 1, 2, 3, 0];
            let a = crf_nll(&e, &ep, &cp, &gold).unwrap();
            let b = crf_nll(&e, &shifted, &cp, &gold).unwrap();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one_at_large_magnitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..50 {
            let e = EmbeddingMatrix {
                global: vec![0.0; 2],
                tokens: Matrix::uniform(4, 2, 1000.0, &mut rng),
            };
            let p = EmissionParams::uniform(7, 2, 3.0, &mut rng);
            for row in softmax_tag(&e, &p).unwrap().probs {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn head_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for tagging in [Tagging::Softmax, Tagging::Crf] {
            let e = EmbeddingMatrix {
                global: vec![0.0; 3],
                tokens: Matrix::uniform(4, 3, 1.0, &mut rng),
            };
            let head = SeqHead::new(tagging, 5, 3, 0.5, &mut rng);
            let gold = [0, 1, 2, 0];
            let mut grads = head.clone();
            grads.fill_zero();
            let mut d_e = EmbeddingMatrix::zeros(4, 3);
            head.accumulate(&e, &gold, 1.0, &mut grads, &mut d_e).unwrap();
            let loss = |h: &SeqHead, e: &EmbeddingMatrix| {
                let mut g = h.clone();
                let mut de = EmbeddingMatrix::zeros(4, 3);
                h.accumulate(e, &gold, 0.0, &mut g, &mut de).unwrap()
            };
            let flat = head.flatten();
            let analytic = grads.flatten();
            for i in 0..flat.len() {
                let mut up = head.clone();
                let mut v = flat.clone();
                v[i] += 1e-6;
                up.assign(&v);
                let mut dn = head.clone();
                v[i] -= 2e-6;
                dn.assign(&v);
                let fd = (loss(&up, &e) - loss(&dn, &e)) / 2e-6;
                assert!((fd - analytic[i]).abs() < 1e-6, "{tagging:?} param {i}");
            }
            for k in 0..e.tokens.data.len() {
                let mut up = e.clone();
                up.tokens.data[k] += 1e-6;
                let mut dn = e.clone();
                dn.tokens.data[k] -= 1e-6;
                let fd = (loss(&head, &up) - loss(&head, &dn)) / 2e-6;
                assert!((fd - d_e.tokens.data[k]).abs() < 1e-6);
            }
        }
    }
}
