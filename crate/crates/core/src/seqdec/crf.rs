//! Linear-chain CRF over a per-token score matrix.
//!
//! Transition row 0 is the synthetic start state; row `k + 1` holds the
//! scores of moving from label `k`. There is no stop state.

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Matrix};

fn check(scores: &Matrix, trans: &Matrix) -> Result<()> {
    let l = scores.cols;
    if trans.rows != l + 1 || trans.cols != l {
        return Err(Error::shape(
            format!("{}x{} transitions", l + 1, l),
            format!("{}x{}", trans.rows, trans.cols),
        ));
    }
    if scores.rows == 0 {
        return Err(Error::Input("CRF needs at least one token".into()));
    }
    Ok(())
}

fn check_labels(labels: &[usize], scores: &Matrix) -> Result<()> {
    if labels.len() != scores.rows {
        return Err(Error::shape(format!("{} labels", scores.rows), labels.len()));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= scores.cols) {
        return Err(Error::Schema(format!(
            "label index {bad} out of range for {} labels",
            scores.cols
        )));
    }
    Ok(())
}

/// Unnormalized log score of one label path.
pub fn path_score(scores: &Matrix, trans: &Matrix, labels: &[usize]) -> Result<f64> {
    check(scores, trans)?;
    check_labels(labels, scores)?;
    let mut prev = 0;
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        total += scores.get(i, y) + trans.get(prev, y);
        prev = y + 1;
    }
    Ok(total)
}

/// Forward log-messages: `alpha[i][l]` sums all prefixes ending in `l` at `i`.
fn forward(scores: &Matrix, trans: &Matrix) -> Matrix {
    let (n, l) = (scores.rows, scores.cols);
    let mut alpha = Matrix::zeros(n, l);
    for y in 0..l {
        alpha.set(0, y, scores.get(0, y) + trans.get(0, y));
    }
    let mut buf = vec![0.0; l];
    for i in 1..n {
        for y in 0..l {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = alpha.get(i - 1, k) + trans.get(k + 1, y);
            }
            alpha.set(i, y, scores.get(i, y) + log_sum_exp(&buf));
        }
    }
    alpha
}

/// Backward log-messages: `beta[i][k]` sums all suffixes after `k` at `i`.
fn backward(scores: &Matrix, trans: &Matrix) -> Matrix {
    let (n, l) = (scores.rows, scores.cols);
    let mut beta = Matrix::zeros(n, l);
    let mut buf = vec![0.0; l];
    for i in (0..n - 1).rev() {
        for k in 0..l {
            for (y, b) in buf.iter_mut().enumerate() {
                *b = trans.get(k + 1, y) + scores.get(i + 1, y) + beta.get(i + 1, y);
            }
            beta.set(i, k, log_sum_exp(&buf));
        }
    }
    beta
}

/// Log-partition over all label paths.
pub fn log_partition(scores: &Matrix, trans: &Matrix) -> Result<f64> {
    check(scores, trans)?;
    let alpha = forward(scores, trans);
    Ok(log_sum_exp(alpha.row(scores.rows - 1)))
}

/// `-log Pr(labels)` for a score matrix.
pub fn nll_from_scores(scores: &Matrix, trans: &Matrix, labels: &[usize]) -> Result<f64> {
    let gold = path_score(scores, trans, labels)?;
    Ok(log_partition(scores, trans)? - gold)
}

/// Negative log-likelihood with its gradients.
pub struct NllGrad {
    pub nll: f64,
    pub d_scores: Matrix,
    pub d_trans: Matrix,
}

/// Forward-backward: node and edge marginals minus gold indicator counts.
pub fn nll_with_grad(scores: &Matrix, trans: &Matrix, labels: &[usize]) -> Result<NllGrad> {
    let gold = path_score(scores, trans, labels)?;
    let (n, l) = (scores.rows, scores.cols);
    let alpha = forward(scores, trans);
    let beta = backward(scores, trans);
    let log_z = log_sum_exp(alpha.row(n - 1));

    let mut d_scores = Matrix::zeros(n, l);
    let mut d_trans = Matrix::zeros(l + 1, l);
    for i in 0..n {
        for y in 0..l {
            let p = (alpha.get(i, y) + beta.get(i, y) - log_z).exp();
            d_scores.set(i, y, p);
            if i == 0 {
                d_trans.set(0, y, p);
            }
        }
    }
    for i in 1..n {
        for k in 0..l {
            for y in 0..l {
                let p = (alpha.get(i - 1, k) + trans.get(k + 1, y) + scores.get(i, y) + beta.get(i, y)
                    - log_z)
                    .exp();
                d_trans.data[(k + 1) * l + y] += p;
            }
        }
    }
    let mut prev = 0;
    for (i, &y) in labels.iter().enumerate() {
        d_scores.data[i * l + y] -= 1.0;
        d_trans.data[prev * l + y] -= 1.0;
        prev = y + 1;
    }
    Ok(NllGrad {
        nll: log_z - gold,
        d_scores,
        d_trans,
    })
}

/// Highest-scoring label path. Backpointers and the final state prefer the
/// lowest label index on ties.
pub fn viterbi_from_scores(scores: &Matrix, trans: &Matrix) -> Result<Vec<usize>> {
    check(scores, trans)?;
    let (n, l) = (scores.rows, scores.cols);
    let mut delta: Vec<f64> = (0..l).map(|y| scores.get(0, y) + trans.get(0, y)).collect();
    let mut back = vec![vec![0usize; l]; n];
    for i in 1..n {
        let mut next = vec![0.0; l];
        for y in 0..l {
            let mut best = 0;
            let mut best_score = delta[0] + trans.get(1, y);
            for (k, &dk) in delta.iter().enumerate().skip(1) {
                let s = dk + trans.get(k + 1, y);
                if s > best_score {
                    best = k;
                    best_score = s;
                }
            }
            back[i][y] = best;
            next[y] = best_score + scores.get(i, y);
        }
        delta = next;
    }
    let mut y = crate::linalg::argmax(&delta);
    let mut path = vec![0; n];
    for i in (0..n).rev() {
        path[i] = y;
        y = back[i][y];
    }
    Ok(path)
}
