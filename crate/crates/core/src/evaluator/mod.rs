//! Micro P/R/F1, attribute buckets, bucket-wise heatmaps, and the
//! boundary/type error taxonomy.

mod buckets;
mod errors;

use serde::{Deserialize, Serialize};

use crate::corpus::Entity;
use crate::error::{Error, Result};

pub use buckets::{
    attributes, attributes_with_table, bucket_report, bucketize, heatmap_delta, Attribute, AttributeProfile,
    Bucket, BucketReport, BucketTable, ConsistencyIndex, EntityAttributes, Heatmap, Interval,
    SentenceAttributes,
};
pub use errors::{error_analysis, ErrorReport};

/// Counts and ratios of one micro-averaged evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ScoreReport {
    /// Ratios from counts; every `0/0` is taken as 0.
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.tp + self.fp + self.fn_ == 0
    }

    pub fn merge(&self, other: &ScoreReport) -> Self {
        Self::from_counts(self.tp + other.tp, self.fp + other.fp, self.fn_ + other.fn_)
    }

    pub const TSV_HEADER: &'static str = "TP\tFP\tFN\tP\tR\tF1";

    pub fn tsv_fields(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.tp, self.fp, self.fn_, self.precision, self.recall, self.f1
        )
    }
}

/// Per-sentence exact matching on `(start, end, type)`; each gold entity
/// matches at most one prediction.
pub(crate) struct Matching {
    pub pred_matched: Vec<bool>,
    pub gold_matched: Vec<bool>,
}

pub(crate) fn match_sentence(pred: &[Entity], gold: &[Entity]) -> Matching {
    let mut gold_matched = vec![false; gold.len()];
    let pred_matched = pred
        .iter()
        .map(|p| {
            let hit = gold
                .iter()
                .enumerate()
                .position(|(j, g)| !gold_matched[j] && g.key() == p.key());
            if let Some(j) = hit {
                gold_matched[j] = true;
            }
            hit.is_some()
        })
        .collect();
    Matching {
        pred_matched,
        gold_matched,
    }
}

pub(crate) fn check_aligned(pred: &[Vec<Entity>], gold: &[Vec<Entity>]) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Input(format!(
            "{} predicted sentences but {} gold sentences",
            pred.len(),
            gold.len()
        )));
    }
    Ok(())
}

/// Exact-match micro P/R/F1 over aligned sentences.
pub fn score(pred: &[Vec<Entity>], gold: &[Vec<Entity>]) -> Result<ScoreReport> {
    check_aligned(pred, gold)?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, g) in pred.iter().zip(gold) {
        let m = match_sentence(p, g);
        let hits = m.pred_matched.iter().filter(|&&b| b).count();
        tp += hits;
        fp += p.len() - hits;
        fn_ += g.len() - hits;
    }
    Ok(ScoreReport::from_counts(tp, fp, fn_))
}
