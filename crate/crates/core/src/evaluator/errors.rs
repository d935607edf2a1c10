use serde::{Deserialize, Serialize};

use super::{check_aligned, match_sentence};
use crate::corpus::Entity;
use crate::error::Result;

/// Boundary and type error tallies over all false positives and false negatives.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorReport {
    pub boundary_errors: usize,
    pub type_errors: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub be_rate: f64,
    pub te_rate: f64,
}

impl ErrorReport {
    pub fn to_tsv(&self) -> String {
        format!(
            "BE\tTE\tFP\tFN\tBE-Rate\tTE-Rate\n{}\t{}\t{}\t{}\t{}\t{}\n",
            self.boundary_errors, self.type_errors, self.fp, self.fn_, self.be_rate, self.te_rate
        )
    }
}

enum Kind {
    Type,
    Boundary,
    Other,
}

/// Same span with a different type is a type error; any other overlap is a
/// boundary error.
fn classify(miss: &Entity, others: &[Entity]) -> Kind {
    if others.iter().any(|o| o.same_span(miss) && o.etype != miss.etype) {
        Kind::Type
    } else if others.iter().any(|o| o.overlaps(miss) && !o.same_span(miss)) {
        Kind::Boundary
    } else {
        Kind::Other
    }
}

/// Attributes each unmatched prediction (against gold) and each unmatched
/// gold entity (against predictions) to at most one error kind.
pub fn error_analysis(pred: &[Vec<Entity>], gold: &[Vec<Entity>]) -> Result<ErrorReport> {
    check_aligned(pred, gold)?;
    let mut r = ErrorReport::default();
    for (p, g) in pred.iter().zip(gold) {
        let m = match_sentence(p, g);
        let misses = p
            .iter()
            .zip(&m.pred_matched)
            .filter(|(_, &hit)| !hit)
            .map(|(e, _)| (e, g.as_slice(), true))
            .chain(
                g.iter()
                    .zip(&m.gold_matched)
                    .filter(|(_, &hit)| !hit)
                    .map(|(e, _)| (e, p.as_slice(), false)),
            );
        for (miss, others, is_fp) in misses {
            if is_fp {
                r.fp += 1;
            } else {
                r.fn_ += 1;
            }
            match classify(miss, others) {
                Kind::Type => r.type_errors += 1,
                Kind::Boundary => r.boundary_errors += 1,
                Kind::Other => {}
            }
        }
    }
    let denom = r.fp + r.fn_;
    if denom > 0 {
        r.be_rate = r.boundary_errors as f64 / denom as f64;
        r.te_rate = r.type_errors as f64 / denom as f64;
    }
    Ok(r)
}
