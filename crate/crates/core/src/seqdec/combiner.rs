use crate::corpus::{Bio, LabelScheme, TypedSpan};

/// Merges a BIO label sequence into entity spans.
///
/// `B-X` opens an `X` entity and `I-X` extends an open `X` entity. An `I-X`
/// with no open `X` entity opens one, and switching type closes the previous
/// entity. Positions in the output are 1-based.
pub fn combine_labels(labels: &[usize], scheme: &LabelScheme) -> Vec<TypedSpan> {
    let mut out = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (i, &label) in labels.iter().enumerate() {
        let pos = i + 1;
        let next = match scheme.decode(label) {
            Bio::Outside => None,
            Bio::Begin(t) => Some((pos, t)),
            Bio::Inside(t) => match open {
                Some((start, ot)) if ot == t => Some((start, t)),
                _ => Some((pos, t)),
            },
        };
        if let Some((start, t)) = open {
            if next.is_none_or(|(s, _)| s != start) {
                out.push(TypedSpan {
                    start,
                    end: pos - 1,
                    type_id: t,
                });
            }
        }
        open = next;
    }
    if let Some((start, t)) = open {
        out.push(TypedSpan {
            start,
            end: labels.len(),
            type_id: t,
        });
    }
    out
}

/// 1-based positions whose `I-X` label has no open `X` entity to extend.
pub fn illegal_positions(labels: &[usize], scheme: &LabelScheme) -> Vec<usize> {
    let mut open = None;
    let mut bad = Vec::new();
    for (i, &label) in labels.iter().enumerate() {
        open = match scheme.decode(label) {
            Bio::Outside => None,
            Bio::Begin(t) => Some(t),
            Bio::Inside(t) => {
                if open != Some(t) {
                    bad.push(i + 1);
                }
                Some(t)
            }
        };
    }
    bad
}
