//! Scores a tag sequence with a linear-chain CRF, compares Viterbi with
//! per-token argmax, and turns the winning labels into entities.

use blner::corpus::{LabelScheme, Sentence};
use blner::linalg::{argmax, Matrix};
use blner::seqdec::combine_labels;
use blner::seqdec::crf::{log_partition, path_score, viterbi_from_scores};

fn main() -> blner::Result<()> {
    let types = vec!["Weather".to_string(), "Date".to_string()];
    let scheme = LabelScheme::new(&types);
    let sentence = Sentence::new(&["will", "it", "rain", "this", "night"], &[])?;
    // labels: O, B-Weather, I-Weather, B-Date, I-Date
    let scores = Matrix::from_rows(&[
        vec![2.0, 0.0, 0.0, 0.0, 0.0],
        vec![2.0, 0.0, 0.0, 0.0, 0.0],
        vec![0.5, 2.0, 0.0, 0.3, 0.0],
        vec![0.3, 0.0, 0.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.2, 0.0, 1.0],
    ]);
    // START row, then one row per previous label; forbid I-X after anything but B-X/I-X.
    let mut trans = Matrix::zeros(scheme.len() + 1, scheme.len());
    for prev in 0..=scheme.len() {
        for (t, _) in types.iter().enumerate() {
            let inside = scheme.inside(t);
            let allowed = prev > 0 && (prev - 1 == scheme.begin(t) || prev - 1 == inside);
            if !allowed {
                trans.set(prev, inside, -5.0);
            }
        }
    }

    let greedy: Vec<usize> = (0..scores.rows).map(|i| argmax(scores.row(i))).collect();
    let best = viterbi_from_scores(&scores, &trans)?;
    let z = log_partition(&scores, &trans)?;
    for (name, path) in [("argmax", &greedy), ("viterbi", &best)] {
        let s = path_score(&scores, &trans, path)?;
        let labels: Vec<&str> = path.iter().map(|&l| scheme.labels()[l].as_str()).collect();
        let entities: Vec<String> = sentence
            .entities_from(&combine_labels(path, &scheme), &types)
            .into_iter()
            .map(|e| format!("{}:{}", e.surface, e.etype))
            .collect();
        println!("{name:<8} {labels:?} p = {:.4} -> {entities:?}", (s - z).exp());
    }
    Ok(())
}
