//! Span enumeration counts, negative sampling, and greedy non-overlapping decoding.

use blner::corpus::Sentence;
use blner::spandec::{enumerate_spans, heuristic_decode, sample_negatives, Span, SpanPrediction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> blner::Result<()> {
    for (n, eps) in [(100, 10), (100, 100), (5, 6)] {
        println!("n = {n:>3}, threshold = {eps:>3}: {} spans", enumerate_spans(n, eps).len());
    }

    let all = enumerate_spans(30, 6);
    let gold = [Span::new(3, 3), Span::new(4, 5)];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let negatives = sample_negatives(&all, &gold, 100, &mut rng);
    println!("{} candidate spans, {} negatives sampled", all.len(), negatives.len());

    let types = vec!["Weather".to_string(), "Date".to_string()];
    let sentence = Sentence::new(&["will", "it", "rain", "this", "night"], &[])?;
    // class order: Weather, Date, None
    let preds = vec![
        SpanPrediction::from_probs(Span::new(3, 3), vec![0.9, 0.05, 0.05]),
        SpanPrediction::from_probs(Span::new(3, 4), vec![0.6, 0.1, 0.3]),
        SpanPrediction::from_probs(Span::new(4, 5), vec![0.05, 0.8, 0.15]),
        SpanPrediction::from_probs(Span::new(5, 5), vec![0.1, 0.7, 0.2]),
        SpanPrediction::from_probs(Span::new(1, 2), vec![0.1, 0.1, 0.8]),
    ];
    for e in sentence.entities_from(&heuristic_decode(&preds), &types) {
        println!("kept {} [{}..{}] {}", e.surface, e.start, e.end, e.etype);
    }
    Ok(())
}
