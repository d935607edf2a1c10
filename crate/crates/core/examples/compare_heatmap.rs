//! Bucket-wise F1 differences between a bundled model and its single-head
//! counterpart, printed as a text grid (positive: the bundled model is better).

use blner::bundler::{train, Hyperparams, RunMode};
use blner::corpus::gen_synthetic;
use blner::evaluator::{attributes, bucket_report, heatmap_delta};

fn main() -> blner::Result<()> {
    let types: Vec<String> = ["PER", "LOC", "ORG", "MISC"].map(String::from).to_vec();
    let corpus = gen_synthetic(3, 300, &types)?;
    let gold = corpus.test.gold();
    let profile = attributes(&corpus.test, &corpus.train)?;
    let mut reports = Vec::new();
    for mode in [RunMode::BlSpan, RunMode::Span] {
        let hp = Hyperparams {
            mode,
            epochs: 6,
            ..Hyperparams::default()
        };
        let model = train(&corpus.train, &corpus.dev, &hp)?.model;
        reports.push(bucket_report(&model.predict(&corpus.test.sentences)?, &gold, &profile)?);
    }
    println!("bl-span minus span");
    print!("{}", heatmap_delta(&reports[0], &reports[1])?.to_grid());
    Ok(())
}
