//! Bucketed evaluation and boundary/type error analysis of a trained model.

use blner::bundler::{train, Hyperparams, RunMode};
use blner::corpus::gen_synthetic;
use blner::evaluator::{attributes, bucket_report, error_analysis, score};

fn main() -> blner::Result<()> {
    let types: Vec<String> = ["PER", "LOC", "ORG"].map(String::from).to_vec();
    let corpus = gen_synthetic(11, 300, &types)?;
    let hp = Hyperparams {
        mode: RunMode::BlSpan,
        epochs: 10,
        ..Hyperparams::default()
    };
    let model = train(&corpus.train, &corpus.dev, &hp)?.model;
    let pred = model.predict(&corpus.test.sentences)?;
    let gold = corpus.test.gold();

    let holistic = score(&pred, &gold)?;
    println!("holistic F1 {:.4}\n", holistic.f1);
    let profile = attributes(&corpus.test, &corpus.train)?;
    print!("{}", bucket_report(&pred, &gold, &profile)?.to_tsv());
    println!();
    print!("{}", error_analysis(&pred, &gold)?.to_tsv());
    Ok(())
}
