//! Trains all four run modes on a synthetic corpus and prints dev and test scores.
//!
//! `cargo run --release --example train_bundled -- [sentences] [epochs]`

use std::time::Instant;

use blner::bundler::{train, Hyperparams, RunMode};
use blner::corpus::gen_synthetic;
use blner::evaluator::score;

fn main() -> blner::Result<()> {
    env_logger::init();
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(500), |a| a.parse()).expect("sentence count");
    let epochs: usize = args.next().map_or(Ok(20), |a| a.parse()).expect("epoch count");
    let types: Vec<String> = ["PER", "LOC", "ORG", "MISC"].map(String::from).to_vec();
    let corpus = gen_synthetic(7, n, &types)?;
    println!(
        "train {} / dev {} / test {} sentences",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len()
    );
    for mode in RunMode::ALL {
        let hp = Hyperparams {
            mode,
            epochs,
            ..Hyperparams::default()
        };
        let clock = Instant::now();
        let trained = train(&corpus.train, &corpus.dev, &hp)?;
        let best = trained.best_epoch.unwrap_or(0);
        let dev_f1 = trained.history.get(best.wrapping_sub(1)).map_or(0.0, |h| h.dev.f1);
        let test = score(&trained.model.predict(&corpus.test.sentences)?, &corpus.test.gold())?;
        println!(
            "{mode:<8} best epoch {best:>2}  dev F1 {dev_f1:.4}  test F1 {:.4}  ({:.1}s)",
            test.f1,
            clock.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
