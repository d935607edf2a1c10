//! Finite-difference check of the full bundled loss and the weighted-sum
//! identity between bundled and single-head gradients.

use blner::bundler::{bundle_gradient_equivalence, model_grad_check, prepare_batch, Hyperparams, LossWeights, Model, RunMode};
use blner::corpus::{Dataset, Sentence, Split};
use blner::encoder::GradCheckOptions;
use blner::seqdec::Tagging;
use blner::spandec::Representation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> blner::Result<()> {
    let sentence = Sentence::new(&["will", "it", "rain", "this", "night"], &[(3, 3, "Weather"), (4, 5, "Date")])?;
    let data = Dataset::from_sentences(Split::Train, vec![sentence])?;
    for tagging in [Tagging::Softmax, Tagging::Crf] {
        for representation in [Representation::Boundary, Representation::Pooling, Representation::Hybrid] {
            let hp = Hyperparams {
                mode: RunMode::BlSpan,
                tagging,
                representation,
                dim: 8,
                len_dim: 4,
                ..Hyperparams::default()
            };
            let model = Model::new(&data, &hp)?;
            let sents: Vec<&Sentence> = data.sentences.iter().collect();
            let batch = prepare_batch(&model, &sents, &mut ChaCha8Rng::seed_from_u64(1))?;
            let weights = LossWeights::for_mode(RunMode::BlSpan, hp.alpha);
            let r = model_grad_check(&model, &batch, weights, &GradCheckOptions::default())?;
            println!(
                "{tagging:?}/{representation:?}: {} coordinates, max relative error {:.2e}",
                r.checked, r.max_rel_error
            );
            for alpha in [0.0, 0.5, 1.0] {
                let eq = bundle_gradient_equivalence(&model, &batch, alpha)?;
                println!("  alpha {alpha}: max deviation {:.1e}", eq.max_deviation);
            }
        }
    }
    Ok(())
}
