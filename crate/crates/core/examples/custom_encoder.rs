//! Bundles a complementary head onto a model built around an encoder the
//! bundler knows nothing about. The encoder here is a fixed hashed-feature
//! map; wrapping it in `Frozen` makes it usable by the trainer.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use blner::bundler::{train_model, Hyperparams, Model, RunMode};
use blner::corpus::{gen_synthetic, Sentence};
use blner::encoder::{EmbeddingMatrix, Encoder, Frozen};
use blner::evaluator::score;
use blner::linalg::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
struct HashedFeatures {
    dim: usize,
}

impl HashedFeatures {
    fn add(&self, key: (&str, i32), row: &mut [f64]) {
        let mut h = DefaultHasher::new();
        key.hash(&mut h);
        let v = h.finish();
        row[(v % self.dim as u64) as usize] += if v >> 63 == 0 { 1.0 } else { -1.0 };
    }
}

impl Encoder for HashedFeatures {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, sentence: &Sentence) -> blner::Result<EmbeddingMatrix> {
        let words: Vec<&str> = sentence.words().collect();
        let mut tokens = Matrix::zeros(words.len(), self.dim);
        for i in 0..words.len() {
            let row = tokens.row_mut(i);
            for offset in -1i32..=1 {
                let j = i as i32 + offset;
                let w = if j < 0 || j as usize >= words.len() { "<pad>" } else { words[j as usize] };
                self.add((w, offset), row);
            }
        }
        Ok(EmbeddingMatrix {
            global: vec![0.0; self.dim],
            tokens,
        })
    }
}

fn main() -> blner::Result<()> {
    let types: Vec<String> = ["PER", "LOC"].map(String::from).to_vec();
    let corpus = gen_synthetic(5, 300, &types)?;
    let encoder = Frozen(HashedFeatures { dim: 256 });
    for mode in [RunMode::Seq, RunMode::BlSeq] {
        let hp = Hyperparams {
            mode,
            epochs: 20,
            lr: 5e-2,
            ..Hyperparams::default()
        };
        let mut model = Model::bare(encoder.clone(), &corpus.train.type_names, hp);
        // The existing sequence model, plus the span head only when bundling.
        model.attach_heads(true, mode.is_bundled(), &mut ChaCha8Rng::seed_from_u64(0));
        let trained = train_model(model, &corpus.train, &corpus.dev)?;
        let test = score(&trained.model.predict(&corpus.test.sentences)?, &corpus.test.gold())?;
        println!("{mode:<7} test F1 {:.4}", test.f1);
    }
    Ok(())
}
