//! Template-grammar corpus with closed per-type entity vocabularies.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Entity, Sentence, Split, Token};
use crate::error::{Error, Result};

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "kr", "th",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];
const CODAS: &[&str] = &["", "", "n", "r", "l", "s", "x"];

const FILLER_WORDS: usize = 48;
const PHRASES_PER_TYPE: usize = 10;
const WORDS_PER_TYPE: usize = 14;
const MIN_LEN: usize = 5;
const MAX_LEN: usize = 30;
#[cfg(test)]
const MAX_ENTITY_LEN: usize = 4;

/// The three splits produced by [`gen_synthetic`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticCorpus {
    pub train: Dataset,
    pub dev: Dataset,
    pub test: Dataset,
}

fn pseudo_word<R: Rng>(rng: &mut R, used: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(1..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).expect("non-empty"));
            w.push_str(NUCLEI.choose(rng).expect("non-empty"));
            w.push_str(CODAS.choose(rng).expect("non-empty"));
        }
        if used.insert(w.clone()) {
            return w;
        }
    }
}

/// Generates `n_sentences` sentences split 8:1:1 into train/dev/test.
///
/// Each type owns a closed set of 1–4 token phrases drawn from its own word
/// pool; filler words never occur inside entities and consecutive entities
/// are separated by at least one filler token. Output depends only on the
/// arguments.
pub fn gen_synthetic(seed: u64, n_sentences: usize, type_names: &[String]) -> Result<SyntheticCorpus> {
    if n_sentences == 0 {
        return Err(Error::Input("n_sentences must be at least 1".into()));
    }
    if type_names.is_empty() {
        return Err(Error::Input("at least one entity type is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut used = HashSet::new();

    let filler: Vec<String> = (0..FILLER_WORDS)
        .map(|_| pseudo_word(&mut rng, &mut used))
        .collect();
    let phrases: Vec<Vec<Vec<String>>> = type_names
        .iter()
        .map(|_| {
            let pool: Vec<String> = (0..WORDS_PER_TYPE)
                .map(|_| pseudo_word(&mut rng, &mut used))
                .collect();
            (0..PHRASES_PER_TYPE)
                .map(|_| {
                    let len = [1, 1, 1, 2, 2, 2, 3, 3, 4][rng.gen_range(0..9)];
                    pool.choose_multiple(&mut rng, len).cloned().collect()
                })
                .collect()
        })
        .collect();

    let sentences: Vec<Sentence> = (0..n_sentences)
        .map(|_| {
            let target = rng.gen_range(MIN_LEN..=MAX_LEN);
            let k = [0, 1, 1, 1, 2, 2, 2, 3][rng.gen_range(0..8)];
            let mut mentions: Vec<(usize, &Vec<String>)> = (0..k)
                .map(|_| {
                    let t = rng.gen_range(0..type_names.len());
                    (t, phrases[t].choose(&mut rng).expect("non-empty"))
                })
                .collect();
            while !mentions.is_empty() {
                let entity_tokens: usize = mentions.iter().map(|(_, p)| p.len()).sum();
                if entity_tokens + mentions.len() - 1 <= target {
                    break;
                }
                mentions.pop();
            }
            let entity_tokens: usize = mentions.iter().map(|(_, p)| p.len()).sum();
            // gaps[0] before the first mention, gaps[k] after the last
            let mut gaps = vec![0usize; mentions.len() + 1];
            for g in gaps.iter_mut().take(mentions.len()).skip(1) {
                *g = 1;
            }
            let mut spare = target - entity_tokens - mentions.len().saturating_sub(1);
            while spare > 0 {
                let g = rng.gen_range(0..gaps.len());
                gaps[g] += 1;
                spare -= 1;
            }

            let mut words: Vec<String> = Vec::with_capacity(target);
            let mut gold = Vec::new();
            for (i, gap) in gaps.iter().enumerate() {
                for _ in 0..*gap {
                    words.push(filler.choose(&mut rng).expect("non-empty").clone());
                }
                if let Some((t, phrase)) = mentions.get(i) {
                    let start = words.len() + 1;
                    words.extend(phrase.iter().cloned());
                    gold.push(Entity {
                        start,
                        end: words.len(),
                        etype: type_names[*t].clone(),
                        surface: phrase.join(" "),
                    });
                }
            }
            let tokens = words
                .into_iter()
                .enumerate()
                .map(|(i, text)| Token { text, index: i + 1 })
                .collect();
            Sentence { tokens, gold }
        })
        .collect();

    let n_dev = n_sentences / 10;
    let n_test = n_sentences / 10;
    let n_train = n_sentences - n_dev - n_test;
    let mut it = sentences.into_iter();
    let mut take = |split, n| -> Result<Dataset> {
        let ds = Dataset {
            split,
            sentences: it.by_ref().take(n).collect(),
            type_names: type_names.to_vec(),
        };
        ds.validate()?;
        Ok(ds)
    };
    Ok(SyntheticCorpus {
        train: take(Split::Train, n_train)?,
        dev: take(Split::Dev, n_dev)?,
        test: take(Split::Test, n_test)?,
    })
}
