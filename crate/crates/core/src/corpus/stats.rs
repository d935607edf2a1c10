use std::collections::HashSet;

use super::Dataset;
use crate::error::{Error, Result};

/// Distinct token texts of a dataset (case-sensitive).
pub fn vocabulary(dataset: &Dataset) -> HashSet<&str> {
    dataset
        .sentences
        .iter()
        .flat_map(|s| s.words())
        .collect()
}

/// Fraction of test tokens whose exact text never occurs in `train`.
pub fn oov_density(test: &Dataset, train: &Dataset) -> Result<f64> {
    let total = test.num_tokens();
    if total == 0 {
        return Err(Error::Input("OOV density undefined for an empty test set".into()));
    }
    let vocab = vocabulary(train);
    let oov = test
        .sentences
        .iter()
        .flat_map(|s| s.words())
        .filter(|w| !vocab.contains(w))
        .count();
    Ok(oov as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Sentence, Split};
    use proptest::prelude::*;

    fn ds(sentences: &[&[&str]]) -> Dataset {
        let s = sentences
            .iter()
            .map(|w| Sentence::new(w, &[]).unwrap())
            .collect();
        Dataset::from_sentences(Split::Test, s).unwrap()
    }

    #[test]
    fn direct_ratios() {
        let test = ds(&[&["a", "b", "c", "d"]]);
        assert_eq!(oov_density(&test, &ds(&[&["a", "b"]])).unwrap(), 0.5);
        assert_eq!(oov_density(&test, &ds(&[&["d", "c", "b", "a", "e"]])).unwrap(), 0.0);
        assert_eq!(oov_density(&test, &ds(&[&["x"]])).unwrap(), 1.0);
        assert_eq!(oov_density(&ds(&[&["A"]]), &ds(&[&["a"]])).unwrap(), 1.0);
    }

    #[test]
    fn empty_test_is_an_error() {
        assert!(matches!(
            oov_density(&ds(&[]), &ds(&[&["a"]])),
            Err(Error::Input(_))
        ));
    }

    proptest! {
        #[test]
        fn growing_train_vocab_never_raises_density(
            test in prop::collection::vec("[a-e]", 1..30),
            train in prop::collection::vec("[a-e]", 1..10),
            extra in prop::collection::vec("[a-f]", 0..10),
        ) {
            let t: Vec<&str> = test.iter().map(String::as_str).collect();
            let small: Vec<&str> = train.iter().map(String::as_str).collect();
            let mut big = small.clone();
            big.extend(extra.iter().map(String::as_str));
            let test = ds(&[&t]);
            let a = oov_density(&test, &ds(&[&small])).unwrap();
            let b = oov_density(&test, &ds(&[&big])).unwrap();
            prop_assert!(b <= a);
        }
    }
}
