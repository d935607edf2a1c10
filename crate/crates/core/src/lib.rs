//! Bundled named entity recognition: a sequence-labeling head and a span
//! classification head trained on one shared encoder with a weighted-sum
//! loss, plus bucketed evaluation and boundary/type error analysis.

pub mod bundler;
pub mod cli;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod linalg;
pub mod params;
pub mod seqdec;
pub mod spandec;

pub use error::{Error, Result};
