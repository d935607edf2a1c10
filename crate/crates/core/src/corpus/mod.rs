//! Sentences, gold entities, label alphabets, and corpus I/O.

mod conll;
mod spanjson;
mod stats;
mod synth;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use conll::{parse_conll, serialize_conll};
pub use spanjson::{parse_span_json, serialize_span_json, write_predictions};
pub use stats::{oov_density, vocabulary};
pub use synth::{gen_synthetic, SyntheticCorpus};

/// Name reserved for the span head's non-entity class.
pub const NONE_TYPE: &str = "None";
/// Name of the outside label in the BIO alphabet.
pub const OUTSIDE: &str = "O";

/// A word of a sentence. Indices start at 1; 0 is the global slot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub index: usize,
}

/// A typed mention with 1-based inclusive token bounds.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Entity {
    pub start: usize,
    pub end: usize,
    pub etype: String,
    pub surface: String,
}

impl Entity {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn overlaps(&self, other: &Entity) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn same_span(&self, other: &Entity) -> bool {
        self.start == other.start && self.end == other.end
    }

    /// `(start, end, etype)`, the identity used for exact matching.
    pub fn key(&self) -> (usize, usize, &str) {
        (self.start, self.end, self.etype.as_str())
    }
}

/// Decoder-side mention: bounds plus an index into a type alphabet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TypedSpan {
    pub start: usize,
    pub end: usize,
    pub type_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub gold: Vec<Entity>,
}

impl Sentence {
    /// Builds a sentence from words and `(start, end, type)` annotations,
    /// checking every invariant. Gold entities are stored ordered by start.
    pub fn new<S: AsRef<str>>(words: &[S], gold: &[(usize, usize, &str)]) -> Result<Self> {
        let tokens = words
            .iter()
            .enumerate()
            .map(|(i, w)| Token {
                text: w.as_ref().to_string(),
                index: i + 1,
            })
            .collect();
        let mut sentence = Sentence {
            tokens,
            gold: Vec::new(),
        };
        let mut entities = Vec::with_capacity(gold.len());
        for &(start, end, etype) in gold {
            entities.push(sentence.entity(start, end, etype)?);
        }
        entities.sort_by_key(|e| (e.start, e.end));
        sentence.gold = entities;
        sentence.validate()?;
        Ok(sentence)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    /// Space-joined token texts of `start..=end`.
    pub fn surface(&self, start: usize, end: usize) -> String {
        self.tokens[start - 1..end]
            .iter()
            .map(|t| t.text.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// An entity anchored in this sentence, with its surface filled in.
    pub fn entity(&self, start: usize, end: usize, etype: &str) -> Result<Entity> {
        if start < 1 || start > end || end > self.len() {
            return Err(Error::Input(format!(
                "entity bounds {start}..{end} outside sentence of length {}",
                self.len()
            )));
        }
        Ok(Entity {
            start,
            end,
            etype: etype.to_string(),
            surface: self.surface(start, end),
        })
    }

    /// Converts decoder spans into entities using `names` as the type alphabet.
    pub fn entities_from(&self, spans: &[TypedSpan], names: &[String]) -> Vec<Entity> {
        spans
            .iter()
            .map(|s| Entity {
                start: s.start,
                end: s.end,
                etype: names[s.type_id].clone(),
                surface: self.surface(s.start, s.end),
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            if t.text.is_empty() || t.text.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid token text {:?}", t.text)));
            }
            if t.index != i + 1 {
                return Err(Error::Input(format!(
                    "token {:?} has index {}, expected {}",
                    t.text,
                    t.index,
                    i + 1
                )));
            }
        }
        for e in &self.gold {
            if e.start < 1 || e.start > e.end || e.end > self.len() {
                return Err(Error::Input(format!(
                    "entity {}..{} outside sentence of length {}",
                    e.start,
                    e.end,
                    self.len()
                )));
            }
            if e.etype == NONE_TYPE || e.etype == OUTSIDE {
                return Err(Error::Schema(format!("reserved entity type {:?}", e.etype)));
            }
        }
        for (i, a) in self.gold.iter().enumerate() {
            if self.gold[i + 1..].iter().any(|b| a.overlaps(b)) {
                return Err(Error::Input(format!(
                    "overlapping gold entities at {}..{}",
                    a.start, a.end
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Dataset {
    pub split: Split,
    pub sentences: Vec<Sentence>,
    pub type_names: Vec<String>,
}

impl Dataset {
    /// Assembles a dataset, inferring type names in first-appearance order.
    pub fn from_sentences(split: Split, sentences: Vec<Sentence>) -> Result<Self> {
        let mut type_names: Vec<String> = Vec::new();
        for e in sentences.iter().flat_map(|s| &s.gold) {
            if !type_names.contains(&e.etype) {
                type_names.push(e.etype.clone());
            }
        }
        let ds = Dataset {
            split,
            sentences,
            type_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    pub fn num_entities(&self) -> usize {
        self.sentences.iter().map(|s| s.gold.len()).sum()
    }

    pub fn gold(&self) -> Vec<Vec<Entity>> {
        self.sentences.iter().map(|s| s.gold.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for name in &self.type_names {
            if name == NONE_TYPE || name == OUTSIDE {
                return Err(Error::Schema(format!("reserved type name {name:?}")));
            }
            if !seen.insert(name) {
                return Err(Error::Schema(format!("duplicate type name {name:?}")));
            }
        }
        for s in &self.sentences {
            s.validate()?;
            if let Some(e) = s.gold.iter().find(|e| !seen.contains(&e.etype)) {
                return Err(Error::Schema(format!("entity type {:?} not declared", e.etype)));
            }
        }
        Ok(())
    }
}

/// One BIO tag, decoded from a label index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bio {
    Outside,
    Begin(usize),
    Inside(usize),
}

/// The BIO token-label alphabet: `O`, then `B-X`, `I-X` per type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    labels: Vec<String>,
    type_names: Vec<String>,
}

impl LabelScheme {
    pub fn new(type_names: &[String]) -> Self {
        let mut labels = Vec::with_capacity(2 * type_names.len() + 1);
        labels.push(OUTSIDE.to_string());
        for t in type_names {
            labels.push(format!("B-{t}"));
            labels.push(format!("I-{t}"));
        }
        Self {
            labels,
            type_names: type_names.to_vec(),
        }
    }

    /// Number of entity types `m`.
    pub fn m(&self) -> usize {
        self.type_names.len()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn type_names(&self) -> &[String] {
        &self.type_names
    }

    pub fn type_id(&self, name: &str) -> Option<usize> {
        self.type_names.iter().position(|t| t == name)
    }

    pub fn label_id(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn begin(&self, type_id: usize) -> usize {
        1 + 2 * type_id
    }

    pub fn inside(&self, type_id: usize) -> usize {
        2 + 2 * type_id
    }

    pub fn decode(&self, label: usize) -> Bio {
        match label {
            0 => Bio::Outside,
            l if l % 2 == 1 => Bio::Begin((l - 1) / 2),
            l => Bio::Inside((l - 2) / 2),
        }
    }
}

/// Span-head classes: the `m` entity types followed by `None`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeSet {
    types: Vec<String>,
}

impl TypeSet {
    pub fn new(type_names: &[String]) -> Self {
        let mut types = type_names.to_vec();
        types.push(NONE_TYPE.to_string());
        Self { types }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn none_id(&self) -> usize {
        self.types.len() - 1
    }

    pub fn names(&self) -> &[String] {
        &self.types
    }

    pub fn type_id(&self, name: &str) -> Option<usize> {
        self.types[..self.none_id()].iter().position(|t| t == name)
    }
}

/// BIO label ids for a sentence's gold entities.
pub fn bio_encode(sentence: &Sentence, scheme: &LabelScheme) -> Result<Vec<usize>> {
    let mut labels = vec![0; sentence.len()];
    for e in &sentence.gold {
        let t = scheme
            .type_id(&e.etype)
            .ok_or_else(|| Error::Schema(format!("entity type {:?} not in label scheme", e.etype)))?;
        if labels[e.start - 1..e.end].iter().any(|&l| l != 0) {
            return Err(Error::Input(format!(
                "overlapping gold entity at {}..{}",
                e.start, e.end
            )));
        }
        labels[e.start - 1] = scheme.begin(t);
        for l in &mut labels[e.start..e.end] {
            *l = scheme.inside(t);
        }
    }
    Ok(labels)
}
