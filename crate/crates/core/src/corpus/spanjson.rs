//! One JSON object per line: `{"tokens":[...],"entities":[{"start":1,"end":2,"type":"X"}]}`.

use serde::{Deserialize, Serialize};

use super::{Dataset, Entity, Sentence, Split};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct SpanRecord {
    tokens: Vec<String>,
    entities: Vec<SpanEntity>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SpanEntity {
    start: usize,
    end: usize,
    #[serde(rename = "type")]
    etype: String,
}

pub fn parse_span_json(text: &str) -> Result<Dataset> {
    let mut sentences = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: SpanRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let gold: Vec<(usize, usize, &str)> = record
            .entities
            .iter()
            .map(|e| (e.start, e.end, e.etype.as_str()))
            .collect();
        let sentence = Sentence::new(&record.tokens, &gold).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        sentences.push(sentence);
    }
    Dataset::from_sentences(Split::Train, sentences)
}

fn record_line(sentence: &Sentence, entities: &[Entity]) -> Result<String> {
    let record = SpanRecord {
        tokens: sentence.words().map(str::to_string).collect(),
        entities: entities
            .iter()
            .map(|e| SpanEntity {
                start: e.start,
                end: e.end,
                etype: e.etype.clone(),
            })
            .collect(),
    };
    Ok(serde_json::to_string(&record)?)
}

pub fn serialize_span_json(dataset: &Dataset) -> Result<String> {
    let mut out = String::new();
    for s in &dataset.sentences {
        out.push_str(&record_line(s, &s.gold)?);
        out.push('\n');
    }
    Ok(out)
}

/// Emits each sentence's tokens with `predictions` in place of its gold.
pub fn write_predictions(sentences: &[Sentence], predictions: &[Vec<Entity>]) -> Result<String> {
    if sentences.len() != predictions.len() {
        return Err(Error::Input(format!(
            "{} sentences but {} prediction lists",
            sentences.len(),
            predictions.len()
        )));
    }
    let mut out = String::new();
    for (s, p) in sentences.iter().zip(predictions) {
        out.push_str(&record_line(s, p)?);
        out.push('\n');
    }
    Ok(out)
}
