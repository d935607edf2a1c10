use std::fmt::Write as _;

use log::warn;

use super::{bio_encode, Dataset, LabelScheme, Sentence, Split, Token};
use crate::error::{Error, Result};
use crate::seqdec::{combine_labels, illegal_positions};

enum Tag<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

fn parse_tag(label: &str) -> Option<Tag<'_>> {
    if label == "O" {
        return Some(Tag::Outside);
    }
    let (prefix, name) = label.split_once('-')?;
    if name.is_empty() {
        return None;
    }
    match prefix {
        "B" => Some(Tag::Begin(name)),
        "I" => Some(Tag::Inside(name)),
        _ => None,
    }
}

struct RawSentence<'a> {
    first_line: usize,
    words: Vec<&'a str>,
    tags: Vec<Tag<'a>>,
}

/// Reads two-column `token label` lines with blank-line sentence breaks.
///
/// Type names are collected in order of first appearance. Illegal BIO
/// transitions (an `I-X` with no open `X`) are repaired by starting a new
/// entity and reported through `log::warn!`.
pub fn parse_conll(text: &str) -> Result<Dataset> {
    let mut raw: Vec<RawSentence<'_>> = Vec::new();
    let mut current: Option<RawSentence<'_>> = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            raw.extend(current.take());
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 columns, found {}", cols.len()),
            });
        }
        if cols[0] == "-DOCSTART-" {
            continue;
        }
        let tag = parse_tag(cols[1]).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("unrecognized BIO label {:?}", cols[1]),
        })?;
        let sent = current.get_or_insert_with(|| RawSentence {
            first_line: line_no,
            words: Vec::new(),
            tags: Vec::new(),
        });
        sent.words.push(cols[0]);
        sent.tags.push(tag);
    }
    raw.extend(current);

    let mut type_names: Vec<String> = Vec::new();
    for tag in raw.iter().flat_map(|s| &s.tags) {
        if let Tag::Begin(name) | Tag::Inside(name) = tag {
            if !type_names.iter().any(|t| t == name) {
                type_names.push(name.to_string());
            }
        }
    }
    let scheme = LabelScheme::new(&type_names);

    let mut sentences = Vec::with_capacity(raw.len());
    for r in raw {
        let labels: Vec<usize> = r
            .tags
            .iter()
            .map(|tag| match tag {
                Tag::Outside => 0,
                Tag::Begin(n) => scheme.begin(scheme.type_id(n).expect("collected")),
                Tag::Inside(n) => scheme.inside(scheme.type_id(n).expect("collected")),
            })
            .collect();
        for pos in illegal_positions(&labels, &scheme) {
            warn!(
                "line {}: stray {} repaired as entity start",
                r.first_line + pos - 1,
                scheme.labels()[labels[pos - 1]]
            );
        }
        let tokens = r
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| Token {
                text: w.to_string(),
                index: i + 1,
            })
            .collect();
        let mut sentence = Sentence {
            tokens,
            gold: Vec::new(),
        };
        sentence.gold = sentence.entities_from(&combine_labels(&labels, &scheme), &type_names);
        sentences.push(sentence);
    }

    let ds = Dataset {
        split: Split::Train,
        sentences,
        type_names,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes a dataset back as two-column BIO text.
pub fn serialize_conll(dataset: &Dataset) -> Result<String> {
    let scheme = LabelScheme::new(&dataset.type_names);
    let mut out = String::new();
    for (i, s) in dataset.sentences.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let labels = bio_encode(s, &scheme)?;
        for (tok, l) in s.tokens.iter().zip(labels) {
            writeln!(out, "{} {}", tok.text, scheme.labels()[l]).expect("write to string");
        }
    }
    Ok(out)
}
