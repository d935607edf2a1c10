//! Reads a CoNLL snippet, repairs an illegal tag sequence, encodes BIO labels,
//! converts to span-JSON, and measures OOV density against a training split.

use blner::corpus::{bio_encode, oov_density, parse_conll, parse_span_json, serialize_span_json, LabelScheme};

const TRAIN: &str = "\
will O
it O
rain B-Weather
this B-Date
night I-Date

snow B-Weather
tomorrow B-Date
";

// `I-Date` after `B-Weather` is illegal; the reader closes the Weather entity
// and opens a new Date one.
const TEST: &str = "\
-DOCSTART- O

does O
it O
hail B-Weather
tonight I-Date
";

fn main() -> blner::Result<()> {
    env_logger::init();
    let train = parse_conll(TRAIN)?;
    let test = parse_conll(TEST)?;
    println!("types: {:?}", train.type_names);

    let scheme = LabelScheme::new(&train.type_names);
    for s in &train.sentences {
        let labels: Vec<&str> = bio_encode(s, &scheme)?
            .into_iter()
            .map(|l| scheme.labels()[l].as_str())
            .collect();
        println!("{:<28} {:?}", s.words().collect::<Vec<_>>().join(" "), labels);
    }
    for e in &test.sentences[0].gold {
        println!("repaired test entity: {} [{}..{}] {}", e.surface, e.start, e.end, e.etype);
    }

    let json = serialize_span_json(&train)?;
    print!("{json}");
    assert_eq!(parse_span_json(&json)?.sentences, train.sentences);
    println!("OOV density of test vs train: {:.3}", oov_density(&test, &train)?);
    Ok(())
}
