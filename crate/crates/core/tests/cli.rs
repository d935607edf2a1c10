//! Command-level behavior through `blner::cli::run` and the `cmd_*` functions.

use std::fs;
use std::path::{Path, PathBuf};

use blner::bundler::{load_checkpoint, predict, Hyperparams, Model, RunMode};
use blner::cli::{cmd_diagnose, run, DiagnoseArgs, OutDir};
use blner::corpus::{gen_synthetic, parse_span_json, serialize_span_json, Dataset, Entity, Sentence, Split};
use blner::evaluator::{ErrorReport, Heatmap, ScoreReport};
use blner::Error;
use tempfile::TempDir;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Self { dir };
        let c = gen_synthetic(7, 100, &["PER".to_string(), "LOC".to_string()]).unwrap();
        f.write("train.jsonl", &serialize_span_json(&c.train).unwrap());
        f.write("dev.jsonl", &serialize_span_json(&c.dev).unwrap());
        f.write("test.jsonl", &serialize_span_json(&c.test).unwrap());
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn p(&self, name: &str) -> String {
        self.path(name).display().to_string()
    }

    fn write(&self, name: &str, text: &str) {
        fs::write(self.path(name), text).unwrap();
    }

    fn read(&self, name: &str) -> String {
        fs::read_to_string(self.path(name)).unwrap()
    }

    fn run(&self, args: &[&str]) -> i32 {
        let mut full = vec!["blner".to_string()];
        full.extend(args.iter().map(|a| a.to_string()));
        run(full)
    }

    fn train(&self, out: &str, extra: &[&str]) -> i32 {
        let (t, d, o) = (self.p("train.jsonl"), self.p("dev.jsonl"), self.p(out));
        let mut args = vec!["train", "--train", &t, "--dev", &d, "--out", &o, "--dim", "16"];
        args.extend(extra);
        self.run(&args)
    }
}

fn write_entities(f: &Fixture, name: &str, sentences: &[Sentence], ents: &[Vec<Entity>]) {
    f.write(name, &blner::corpus::write_predictions(sentences, ents).unwrap());
}

fn read_score(path: &Path) -> ScoreReport {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn train_writes_checkpoint_log_and_replayable_config() {
    let f = Fixture::new();
    assert_eq!(f.train("run", &["--epochs", "3", "--mode", "bl-span"]), 0);
    let log = f.read("run/train_log.tsv");
    assert_eq!(log.lines().count(), 4);
    assert!(log.starts_with("epoch\t"));
    assert!(f.read("run/summary.tsv").contains("\nmean\t"));

    let cfg = f.p("run/config.toml");
    let replay = f.p("replay");
    assert_eq!(f.run(&["train", "--config", &cfg, "--out", &replay]), 0);
    assert_eq!(f.read("run/checkpoint.json"), f.read("replay/checkpoint.json"));
    assert_eq!(log, f.read("replay/train_log.tsv"));
}

#[test]
fn zero_epochs_saves_the_initial_model() {
    let f = Fixture::new();
    assert_eq!(f.train("run", &["--epochs", "0", "--seeds", "4"]), 0);
    let saved: Model = load_checkpoint(&f.path("run/checkpoint.json")).unwrap();
    let train = parse_span_json(&f.read("train.jsonl")).unwrap().with_split(Split::Train);
    let hp = Hyperparams {
        epochs: 0,
        seed: 4,
        dim: 16,
        ..Hyperparams::default()
    };
    assert_eq!(saved, Model::new(&train, &hp).unwrap());
    assert_eq!(f.read("run/train_log.tsv").lines().count(), 1);
}

#[test]
fn multi_seed_summary() {
    let f = Fixture::new();
    assert_eq!(f.train("multi", &["--epochs", "1", "--seeds", "1,2"]), 0);
    assert!(f.path("multi/seed-1/checkpoint.json").exists());
    assert!(f.path("multi/seed-2/train_log.tsv").exists());
    let summary = f.read("multi/summary.tsv");
    let rows: Vec<&str> = summary.lines().map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(rows, ["seed", "1", "2", "mean", "std"]);
}

#[test]
fn predict_round_trips_and_respects_modes() {
    let f = Fixture::new();
    assert_eq!(f.train("run", &["--epochs", "2", "--mode", "bl-span"]), 0);
    let ck = f.p("run/checkpoint.json");
    let (test, out) = (f.p("test.jsonl"), f.p("pred"));
    assert_eq!(f.run(&["predict", "--checkpoint", &ck, "--input", &test, "--out", &out]), 0);

    let input = parse_span_json(&f.read("test.jsonl")).unwrap();
    let written = parse_span_json(&f.read("pred/predictions.jsonl")).unwrap();
    let model: Model = load_checkpoint(&f.path("run/checkpoint.json")).unwrap();
    let expected = predict(&model, &input.sentences, RunMode::BlSpan).unwrap();
    assert_eq!(written.len(), input.len());
    for ((w, i), e) in written.sentences.iter().zip(&input.sentences).zip(&expected) {
        assert!(w.words().eq(i.words()));
        assert_eq!(&w.gold, e);
        assert!(w.gold.windows(2).all(|p| p[0].end < p[1].start));
    }

    f.write("empty.jsonl", "");
    let (empty, out2) = (f.p("empty.jsonl"), f.p("pred-empty"));
    assert_eq!(f.run(&["predict", "--checkpoint", &ck, "--input", &empty, "--out", &out2]), 0);
    assert_eq!(f.read("pred-empty/predictions.jsonl"), "");

    assert_eq!(f.train("seq", &["--epochs", "1", "--mode", "seq"]), 0);
    let seq_ck = f.p("seq/checkpoint.json");
    assert_eq!(f.run(&["predict", "--checkpoint", &seq_ck, "--input", &test, "--mode", "span", "--out", &out]), 1);
}

#[test]
fn evaluate_cases() {
    let f = Fixture::new();
    let gold = f.p("test.jsonl");
    let out = f.p("eval");
    assert_eq!(f.run(&["evaluate", "--pred", &gold, "--gold", &gold, "--out", &out]), 0);
    assert_eq!(read_score(&f.path("eval/score.json")).f1, 1.0);

    let ds = parse_span_json(&f.read("test.jsonl")).unwrap();
    write_entities(&f, "none.jsonl", &ds.sentences, &vec![Vec::new(); ds.len()]);
    let none = f.p("none.jsonl");
    assert_eq!(f.run(&["evaluate", "--pred", &none, "--gold", &gold, "--out", &out]), 0);
    assert_eq!(read_score(&f.path("eval/score.json")).f1, 0.0);
    assert!(f.read("eval/score.tsv").starts_with("TP\tFP\tFN\tP\tR\tF1\n"));

    let dev = f.p("dev.jsonl");
    assert_eq!(f.run(&["evaluate", "--pred", &dev, "--gold", &gold, "--out", &out]), 1);
    let missing = f.p("missing.jsonl");
    assert_eq!(f.run(&["evaluate", "--pred", &missing, "--gold", &gold, "--out", &out]), 2);
    assert_eq!(f.run(&["evaluate", "--bogus"]), 1);
}

fn rain() -> (Sentence, Vec<Entity>) {
    let s = Sentence::new(&["will", "it", "rain", "this", "night"], &[(3, 3, "Weather")]).unwrap();
    let g = s.gold.clone();
    (s, g)
}

#[test]
fn diagnose_reports_errors_and_needs_train() {
    let f = Fixture::new();
    let (s, gold) = rain();
    let train = Dataset::from_sentences(Split::Train, vec![s.clone()]).unwrap();
    f.write("rain-train.jsonl", &serialize_span_json(&train).unwrap());
    write_entities(&f, "gold.jsonl", std::slice::from_ref(&s), std::slice::from_ref(&gold));
    let shifted = vec![s.entity(2, 3, "Weather").unwrap()];
    write_entities(&f, "be.jsonl", std::slice::from_ref(&s), &[shifted]);

    let (be, g, t, out) = (f.p("be.jsonl"), f.p("gold.jsonl"), f.p("rain-train.jsonl"), f.p("diag"));
    assert_eq!(f.run(&["diagnose", "--pred", &be, "--gold", &g, "--train", &t, "--out", &out]), 0);
    let report: ErrorReport = serde_json::from_str(&f.read("diag/errors.json")).unwrap();
    assert_eq!(report.be_rate, 1.0);
    assert!(f.read("diag/buckets.tsv").starts_with("attribute\tbucket\t"));
    assert!(f.path("diag/profile.json").exists());

    assert_eq!(f.run(&["diagnose", "--pred", &g, "--gold", &g, "--train", &t, "--out", &out]), 0);
    let report: ErrorReport = serde_json::from_str(&f.read("diag/errors.json")).unwrap();
    assert_eq!(report, ErrorReport::default());

    let args = DiagnoseArgs {
        pred: f.path("gold.jsonl"),
        gold: f.path("gold.jsonl"),
        train: None,
        out: OutDir { out: f.path("diag2") },
    };
    match cmd_diagnose(&args) {
        Err(Error::Config(m)) => assert!(m.contains("eCon")),
        other => panic!("expected a config error, got {other:?}"),
    }
    assert!(!f.path("diag2").exists());
}

#[test]
fn compare_grid_properties() {
    let f = Fixture::new();
    let s = Sentence::new(
        &["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"],
        &[(1, 1, "X"), (3, 5, "X"), (6, 10, "Y")],
    )
    .unwrap();
    let t = Sentence::new(&["k", "l", "m"], &[(2, 2, "Y")]).unwrap();
    let sents = vec![s.clone(), t.clone()];
    let gold: Vec<Vec<Entity>> = sents.iter().map(|x| x.gold.clone()).collect();
    write_entities(&f, "gold.jsonl", &sents, &gold);
    // b misses the long entities only
    let b: Vec<Vec<Entity>> = gold.iter().map(|g| g.iter().filter(|e| e.len() < 3).cloned().collect()).collect();
    write_entities(&f, "b.jsonl", &sents, &b);

    let (g, bp, train) = (f.p("gold.jsonl"), f.p("b.jsonl"), f.p("train.jsonl"));
    let (ab, ba, aa) = (f.p("ab"), f.p("ba"), f.p("aa"));
    for (x, y, out) in [(&g, &bp, &ab), (&bp, &g, &ba), (&g, &g, &aa)] {
        assert_eq!(f.run(&["compare", "--pred-a", x, "--pred-b", y, "--gold", &g, "--train", &train, "--out", out]), 0);
    }
    let load = |d: &str| Heatmap::from_tsv(&f.read(&format!("{d}/heatmap.tsv"))).unwrap();
    let (hab, hba, haa) = (load("ab"), load("ba"), load("aa"));
    for (attr, row) in &hab.cells {
        for (bucket, v) in row {
            assert_eq!(*v, hba.cells[attr][bucket].map(|x| -x));
            assert!(haa.cells[attr][bucket].is_none_or(|x| x == 0.0));
        }
    }
    for (bucket, v) in &hab.cells[&blner::evaluator::Attribute::ELen] {
        let long = matches!(bucket, blner::evaluator::Bucket::L | blner::evaluator::Bucket::XL);
        assert_eq!(v.is_some_and(|x| x != 0.0), long, "{bucket}");
    }
    assert!(f.read("ab/heatmap.txt").contains('+'));
    assert!(f.read("ba/heatmap.txt").contains('-'));
}

#[test]
fn gen_synth_formats() {
    let f = Fixture::new();
    let out = f.p("synth");
    assert_eq!(f.run(&["gen-synth", "--sentences", "30", "--format", "conll", "--out", &out]), 0);
    let train = blner::corpus::parse_conll(&f.read("synth/train.conll")).unwrap();
    assert_eq!(train.len(), 24);
    assert_eq!(f.run(&["gen-synth", "--sentences", "0", "--out", &out]), 1);
}
