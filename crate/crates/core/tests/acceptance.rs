//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use blner::bundler::{
    bundle_gradient_equivalence, model_grad_check, prepare_batch, train, Hyperparams, LossWeights, Model, RunMode,
};
use blner::cli::{cmd_train, OutDir, Settings, TrainArgs};
use blner::corpus::{bio_encode, gen_synthetic, serialize_span_json, Dataset, Entity, LabelScheme, Sentence, Split};
use blner::encoder::GradCheckOptions;
use blner::evaluator::{attributes, bucket_report, bucketize, error_analysis, score, Attribute, Bucket, BucketTable};
use blner::linalg::Matrix;
use blner::seqdec::crf::{nll_from_scores, path_score, viterbi_from_scores};
use blner::seqdec::{combine_labels, Tagging};
use blner::spandec::{enumerate_spans, heuristic_decode, sample_negatives, Span, SpanPrediction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(clock: Instant, limit: Duration) -> Result<(), String> {
    ensure(clock.elapsed() < limit, || {
        format!("took {:.1}s, limit {}s", clock.elapsed().as_secs_f64(), limit.as_secs())
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// 1
fn span_counts() -> Outcome {
    let clock = Instant::now();
    ensure(enumerate_spans(100, 10).len() == 955, || "enumerate_spans(100, 10) != 955".into())?;
    ensure(enumerate_spans(100, 100).len() == 5050, || "enumerate_spans(100, 100) != 5050".into())?;
    for n in 1..=200usize {
        for eps in 1..=n {
            let formula = eps * (2 * n - eps + 1) / 2;
            let spans = enumerate_spans(n, eps);
            ensure(spans.len() == formula, || format!("n={n} eps={eps}: {} vs {formula}", spans.len()))?;
            if n <= 40 {
                let mut brute = BTreeSet::new();
                for i in 1..=n {
                    for j in i..=n {
                        if j - i < eps {
                            brute.insert((i, j));
                        }
                    }
                }
                let got: BTreeSet<(usize, usize)> = spans.iter().map(|s| (s.start, s.end)).collect();
                ensure(got == brute && got.len() == spans.len(), || format!("n={n} eps={eps}: span set differs"))?;
            }
        }
    }
    within(clock, Duration::from_secs(10))?;
    Ok(format!("all 20100 (n, eps) pairs in {:.2}s", clock.elapsed().as_secs_f64()))
}

fn oracle_path_score(scores: &Matrix, trans: &Matrix, path: &[usize]) -> f64 {
    let mut s = 0.0;
    let mut prev_row = 0;
    for (i, &y) in path.iter().enumerate() {
        s += trans.get(prev_row, y) + scores.get(i, y);
        prev_row = y + 1;
    }
    s
}

fn all_paths(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..l).map(move |y| {
                    let mut q = p.clone();
                    q.push(y);
                    q
                })
            })
            .collect();
    }
    out
}

// 2
fn crf_correctness() -> Outcome {
    let clock = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for k in 0..240 {
        let n = r.gen_range(1..=6);
        let l = r.gen_range(1..=5);
        let rand_matrix = |rows, cols, r: &mut ChaCha8Rng| {
            Matrix::from_rows(&(0..rows).map(|_| (0..cols).map(|_| r.gen_range(-3.0..3.0)).collect()).collect::<Vec<_>>())
        };
        let scores = rand_matrix(n, l, &mut r);
        let trans = rand_matrix(l + 1, l, &mut r);
        let paths = all_paths(n, l);
        let path_scores: Vec<f64> = paths.iter().map(|p| oracle_path_score(&scores, &trans, p)).collect();
        let max = path_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = path_scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln() + max;
        let gold = &paths[r.gen_range(0..paths.len())];
        let p_brute = (oracle_path_score(&scores, &trans, gold) - z).exp();
        let p_crf = (-nll_from_scores(&scores, &trans, gold).map_err(|e| e.to_string())?).exp();
        worst = worst.max((p_brute - p_crf).abs());
        ensure((p_brute - p_crf).abs() < 1e-9, || format!("instance {k}: p {p_crf} vs {p_brute}"))?;
        let best = viterbi_from_scores(&scores, &trans).map_err(|e| e.to_string())?;
        let vs = path_score(&scores, &trans, &best).map_err(|e| e.to_string())?;
        ensure((vs - max).abs() < 1e-9, || format!("instance {k}: viterbi {vs} vs max {max}"))?;
    }
    within(clock, Duration::from_secs(30))?;
    Ok(format!("240 instances, max probability gap {worst:.1e}"))
}

fn five_token_data() -> Dataset {
    let s = Sentence::new(&["will", "it", "rain", "this", "night"], &[(3, 3, "Weather"), (4, 5, "Date")]).unwrap();
    Dataset::from_sentences(Split::Train, vec![s]).unwrap()
}

// 3
fn gradient_fidelity() -> Outcome {
    let clock = Instant::now();
    let data = five_token_data();
    let sents: Vec<&Sentence> = data.sentences.iter().collect();
    let mut worst = 0.0f64;
    let mut checked = 0;
    for tagging in [Tagging::Softmax, Tagging::Crf] {
        for rep in ["boundary", "pooling", "hybrid"] {
            let hp = Hyperparams {
                mode: RunMode::BlSpan,
                alpha: 0.1,
                tagging,
                representation: rep.parse().unwrap(),
                ..Hyperparams::default()
            };
            let model = Model::new(&data, &hp).map_err(|e| e.to_string())?;
            let batch = prepare_batch(&model, &sents, &mut rng(3)).map_err(|e| e.to_string())?;
            let w = LossWeights::for_mode(RunMode::BlSpan, 0.1);
            let r = model_grad_check(&model, &batch, w, &GradCheckOptions::default()).map_err(|e| e.to_string())?;
            ensure(r.checked >= 200, || format!("only {} coordinates checked", r.checked))?;
            ensure(r.max_rel_error < 1e-4, || format!("{tagging:?}/{rep}: relative error {:.2e}", r.max_rel_error))?;
            worst = worst.max(r.max_rel_error);
            checked += r.checked;
        }
    }
    within(clock, Duration::from_secs(60))?;
    Ok(format!("6 configurations, {checked} coordinates, max relative error {worst:.2e}"))
}

// 4
fn loss_linearity() -> Outcome {
    let data = five_token_data();
    let sents: Vec<&Sentence> = data.sentences.iter().collect();
    let mut worst = 0.0f64;
    for tagging in [Tagging::Softmax, Tagging::Crf] {
        let hp = Hyperparams {
            tagging,
            ..Hyperparams::default()
        };
        let model = Model::new(&data, &hp).map_err(|e| e.to_string())?;
        let batch = prepare_batch(&model, &sents, &mut rng(4)).map_err(|e| e.to_string())?;
        for alpha in [0.0, 0.5, 1.0] {
            let r = bundle_gradient_equivalence(&model, &batch, alpha).map_err(|e| e.to_string())?;
            ensure(r.passed && r.max_deviation < 1e-10, || format!("{tagging:?} alpha {alpha}: {r:?}"))?;
            worst = worst.max(r.max_deviation);
        }
    }
    Ok(format!("alpha in {{0, 0.5, 1}}, max deviation {worst:.1e}"))
}

fn random_layout(r: &mut ChaCha8Rng, types: &[String]) -> (usize, Vec<(usize, usize, usize)>) {
    let n = r.gen_range(1..=30);
    let mut ents = Vec::new();
    let mut i = 1;
    while i <= n {
        if r.gen_bool(0.3) {
            let len = r.gen_range(1..=(n - i + 1).min(5));
            ents.push((i, i + len - 1, r.gen_range(0..types.len())));
            i += len;
        } else {
            i += 1;
        }
    }
    (n, ents)
}

// 5
fn bio_round_trip() -> Outcome {
    let types: Vec<String> = ["A", "B", "C", "D"].map(String::from).to_vec();
    let scheme = LabelScheme::new(&types);
    let mut r = rng(5);
    for k in 0..10_000 {
        let (n, ents) = random_layout(&mut r, &types);
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let gold: Vec<(usize, usize, &str)> = ents.iter().map(|&(s, e, t)| (s, e, types[t].as_str())).collect();
        let sentence = Sentence::new(&words, &gold).map_err(|e| e.to_string())?;
        let labels = bio_encode(&sentence, &scheme).map_err(|e| e.to_string())?;
        let back: Vec<(usize, usize, usize)> = combine_labels(&labels, &scheme)
            .into_iter()
            .map(|t| (t.start, t.end, t.type_id))
            .collect();
        ensure(back == ents, || format!("layout {k}: {ents:?} came back as {back:?}"))?;
    }
    let x = LabelScheme::new(&["X".to_string(), "Y".to_string()]);
    let repaired: Vec<(usize, usize, usize)> = combine_labels(&[x.begin(0), x.inside(1)], &x)
        .into_iter()
        .map(|t| (t.start, t.end, t.type_id))
        .collect();
    ensure(repaired == vec![(1, 1, 0), (2, 2, 1)], || format!("[B-X, I-Y] gave {repaired:?}"))?;
    Ok("10000 layouts; [B-X, I-Y] -> X@1..1, Y@2..2".into())
}

// 6
fn table_v() -> Outcome {
    use Attribute::*;
    use Bucket::*;
    let t = BucketTable::default();
    let spots = [
        (ELen, [(1.0, XS), (2.0, S), (4.0, L), (5.0, XL)]),
        (TLen, [(7.0, XS), (16.0, S), (31.0, L), (32.0, XL)]),
        (ECon, [(0.1, XS), (0.5, S), (0.9, L), (1.0, XL)]),
        (EDen, [(0.01, XS), (0.025, S), (0.05, L), (0.06, XL)]),
    ];
    for (attr, cases) in spots {
        for (v, want) in cases {
            let got = bucketize(v, attr, &t).map_err(|e| e.to_string())?;
            ensure(got == want, || format!("{attr} {v}: {got} instead of {want}"))?;
        }
    }
    Ok("16 spot values".into())
}

// 7
fn negative_sampling() -> Outcome {
    let gold = vec![Span::new(1, 1), Span::new(2, 3)];
    for pool in [0usize, 30, 950] {
        let mut all: Vec<Span> = (0..pool).map(|k| Span::new(10 + k, 10 + k)).collect();
        all.extend(&gold);
        let got = sample_negatives(&all, &gold, 100, &mut rng(pool as u64));
        ensure(got.len() == pool.min(100), || format!("|S|={pool}: drew {}", got.len()))?;
        let unique: BTreeSet<Span> = got.iter().copied().collect();
        ensure(unique.len() == got.len(), || format!("|S|={pool}: duplicates"))?;
        ensure(got.iter().all(|s| !gold.contains(s)), || format!("|S|={pool}: gold span sampled"))?;
    }
    let pool = 333;
    let all: Vec<Span> = (1..=pool).map(|k| Span::new(k, k)).collect();
    let mut hits = vec![0usize; pool];
    let mut r = rng(77);
    let draws = 10_000;
    for _ in 0..draws {
        for s in sample_negatives(&all, &[], 100, &mut r) {
            hits[s.start - 1] += 1;
        }
    }
    let expected = 100.0 / pool as f64;
    let worst = hits
        .iter()
        .map(|&h| (h as f64 / draws as f64 - expected).abs())
        .fold(0.0f64, f64::max);
    ensure(worst <= 0.02, || format!("inclusion frequency off by {worst:.4}"))?;
    Ok(format!("inclusion frequency {expected:.4}, worst deviation {worst:.4} over {draws} draws"))
}

// 8
fn heuristic_decoding() -> Outcome {
    let mut r = rng(8);
    for k in 0..1000 {
        let n = r.gen_range(1..=15);
        let classes = r.gen_range(2..=5);
        let mut preds = Vec::new();
        for s in enumerate_spans(n, r.gen_range(1..=6)) {
            if !r.gen_bool(0.6) {
                continue;
            }
            let logits: Vec<f64> = (0..classes).map(|_| r.gen_range(-2.0..2.0)).collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = logits.iter().map(|v| (v - m).exp()).sum();
            preds.push(SpanPrediction::from_probs(s, logits.iter().map(|v| (v - m).exp() / z).collect()));
        }
        let kept = heuristic_decode(&preds);
        for (a, b) in kept.iter().zip(kept.iter().skip(1)) {
            ensure(a.end < b.start, || format!("set {k}: kept spans overlap"))?;
        }
        for p in preds.iter().filter(|p| p.is_entity()) {
            let is_kept = kept.iter().any(|t| t.start == p.span.start && t.end == p.span.end);
            if is_kept {
                continue;
            }
            let dominated = kept.iter().any(|t| {
                let q = preds.iter().find(|q| q.span.start == t.start && q.span.end == t.end).unwrap();
                t.start <= p.span.end && p.span.start <= t.end && q.prob >= p.prob
            });
            ensure(dominated, || format!("set {k}: dropped span {:?} is not dominated", p.span))?;
        }
    }
    Ok("1000 randomized prediction sets".into())
}

fn ent(start: usize, end: usize, etype: &str) -> Entity {
    Entity {
        start,
        end,
        etype: etype.to_string(),
        surface: String::new(),
    }
}

// 9
fn metric_suite() -> Outcome {
    let gold: Vec<Vec<Entity>> = (0..10).map(|i| vec![ent(1, 1, if i < 5 { "A" } else { "B" })]).collect();
    let mut pred = gold.clone();
    pred[0][0].etype = "B".into();
    pred[1][0].end = 2;
    let r = score(&pred, &gold).map_err(|e| e.to_string())?;
    ensure((r.precision - 0.8).abs() < 1e-12 && (r.recall - 0.8).abs() < 1e-12 && (r.f1 - 0.8).abs() < 1e-12, || {
        format!("8-of-10 case gave {r:?}")
    })?;
    ensure(score(&gold, &gold).unwrap().f1 == 1.0, || "perfect case F1 != 1".into())?;
    let empty: Vec<Vec<Entity>> = vec![Vec::new(); 10];
    let e = score(&empty, &gold).unwrap();
    ensure(e.precision == 0.0 && e.recall == 0.0 && e.f1 == 0.0, || format!("empty case gave {e:?}"))?;

    let c = gen_synthetic(9, 200, &["P".to_string(), "Q".to_string()]).map_err(|e| e.to_string())?;
    let gold = c.test.gold();
    let mut r9 = rng(9);
    let mut pred: Vec<Vec<Entity>> = Vec::new();
    for g in &gold {
        let mut p = Vec::new();
        for e in g {
            if r9.gen_bool(0.7) {
                p.push(if r9.gen_bool(0.2) { ent(e.start, e.end, "Z") } else { e.clone() });
            }
        }
        pred.push(p);
    }
    let holistic = score(&pred, &gold).unwrap();
    let profile = attributes(&c.test, &c.train).map_err(|e| e.to_string())?;
    let report = bucket_report(&pred, &gold, &profile).map_err(|e| e.to_string())?;
    for attr in [Attribute::TLen, Attribute::EDen] {
        let t = report.total(attr);
        ensure((t.tp, t.fp, t.fn_) == (holistic.tp, holistic.fp, holistic.fn_), || {
            format!("{attr} buckets sum to {t:?}, holistic {holistic:?}")
        })?;
    }

    let te = error_analysis(&[vec![ent(3, 3, "Date")]], &[vec![ent(3, 3, "Weather")]]).unwrap();
    ensure(te.fp == 1 && te.fn_ == 1 && te.type_errors == 2 && te.te_rate == 1.0, || format!("TE case {te:?}"))?;
    let be = error_analysis(&[vec![ent(2, 3, "Weather")]], &[vec![ent(3, 3, "Weather")]]).unwrap();
    ensure(be.boundary_errors == 2 && be.be_rate == 1.0, || format!("BE case {be:?}"))?;
    Ok("0.8 / perfect / empty cases, bucket sums, TE-Rate 1.0, BE-Rate 1.0".into())
}

// 10
fn end_to_end() -> Outcome {
    let clock = Instant::now();
    let types: Vec<String> = ["PER", "LOC", "ORG", "MISC"].map(String::from).to_vec();
    let c = gen_synthetic(7, 500, &types).map_err(|e| e.to_string())?;
    let mut f1 = Vec::new();
    for mode in RunMode::ALL {
        let hp = Hyperparams {
            mode,
            epochs: 20,
            ..Hyperparams::default()
        };
        let t = train(&c.train, &c.dev, &hp).map_err(|e| e.to_string())?;
        let kept = t.history[t.best_epoch.unwrap() - 1].dev.f1;
        let recomputed = score(&t.model.predict(&c.dev.sentences).unwrap(), &c.dev.gold()).unwrap().f1;
        ensure(kept == recomputed, || format!("{mode}: logged {kept}, recomputed {recomputed}"))?;
        ensure(kept >= 0.95, || format!("{mode}: dev F1 {kept:.4}"))?;
        f1.push((mode, kept));
    }
    within(clock, Duration::from_secs(600))?;
    let get = |m: RunMode| f1.iter().find(|(x, _)| *x == m).unwrap().1;
    ensure(get(RunMode::BlSeq) >= get(RunMode::Seq) - 0.02, || "bl-seq trails seq by more than 0.02".into())?;
    ensure(get(RunMode::BlSpan) >= get(RunMode::Span) - 0.02, || "bl-span trails span by more than 0.02".into())?;
    let summary: Vec<String> = f1.iter().map(|(m, f)| format!("{m} {f:.4}")).collect();
    Ok(format!("dev F1 {} in {:.1}s", summary.join(", "), clock.elapsed().as_secs_f64()))
}

fn digest(path: &Path) -> String {
    hex::encode(Sha256::digest(fs::read(path).unwrap()))
}

// 11
fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c = gen_synthetic(7, 120, &["PER".to_string(), "LOC".to_string()]).map_err(|e| e.to_string())?;
    let train_path = dir.path().join("train.jsonl");
    let dev_path = dir.path().join("dev.jsonl");
    fs::write(&train_path, serialize_span_json(&c.train).unwrap()).unwrap();
    fs::write(&dev_path, serialize_span_json(&c.dev).unwrap()).unwrap();
    let run = |name: &str| -> Result<(String, String), String> {
        let out = dir.path().join(name);
        let args = TrainArgs {
            config: None,
            settings: Settings {
                train: Some(train_path.clone()),
                dev: Some(dev_path.clone()),
                seeds: Some(vec![13]),
                epochs: Some(3),
                mode: Some(RunMode::BlSpan),
                ..Settings::default()
            },
            out: OutDir { out: out.clone() },
        };
        cmd_train(&args).map_err(|e| e.to_string())?;
        Ok((digest(&out.join("checkpoint.json")), digest(&out.join("train_log.tsv"))))
    };
    let a = run("a")?;
    let b = run("b")?;
    ensure(a == b, || format!("digests differ: {a:?} vs {b:?}"))?;
    Ok(format!("checkpoint sha256 {}…", &a.0[..16]))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("span-count identities", span_counts),
        ("CRF correctness", crf_correctness),
        ("gradient fidelity", gradient_fidelity),
        ("bundled-loss linearity", loss_linearity),
        ("BIO round trip", bio_round_trip),
        ("bucket table conformance", table_v),
        ("negative sampling", negative_sampling),
        ("heuristic decoding", heuristic_decoding),
        ("metric suite", metric_suite),
        ("end-to-end training", end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
