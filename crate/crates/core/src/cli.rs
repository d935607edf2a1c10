//! Command-line interface: argument parsing, config resolution, and the
//! file-level commands behind the `blner` binary.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use crate::bundler::{predict, train, Checkpoint, EpochLog, Hyperparams, Model, RunMode};
use crate::corpus::{
    gen_synthetic, parse_conll, parse_span_json, serialize_conll, serialize_span_json, write_predictions, Dataset,
    Entity, Split,
};
use crate::encoder::EncoderParams;
use crate::error::{Error, Result};
use crate::evaluator::{attributes, bucket_report, error_analysis, heatmap_delta, score, ScoreReport};
use crate::seqdec::Tagging;
use crate::spandec::Representation;

pub const OUTPUT_ROOT_ENV: &str = "BLNER_OUTPUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "blner", version, about = "Bundled sequence and span NER: train, predict, evaluate, diagnose")]
pub struct Cli {
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model per seed and write checkpoints and logs.
    Train(TrainArgs),
    /// Write span-JSON predictions for an input corpus.
    Predict(PredictArgs),
    /// Micro precision, recall and F1 of predictions against gold.
    Evaluate(EvaluateArgs),
    /// Bucket-wise scores and the boundary/type error report.
    Diagnose(DiagnoseArgs),
    /// Bucket-wise F1 differences between two prediction files.
    Compare(CompareArgs),
    /// Generate a synthetic train/dev/test corpus.
    GenSynth(GenSynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct OutDir {
    /// Output directory.
    #[arg(long, env = OUTPUT_ROOT_ENV, default_value = "blner-out")]
    pub out: PathBuf,
}

/// Flat run settings. Every key may come from the config file or a flag; flags win.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Training corpus (.conll/.bio/.txt for CoNLL, anything else span-JSON).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    /// Optional test corpus scored with each kept model.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    /// Comma-separated seeds; one run per seed.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<RunMode>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub neg_cap: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tagging: Option<Tagging>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub representation: Option<Representation>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub len_dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epochs: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lr: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_scale: Option<f64>,
}

macro_rules! overlay {
    ($base:expr, $top:expr; $($f:ident),*) => {
        Settings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl Settings {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("config file: {e}")))
    }

    /// Field-wise `top` over `self`.
    pub fn overlay(self, top: Settings) -> Settings {
        overlay!(self, top; train, dev, test, seeds, mode, alpha, threshold, neg_cap, tagging, representation,
            len_dim, epochs, batch_size, lr, warmup, weight_decay, dim, window, init_scale)
    }

    /// Hyperparameters for the first seed, with defaults for anything unset.
    pub fn hyperparams(&self) -> Result<Hyperparams> {
        let d = Hyperparams::default();
        let hp = Hyperparams {
            mode: self.mode.unwrap_or(d.mode),
            alpha: self.alpha.unwrap_or(d.alpha),
            threshold: self.threshold.unwrap_or(d.threshold),
            neg_cap: self.neg_cap.unwrap_or(d.neg_cap),
            tagging: self.tagging.unwrap_or(d.tagging),
            representation: self.representation.unwrap_or(d.representation),
            len_dim: self.len_dim.unwrap_or(d.len_dim),
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            warmup: self.warmup.unwrap_or(d.warmup),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            seed: self.seeds().first().copied().unwrap_or(d.seed),
            dim: self.dim.unwrap_or(d.dim),
            window: self.window.unwrap_or(d.window),
            init_scale: self.init_scale.unwrap_or(d.init_scale),
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![Hyperparams::default().seed])
    }

    /// Every key filled in, for the resolved-config echo.
    pub fn resolved(&self) -> Result<Settings> {
        let hp = self.hyperparams()?;
        Ok(Settings {
            train: self.train.clone(),
            dev: self.dev.clone(),
            test: self.test.clone(),
            seeds: Some(self.seeds()),
            mode: Some(hp.mode),
            alpha: Some(hp.alpha),
            threshold: Some(hp.threshold),
            neg_cap: Some(hp.neg_cap),
            tagging: Some(hp.tagging),
            representation: Some(hp.representation),
            len_dim: Some(hp.len_dim),
            epochs: Some(hp.epochs),
            batch_size: Some(hp.batch_size),
            lr: Some(hp.lr),
            warmup: Some(hp.warmup),
            weight_decay: Some(hp.weight_decay),
            dim: Some(hp.dim),
            window: Some(hp.window),
            init_scale: Some(hp.init_scale),
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Flat TOML file whose keys match the flags below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    /// Defaults to the mode the checkpoint was trained in.
    #[arg(long)]
    pub mode: Option<RunMode>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    /// Training corpus; entity consistency is computed from it.
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub pred_a: PathBuf,
    #[arg(long)]
    pub pred_b: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorpusFormat {
    Json,
    Conll,
}

#[derive(Debug, Clone, Args)]
pub struct GenSynthArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 500)]
    pub sentences: usize,
    #[arg(long, value_delimiter = ',', default_value = "PER,LOC,ORG,MISC")]
    pub types: Vec<String>,
    #[arg(long, value_enum, default_value_t = CorpusFormat::Json)]
    pub format: CorpusFormat,
    #[command(flatten)]
    pub out: OutDir,
}

/// Process exit status for an error: 2 for I/O failures, 1 for everything else.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io(_) => 2,
        _ => 1,
    }
}

/// Parses `args`, runs the command, prints its report, and returns the exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(cli.command) {
        Ok(report) => {
            print!("{report}");
            0
        }
        Err(e) => {
            eprintln!("blner: {e}");
            exit_code(&e)
        }
    }
}

/// Runs a command and returns the text it prints on success.
pub fn execute(command: Command) -> Result<String> {
    match command {
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Diagnose(a) => cmd_diagnose(&a),
        Command::Compare(a) => cmd_compare(&a),
        Command::GenSynth(a) => cmd_gen_synth(&a),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn is_conll(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("conll" | "bio" | "txt")
    )
}

/// Reads a corpus, choosing CoNLL or span-JSON by file extension.
pub fn read_dataset(path: &Path, split: Split) -> Result<Dataset> {
    let text = read_text(path)?;
    let ds = if is_conll(path) {
        parse_conll(&text)?
    } else {
        parse_span_json(&text)?
    };
    Ok(ds.with_split(split))
}

/// Writes through a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Writes all files only after every one of them has been produced.
fn write_all(files: &[(PathBuf, String)]) -> Result<()> {
    for (p, c) in files {
        write_atomic(p, c)?;
    }
    Ok(())
}

/// Checks that predictions and gold cover the same token sequences.
fn check_alignment(pred: &Dataset, gold: &Dataset, what: &str) -> Result<()> {
    if pred.len() != gold.len() {
        return Err(Error::Alignment(format!(
            "{what} has {} sentences, gold has {}",
            pred.len(),
            gold.len()
        )));
    }
    for (i, (p, g)) in pred.sentences.iter().zip(&gold.sentences).enumerate() {
        if !p.words().eq(g.words()) {
            return Err(Error::Alignment(format!("{what} sentence {} has different tokens from gold", i + 1)));
        }
    }
    Ok(())
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summary_tsv(rows: &[(u64, ScoreReport, Option<ScoreReport>)]) -> String {
    let with_test = rows.iter().all(|r| r.2.is_some());
    let mut out = String::from("seed\tdev_P\tdev_R\tdev_F1");
    if with_test {
        out.push_str("\ttest_P\ttest_R\ttest_F1");
    }
    out.push('\n');
    let metrics = |d: &ScoreReport, t: &Option<ScoreReport>| -> Vec<f64> {
        let mut v = vec![d.precision, d.recall, d.f1];
        if let (true, Some(t)) = (with_test, t) {
            v.extend([t.precision, t.recall, t.f1]);
        }
        v
    };
    let table: Vec<Vec<f64>> = rows.iter().map(|(_, d, t)| metrics(d, t)).collect();
    for ((seed, _, _), vals) in rows.iter().zip(&table) {
        let cells: Vec<String> = vals.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{seed}\t{}", cells.join("\t")).expect("write to string");
    }
    let cols = table[0].len();
    let stats: Vec<(f64, f64)> = (0..cols)
        .map(|c| mean_std(&table.iter().map(|r| r[c]).collect::<Vec<_>>()))
        .collect();
    let mean: Vec<String> = stats.iter().map(|s| format!("{:.6}", s.0)).collect();
    let std: Vec<String> = stats.iter().map(|s| format!("{:.6}", s.1)).collect();
    writeln!(out, "mean\t{}", mean.join("\t")).expect("write to string");
    writeln!(out, "std\t{}", std.join("\t")).expect("write to string");
    out
}

/// Trains one model per seed. A single seed writes `checkpoint.json`,
/// `train_log.tsv` and `config.toml` into the output directory; several
/// seeds write them under `seed-<s>/`. `summary.tsv` holds the kept
/// models' dev (and test) scores with their mean and standard deviation.
pub fn cmd_train(args: &TrainArgs) -> Result<String> {
    let base = match &args.config {
        Some(p) => Settings::from_toml(&read_text(p)?)?,
        None => Settings::default(),
    };
    let settings = base.overlay(args.settings.clone());
    let hp0 = settings.hyperparams()?;
    let seeds = settings.seeds();
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    let train_path = settings
        .train
        .as_ref()
        .ok_or_else(|| Error::Config("no training corpus given (--train or `train` in the config)".into()))?;
    let dev_path = settings
        .dev
        .as_ref()
        .ok_or_else(|| Error::Config("no dev corpus given (--dev or `dev` in the config)".into()))?;
    let train_ds = read_dataset(train_path, Split::Train)?;
    let dev_ds = read_dataset(dev_path, Split::Dev)?;
    let test_ds = settings.test.as_ref().map(|p| read_dataset(p, Split::Test)).transpose()?;

    let out = &args.out.out;
    let mut files = Vec::new();
    let mut rows = Vec::new();
    for &seed in &seeds {
        let hp = Hyperparams { seed, ..hp0.clone() };
        info!("training seed {seed} in {} mode", hp.mode);
        let trained = train(&train_ds, &dev_ds, &hp)?;
        let dir = if seeds.len() == 1 {
            out.clone()
        } else {
            out.join(format!("seed-{seed}"))
        };
        let dev_report = match trained.best_epoch {
            Some(e) => trained.history[e - 1].dev,
            None => score(&trained.model.predict(&dev_ds.sentences)?, &dev_ds.gold())?,
        };
        let test_report = test_ds
            .as_ref()
            .map(|t| score(&trained.model.predict(&t.sentences)?, &t.gold()))
            .transpose()?;
        let run_settings = Settings {
            seeds: Some(vec![seed]),
            ..settings.resolved()?
        };
        files.push((dir.join("checkpoint.json"), Checkpoint::new(trained.model).to_json()?));
        files.push((dir.join("train_log.tsv"), EpochLog::to_tsv(&trained.history)));
        files.push((dir.join("config.toml"), run_settings.to_toml()?));
        rows.push((seed, dev_report, test_report));
    }
    if seeds.len() > 1 {
        files.push((out.join("config.toml"), settings.resolved()?.to_toml()?));
    }
    let summary = summary_tsv(&rows);
    files.push((out.join("summary.tsv"), summary.clone()));
    write_all(&files)?;
    Ok(summary)
}

/// Writes `predictions.jsonl`, one span-JSON record per input sentence.
pub fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let ck: Checkpoint<EncoderParams> = Checkpoint::from_json(&read_text(&args.checkpoint)?)?;
    let model: Model = ck.model;
    let mode = args.mode.unwrap_or(model.hp.mode);
    let input = read_dataset(&args.input, Split::Test)?;
    let pred = predict(&model, &input.sentences, mode)?;
    let path = args.out.out.join("predictions.jsonl");
    write_atomic(&path, &write_predictions(&input.sentences, &pred)?)?;
    let n: usize = pred.iter().map(Vec::len).sum();
    Ok(format!(
        "{} entities over {} sentences -> {}\n",
        n,
        pred.len(),
        path.display()
    ))
}

/// Prediction and gold entity lists, after checking the files line up.
fn load_pair(pred: &Path, gold: &Path, what: &str) -> Result<(Vec<Vec<Entity>>, Dataset)> {
    let p = read_dataset(pred, Split::Test)?;
    let g = read_dataset(gold, Split::Test)?;
    check_alignment(&p, &g, what)?;
    Ok((p.gold(), g))
}

/// Writes `score.tsv` and `score.json`.
pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<String> {
    let (pred, gold) = load_pair(&args.pred, &args.gold, "predictions")?;
    let report = score(&pred, &gold.gold())?;
    let tsv = format!("{}\n{}\n", ScoreReport::TSV_HEADER, report.tsv_fields());
    let out = &args.out.out;
    write_all(&[
        (out.join("score.tsv"), tsv.clone()),
        (out.join("score.json"), serde_json::to_string_pretty(&report)?),
    ])?;
    Ok(tsv)
}

fn require_train(train: &Option<PathBuf>) -> Result<Dataset> {
    let path = train.as_ref().ok_or_else(|| {
        Error::Config("--train is required: entity consistency (eCon) is computed from the training corpus".into())
    })?;
    read_dataset(path, Split::Train)
}

/// Writes `profile.json`, `buckets.tsv`, `buckets.json`, `errors.tsv` and `errors.json`.
pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<String> {
    let train_ds = require_train(&args.train)?;
    let (pred, gold) = load_pair(&args.pred, &args.gold, "predictions")?;
    let profile = attributes(&gold, &train_ds)?;
    let gold_e = gold.gold();
    let buckets = bucket_report(&pred, &gold_e, &profile)?;
    let errors = error_analysis(&pred, &gold_e)?;
    let out = &args.out.out;
    write_all(&[
        (out.join("profile.json"), serde_json::to_string_pretty(&profile)?),
        (out.join("buckets.tsv"), buckets.to_tsv()),
        (out.join("buckets.json"), serde_json::to_string_pretty(&buckets)?),
        (out.join("errors.tsv"), errors.to_tsv()),
        (out.join("errors.json"), serde_json::to_string_pretty(&errors)?),
    ])?;
    Ok(format!("{}\n{}", buckets.to_tsv(), errors.to_tsv()))
}

/// Writes `heatmap.tsv`, `heatmap.json` and the text grid `heatmap.txt` (a minus b).
pub fn cmd_compare(args: &CompareArgs) -> Result<String> {
    let train_ds = require_train(&args.train)?;
    let (pred_a, gold) = load_pair(&args.pred_a, &args.gold, "pred-a")?;
    let (pred_b, _) = load_pair(&args.pred_b, &args.gold, "pred-b")?;
    let profile = attributes(&gold, &train_ds)?;
    let gold_e = gold.gold();
    let a = bucket_report(&pred_a, &gold_e, &profile)?;
    let b = bucket_report(&pred_b, &gold_e, &profile)?;
    let heat = heatmap_delta(&a, &b)?;
    let grid = heat.to_grid();
    let out = &args.out.out;
    write_all(&[
        (out.join("heatmap.tsv"), heat.to_tsv()),
        (out.join("heatmap.json"), serde_json::to_string_pretty(&heat)?),
        (out.join("heatmap.txt"), grid.clone()),
    ])?;
    Ok(grid)
}

/// Writes `train`, `dev` and `test` files in the chosen format.
pub fn cmd_gen_synth(args: &GenSynthArgs) -> Result<String> {
    let corpus = gen_synthetic(args.seed, args.sentences, &args.types)?;
    let (ext, ser): (&str, fn(&Dataset) -> Result<String>) = match args.format {
        CorpusFormat::Json => ("jsonl", serialize_span_json),
        CorpusFormat::Conll => ("conll", serialize_conll),
    };
    let out = &args.out.out;
    let mut files = Vec::new();
    let mut report = String::new();
    for ds in [&corpus.train, &corpus.dev, &corpus.test] {
        let path = out.join(format!("{}.{ext}", ds.split));
        writeln!(report, "{}\t{} sentences\t{}", ds.split, ds.len(), path.display()).expect("write to string");
        files.push((path, ser(ds)?));
    }
    write_all(&files)?;
    Ok(report)
}
