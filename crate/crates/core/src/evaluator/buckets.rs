//! Attribute functions, the XS/S/L/XL interval table, and bucket-wise scores.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{check_aligned, match_sentence, ScoreReport};
use crate::corpus::{Dataset, Entity};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Attribute {
    /// Entity length in tokens.
    #[serde(rename = "eLen")]
    ELen,
    /// Sentence length in tokens.
    #[serde(rename = "tLen")]
    TLen,
    /// Share of the entity's surface string labeled with its type in training.
    #[serde(rename = "eCon")]
    ECon,
    /// Gold entities per token of the sentence.
    #[serde(rename = "eDen")]
    EDen,
}

impl Attribute {
    pub const ALL: [Attribute; 4] = [Attribute::ELen, Attribute::TLen, Attribute::ECon, Attribute::EDen];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::ELen => "eLen",
            Attribute::TLen => "tLen",
            Attribute::ECon => "eCon",
            Attribute::EDen => "eDen",
        }
    }

    pub fn is_entity_level(self) -> bool {
        matches!(self, Attribute::ELen | Attribute::ECon)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Table(format!("unknown attribute {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    XS,
    S,
    L,
    XL,
}

impl Bucket {
    pub const ALL: [Bucket; 4] = [Bucket::XS, Bucket::S, Bucket::L, Bucket::XL];

    pub fn name(self) -> &'static str {
        match self {
            Bucket::XS => "XS",
            Bucket::S => "S",
            Bucket::L => "L",
            Bucket::XL => "XL",
        }
    }
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.name())
    }
}

impl FromStr for Bucket {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Bucket::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::Table(format!("unknown bucket {s:?}")))
    }
}

/// Real interval with independently open or closed ends; `hi = None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub lo_closed: bool,
    pub hi: Option<f64>,
    pub hi_closed: bool,
}

impl Interval {
    pub const fn closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            lo_closed: true,
            hi: Some(hi),
            hi_closed: true,
        }
    }

    /// `(lo, hi]`
    pub const fn open_closed(lo: f64, hi: f64) -> Self {
        Self {
            lo,
            lo_closed: false,
            hi: Some(hi),
            hi_closed: true,
        }
    }

    /// `[lo, ∞)`
    pub const fn at_least(lo: f64) -> Self {
        Self {
            lo,
            lo_closed: true,
            hi: None,
            hi_closed: false,
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        let above = if self.lo_closed { v >= self.lo } else { v > self.lo };
        let below = match self.hi {
            None => true,
            Some(hi) if self.hi_closed => v <= hi,
            Some(hi) => v < hi,
        };
        above && below
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_closed { '[' } else { '(' };
        match self.hi {
            Some(hi) if hi == self.lo => write!(f, "[{}]", self.lo),
            Some(hi) => write!(f, "{open}{}, {hi}{}", self.lo, if self.hi_closed { ']' } else { ')' }),
            None => write!(f, "{open}{}, )", self.lo),
        }
    }
}

/// XS/S/L/XL intervals for each attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketTable {
    pub intervals: BTreeMap<Attribute, [Interval; 4]>,
}

impl Default for BucketTable {
    /// The published intervals.
    fn default() -> Self {
        let intervals = BTreeMap::from([
            (
                Attribute::ELen,
                [
                    Interval::closed(1.0, 1.0),
                    Interval::closed(2.0, 2.0),
                    Interval::closed(3.0, 4.0),
                    Interval::at_least(5.0),
                ],
            ),
            (
                Attribute::TLen,
                [
                    Interval::closed(1.0, 7.0),
                    Interval::closed(8.0, 16.0),
                    Interval::closed(17.0, 31.0),
                    Interval::at_least(32.0),
                ],
            ),
            (
                Attribute::ECon,
                [
                    Interval::closed(0.0, 0.1),
                    Interval::open_closed(0.1, 0.5),
                    Interval::open_closed(0.5, 0.9),
                    Interval::open_closed(0.9, 1.0),
                ],
            ),
            (
                Attribute::EDen,
                [
                    Interval::closed(0.0, 0.01),
                    Interval::open_closed(0.01, 0.025),
                    Interval::open_closed(0.025, 0.05),
                    Interval::open_closed(0.05, 1.0),
                ],
            ),
        ]);
        Self { intervals }
    }
}

/// Bucket whose interval holds `value`; earlier buckets win shared endpoints.
pub fn bucketize(value: f64, attribute: Attribute, table: &BucketTable) -> Result<Bucket> {
    let row = table
        .intervals
        .get(&attribute)
        .ok_or_else(|| Error::Table(format!("no intervals for {attribute}")))?;
    row.iter()
        .zip(Bucket::ALL)
        .find(|(iv, _)| iv.contains(value))
        .map(|(_, b)| b)
        .ok_or_else(|| Error::Table(format!("{attribute} value {value} falls in no bucket")))
}

/// Training-set label counts per entity surface string.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConsistencyIndex {
    counts: HashMap<String, HashMap<String, usize>>,
}

impl ConsistencyIndex {
    pub fn new(train: &Dataset) -> Self {
        let mut counts: HashMap<String, HashMap<String, usize>> = HashMap::new();
        for e in train.sentences.iter().flat_map(|s| &s.gold) {
            *counts
                .entry(e.surface.clone())
                .or_default()
                .entry(e.etype.clone())
                .or_default() += 1;
        }
        Self { counts }
    }

    /// Fraction of training occurrences of `surface` labeled `etype`; 0 when
    /// `surface` never occurs as a training entity.
    pub fn consistency(&self, surface: &str, etype: &str) -> f64 {
        match self.counts.get(surface) {
            None => 0.0,
            Some(by_type) => {
                let total: usize = by_type.values().sum();
                by_type.get(etype).copied().unwrap_or(0) as f64 / total as f64
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityAttributes {
    pub start: usize,
    pub end: usize,
    pub etype: String,
    pub e_len: usize,
    pub e_len_bucket: Bucket,
    pub e_con: f64,
    pub e_con_bucket: Bucket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAttributes {
    pub t_len: usize,
    pub t_len_bucket: Bucket,
    pub e_den: f64,
    pub e_den_bucket: Bucket,
}

/// Attribute values and buckets for a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeProfile {
    pub table: BucketTable,
    pub sentences: Vec<SentenceAttributes>,
    pub entities: Vec<Vec<EntityAttributes>>,
    #[serde(skip)]
    pub index: ConsistencyIndex,
}

impl AttributeProfile {
    fn entity_value(&self, attribute: Attribute, e: &Entity) -> f64 {
        match attribute {
            Attribute::ELen => e.len() as f64,
            Attribute::ECon => self.index.consistency(&e.surface, &e.etype),
            _ => unreachable!("sentence-level attribute"),
        }
    }

    fn sentence_bucket(&self, attribute: Attribute, i: usize) -> Bucket {
        let s = &self.sentences[i];
        match attribute {
            Attribute::TLen => s.t_len_bucket,
            Attribute::EDen => s.e_den_bucket,
            _ => unreachable!("entity-level attribute"),
        }
    }
}

pub fn attributes(test: &Dataset, train: &Dataset) -> Result<AttributeProfile> {
    attributes_with_table(test, train, BucketTable::default())
}

pub fn attributes_with_table(test: &Dataset, train: &Dataset, table: BucketTable) -> Result<AttributeProfile> {
    let index = ConsistencyIndex::new(train);
    let mut sentences = Vec::with_capacity(test.len());
    let mut entities = Vec::with_capacity(test.len());
    for s in &test.sentences {
        let t_len = s.len();
        let e_den = if t_len == 0 {
            0.0
        } else {
            s.gold.len() as f64 / t_len as f64
        };
        sentences.push(SentenceAttributes {
            t_len,
            t_len_bucket: bucketize(t_len as f64, Attribute::TLen, &table)?,
            e_den,
            e_den_bucket: bucketize(e_den, Attribute::EDen, &table)?,
        });
        let mut row = Vec::with_capacity(s.gold.len());
        for e in &s.gold {
            let e_con = index.consistency(&e.surface, &e.etype);
            row.push(EntityAttributes {
                start: e.start,
                end: e.end,
                etype: e.etype.clone(),
                e_len: e.len(),
                e_len_bucket: bucketize(e.len() as f64, Attribute::ELen, &table)?,
                e_con,
                e_con_bucket: bucketize(e_con, Attribute::ECon, &table)?,
            });
        }
        entities.push(row);
    }
    Ok(AttributeProfile {
        table,
        sentences,
        entities,
        index,
    })
}

type Counts = BTreeMap<Bucket, (usize, usize, usize)>;

fn empty_counts() -> Counts {
    Bucket::ALL.into_iter().map(|b| (b, (0, 0, 0))).collect()
}

/// Per-attribute, per-bucket scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    pub table: BucketTable,
    pub cells: BTreeMap<Attribute, BTreeMap<Bucket, ScoreReport>>,
}

impl BucketReport {
    pub fn get(&self, attribute: Attribute, bucket: Bucket) -> &ScoreReport {
        &self.cells[&attribute][&bucket]
    }

    /// Sum of an attribute's buckets.
    pub fn total(&self, attribute: Attribute) -> ScoreReport {
        self.cells[&attribute]
            .values()
            .fold(ScoreReport::default(), |acc, r| acc.merge(r))
    }

    pub const TSV_HEADER: &'static str = "attribute\tbucket\tTP\tFP\tFN\tP\tR\tF1";

    pub fn to_tsv(&self) -> String {
        let mut out = format!("{}\n", Self::TSV_HEADER);
        for (a, row) in &self.cells {
            for (b, r) in row {
                writeln!(out, "{a}\t{b}\t{}", r.tsv_fields()).expect("write to string");
            }
        }
        out
    }

    /// Reads rows written by [`to_tsv`](Self::to_tsv); ratios are recomputed from counts.
    pub fn from_tsv(text: &str, table: BucketTable) -> Result<Self> {
        let mut cells: BTreeMap<Attribute, BTreeMap<Bucket, ScoreReport>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 || line.trim().is_empty() {
                continue;
            }
            let parse_err = |m: String| Error::Parse { line: i + 1, message: m };
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 8 {
                return Err(parse_err(format!("expected 8 fields, found {}", f.len())));
            }
            let count = |s: &str| s.parse::<usize>().map_err(|e| parse_err(e.to_string()));
            let r = ScoreReport::from_counts(count(f[2])?, count(f[3])?, count(f[4])?);
            cells.entry(f[0].parse()?).or_default().insert(f[1].parse()?, r);
        }
        Ok(Self { table, cells })
    }
}

/// Scores each bucket of each attribute.
///
/// For eLen and eCon, gold entities are bucketed by their own value; a
/// false positive joins the bucket of the first gold entity it overlaps, or
/// its own value's bucket when it overlaps none. For tLen and eDen every
/// count of a sentence goes to that sentence's bucket.
pub fn bucket_report(pred: &[Vec<Entity>], gold: &[Vec<Entity>], profile: &AttributeProfile) -> Result<BucketReport> {
    check_aligned(pred, gold)?;
    if profile.sentences.len() != gold.len() {
        return Err(Error::Input(format!(
            "profile covers {} sentences, gold has {}",
            profile.sentences.len(),
            gold.len()
        )));
    }
    let mut cells = BTreeMap::new();
    for attribute in Attribute::ALL {
        let mut counts = empty_counts();
        for (i, (p, g)) in pred.iter().zip(gold).enumerate() {
            let m = match_sentence(p, g);
            if attribute.is_entity_level() {
                let bucket_of = |e: &Entity| bucketize(profile.entity_value(attribute, e), attribute, &profile.table);
                for (e, &hit) in p.iter().zip(&m.pred_matched) {
                    let anchor = if hit { Some(e) } else { g.iter().find(|ge| ge.overlaps(e)) };
                    let b = bucket_of(anchor.unwrap_or(e))?;
                    let c = counts.get_mut(&b).expect("all buckets");
                    if hit {
                        c.0 += 1;
                    } else {
                        c.1 += 1;
                    }
                }
                for (e, &hit) in g.iter().zip(&m.gold_matched) {
                    if !hit {
                        counts.get_mut(&bucket_of(e)?).expect("all buckets").2 += 1;
                    }
                }
            } else {
                let hits = m.pred_matched.iter().filter(|&&b| b).count();
                let c = counts
                    .get_mut(&profile.sentence_bucket(attribute, i))
                    .expect("all buckets");
                c.0 += hits;
                c.1 += p.len() - hits;
                c.2 += g.len() - hits;
            }
        }
        cells.insert(
            attribute,
            counts
                .into_iter()
                .map(|(b, (tp, fp, fn_))| (b, ScoreReport::from_counts(tp, fp, fn_)))
                .collect(),
        );
    }
    Ok(BucketReport {
        table: profile.table.clone(),
        cells,
    })
}

/// Bucket-wise F1 differences `a − b`; `None` where either side is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub cells: BTreeMap<Attribute, BTreeMap<Bucket, Option<f64>>>,
}

impl Heatmap {
    pub fn get(&self, attribute: Attribute, bucket: Bucket) -> Option<f64> {
        self.cells[&attribute][&bucket]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("attribute\tbucket\tdelta_F1\n");
        for (a, row) in &self.cells {
            for (b, d) in row {
                match d {
                    Some(v) => writeln!(out, "{a}\t{b}\t{v}"),
                    None => writeln!(out, "{a}\t{b}\tNA"),
                }
                .expect("write to string");
            }
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut cells: BTreeMap<Attribute, BTreeMap<Bucket, Option<f64>>> = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected 3 fields, found {}", f.len()),
                });
            }
            let v = if f[2] == "NA" {
                None
            } else {
                Some(f[2].parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })?)
            };
            cells.entry(f[0].parse()?).or_default().insert(f[1].parse()?, v);
        }
        Ok(Self { cells })
    }

    /// Monospaced grid, one row per attribute; empty cells print as `n/a`.
    pub fn to_grid(&self) -> String {
        let mut out = format!("{:<6}", "");
        for b in Bucket::ALL {
            write!(out, "{:>9}", b.name()).expect("write to string");
        }
        out.push('\n');
        for (a, row) in &self.cells {
            write!(out, "{:<6}", a.name()).expect("write to string");
            for b in Bucket::ALL {
                match row.get(&b).copied().flatten() {
                    Some(v) => write!(out, "{:>+9.4}", v),
                    None => write!(out, "{:>9}", "n/a"),
                }
                .expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

pub fn heatmap_delta(a: &BucketReport, b: &BucketReport) -> Result<Heatmap> {
    if a.table != b.table {
        return Err(Error::Config("bucket reports use different interval tables".into()));
    }
    let mut cells = BTreeMap::new();
    for (attr, row) in &a.cells {
        let other = b
            .cells
            .get(attr)
            .ok_or_else(|| Error::Config(format!("second report lacks {attr}")))?;
        let mut out = BTreeMap::new();
        for (bucket, ra) in row {
            let rb = other
                .get(bucket)
                .ok_or_else(|| Error::Config(format!("second report lacks {attr}/{bucket}")))?;
            let delta = (!ra.is_empty() && !rb.is_empty()).then_some(ra.f1 - rb.f1);
            out.insert(*bucket, delta);
        }
        cells.insert(*attr, out);
    }
    Ok(Heatmap { cells })
}
