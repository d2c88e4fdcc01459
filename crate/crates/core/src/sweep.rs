//! The full 81-context batch: enumeration, per-run seeds, r per run, tails.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{parse_field, simulate, ContextMatrix, ModelParams};
use crate::error::{Error, Result};
use crate::fmt_float;
use crate::metrics::pearson_r;

pub const CONTEXT_COUNT: usize = 81;
pub const DEFAULT_MASTER_SEED: u64 = 42;

pub const SWEEP_HEADER: [&str; 10] = [
    "context_index",
    "s1",
    "o1",
    "o2",
    "s2",
    "run_index",
    "run_seed",
    "r",
    "finite",
    "tail",
];

/// All 3⁴ context matrices, lexicographic over `(s1, o1, o2, s2)` with −1 < 0 < 1.
pub fn enumerate_contexts() -> Vec<ContextMatrix> {
    (0..CONTEXT_COUNT).map(context_at).collect()
}

/// Context at a canonical enumeration position (base-3 digits, s1 most significant).
pub fn context_at(index: usize) -> ContextMatrix {
    assert!(index < CONTEXT_COUNT, "context index {index} out of range");
    let digit = |p: u32| ((index / 3usize.pow(p)) % 3) as i8 - 1;
    ContextMatrix::new(digit(3), digit(2), digit(1), digit(0)).expect("digits are ternary")
}

/// Inverse of [`context_at`].
pub fn context_index(c: &ContextMatrix) -> usize {
    c.entries()
        .iter()
        .fold(0, |acc, &v| acc * 3 + (v + 1) as usize)
}

/// SplitMix64 finaliser: a bijection on `u64` with full avalanche.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for one run of the batch.
///
/// `mix64(mix64(master + φ) ^ (context_index << 32 | run_index))` with φ the
/// 64-bit golden-ratio constant. For a fixed master seed the map from
/// `(context_index, run_index)` (each below 2³²) is injective, since both the
/// packing and `mix64` are.
pub fn derive_run_seed(master_seed: u64, context_index: usize, run_index: usize) -> u64 {
    let key = ((context_index as u64) << 32) | (run_index as u64 & 0xffff_ffff);
    mix64(mix64(master_seed.wrapping_add(0x9e37_79b9_7f4a_7c15)) ^ key)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Complementary,
    Neutral,
    Synchronous,
    Undefined,
}

impl Tail {
    pub const ALL: [Tail; 4] = [
        Tail::Complementary,
        Tail::Neutral,
        Tail::Synchronous,
        Tail::Undefined,
    ];

    /// Strict inequalities on both sides; a missing r is `Undefined`.
    pub fn classify(r: Option<f64>, threshold: f64) -> Tail {
        match r {
            None => Tail::Undefined,
            Some(r) if r < -threshold => Tail::Complementary,
            Some(r) if r > threshold => Tail::Synchronous,
            Some(_) => Tail::Neutral,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Tail::Complementary => "complementary",
            Tail::Neutral => "neutral",
            Tail::Synchronous => "synchronous",
            Tail::Undefined => "undefined",
        }
    }
}

impl fmt::Display for Tail {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Tail {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tail::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Validation(format!("unknown tail label `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub master_seed: u64,
    pub runs_per_context: usize,
    pub params: ModelParams,
    pub tail_threshold: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            master_seed: DEFAULT_MASTER_SEED,
            runs_per_context: 100,
            params: ModelParams::default(),
            tail_threshold: 0.25,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.runs_per_context == 0 {
            return Err(Error::InvalidParameter(
                "runs_per_context must be at least 1".into(),
            ));
        }
        if !(self.tail_threshold > 0.0 && self.tail_threshold < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "tail_threshold={} must lie in (0, 1)",
                self.tail_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub context_index: usize,
    pub context: ContextMatrix,
    pub run_index: usize,
    pub run_seed: u64,
    /// `None` when the correlation is undefined.
    pub r: Option<f64>,
    /// Whether the whole trajectory stayed finite.
    pub finite: bool,
    pub tail: Tail,
}

/// One record per (context, run), canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub records: Vec<SweepRecord>,
    pub config: SweepConfig,
}

fn run_one(config: &SweepConfig, flat: usize) -> SweepRecord {
    let context_index = flat / config.runs_per_context;
    let run_index = flat % config.runs_per_context;
    let context = context_at(context_index);
    let run_seed = derive_run_seed(config.master_seed, context_index, run_index);
    let (r, finite) = match simulate(&context, &config.params, run_seed) {
        Ok(traj) => (pearson_r(&traj.b1(), &traj.b2()).ok(), true),
        Err(_) => (None, false),
    };
    SweepRecord {
        context_index,
        context,
        run_index,
        run_seed,
        r,
        finite,
        tail: Tail::classify(r, config.tail_threshold),
    }
}

/// Run the batch on the global rayon pool.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepTable> {
    config.validate()?;
    let total = CONTEXT_COUNT * config.runs_per_context;
    let records = (0..total)
        .into_par_iter()
        .map(|i| run_one(config, i))
        .collect();
    Ok(SweepTable {
        records,
        config: *config,
    })
}

/// Run the batch on a dedicated pool with `workers` threads. The output does
/// not depend on `workers`.
pub fn run_sweep_with_workers(config: &SweepConfig, workers: usize) -> Result<SweepTable> {
    if workers == 0 {
        return Err(Error::InvalidParameter("workers must be at least 1".into()));
    }
    if workers == 1 {
        config.validate()?;
        let total = CONTEXT_COUNT * config.runs_per_context;
        return Ok(SweepTable {
            records: (0..total).map(|i| run_one(config, i)).collect(),
            config: *config,
        });
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_sweep(config))
}

impl SweepTable {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records with a defined r.
    pub fn defined(&self) -> impl Iterator<Item = &SweepRecord> {
        self.records.iter().filter(|r| r.r.is_some())
    }

    pub fn r_values(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.r).collect()
    }

    pub fn undefined_count(&self) -> usize {
        self.records.iter().filter(|r| r.r.is_none()).count()
    }

    pub fn non_finite_count(&self) -> usize {
        self.records.iter().filter(|r| !r.finite).count()
    }

    pub fn for_context(&self, context_index: usize) -> impl Iterator<Item = &SweepRecord> {
        self.records
            .iter()
            .filter(move |r| r.context_index == context_index)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SWEEP_HEADER)?;
        for rec in &self.records {
            let [s1, o1, o2, s2] = rec.context.entries();
            out.write_record([
                rec.context_index.to_string(),
                s1.to_string(),
                o1.to_string(),
                o2.to_string(),
                s2.to_string(),
                rec.run_index.to_string(),
                rec.run_seed.to_string(),
                fmt_float(rec.r.unwrap_or(f64::NAN)),
                rec.finite.to_string(),
                rec.tail.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Parse and validate a sweep CSV.
    ///
    /// `runs_per_context` is taken from the data; the remaining fields of
    /// `config` must describe the run that produced the file. Rows must be
    /// complete and canonical, every `run_seed` must match
    /// [`derive_run_seed`] under `config.master_seed`, and every tail label
    /// must agree with `config.tail_threshold`.
    pub fn read_csv<R: Read>(r: R, config: &SweepConfig) -> Result<SweepTable> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>() != SWEEP_HEADER {
            return Err(Error::Validation(format!(
                "unexpected sweep header {headers:?}"
            )));
        }
        let mut records = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != SWEEP_HEADER.len() {
                return Err(Error::Validation(format!(
                    "row {row}: expected {} fields, got {}",
                    SWEEP_HEADER.len(),
                    rec.len()
                )));
            }
            let context_index: usize = parse_field(&rec, 0, row)?;
            let context = ContextMatrix::new(
                parse_field(&rec, 1, row)?,
                parse_field(&rec, 2, row)?,
                parse_field(&rec, 3, row)?,
                parse_field(&rec, 4, row)?,
            )
            .map_err(|e| Error::Validation(format!("row {row}: {e}")))?;
            let r: f64 = parse_field(&rec, 7, row)?;
            records.push(SweepRecord {
                context_index,
                context,
                run_index: parse_field(&rec, 5, row)?,
                run_seed: parse_field(&rec, 6, row)?,
                r: (!r.is_nan()).then_some(r),
                finite: parse_field(&rec, 8, row)?,
                tail: rec[9].trim().parse()?,
            });
        }
        let runs = records
            .iter()
            .map(|r| r.run_index + 1)
            .max()
            .ok_or(Error::Validation("sweep file has no records".into()))?;
        let config = SweepConfig {
            runs_per_context: runs,
            ..*config
        };
        config.validate()?;
        let table = SweepTable { records, config };
        table.validate()?;
        Ok(table)
    }

    /// Check cardinality, canonical order, seeds and tail labels.
    pub fn validate(&self) -> Result<()> {
        let runs = self.config.runs_per_context;
        let expected = CONTEXT_COUNT * runs;
        if self.records.len() != expected {
            return Err(Error::Validation(format!(
                "expected {expected} records (81 × {runs}), found {}",
                self.records.len()
            )));
        }
        for (i, rec) in self.records.iter().enumerate() {
            let (ci, ri) = (i / runs, i % runs);
            if rec.context_index != ci || rec.run_index != ri {
                return Err(Error::Validation(format!(
                    "row {i}: expected (context {ci}, run {ri}), found ({}, {})",
                    rec.context_index, rec.run_index
                )));
            }
            if rec.context != context_at(ci) {
                return Err(Error::Validation(format!(
                    "row {i}: context {} does not match index {ci}",
                    rec.context
                )));
            }
            if rec.run_seed != derive_run_seed(self.config.master_seed, ci, ri) {
                return Err(Error::Validation(format!(
                    "row {i}: run_seed does not derive from master seed {}",
                    self.config.master_seed
                )));
            }
            if let Some(r) = rec.r {
                if !(-1.0..=1.0).contains(&r) {
                    return Err(Error::Validation(format!("row {i}: r={r} outside [-1, 1]")));
                }
            }
            if !rec.finite && rec.r.is_some() {
                return Err(Error::Validation(format!(
                    "row {i}: non-finite run carries a correlation"
                )));
            }
            let tail = Tail::classify(rec.r, self.config.tail_threshold);
            if rec.tail != tail {
                return Err(Error::Validation(format!(
                    "row {i}: tail `{}` disagrees with r under threshold {}",
                    rec.tail, self.config.tail_threshold
                )));
            }
        }
        Ok(())
    }
}

/// Per-tail counts, with the number of those records whose context has a −1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TailCounts {
    pub complementary: u64,
    pub neutral: u64,
    pub synchronous: u64,
    pub undefined: u64,
    pub complementary_negative: u64,
    pub neutral_negative: u64,
    pub synchronous_negative: u64,
    pub undefined_negative: u64,
}

impl TailCounts {
    pub fn count(&self, tail: Tail) -> u64 {
        match tail {
            Tail::Complementary => self.complementary,
            Tail::Neutral => self.neutral,
            Tail::Synchronous => self.synchronous,
            Tail::Undefined => self.undefined,
        }
    }

    pub fn negative(&self, tail: Tail) -> u64 {
        match tail {
            Tail::Complementary => self.complementary_negative,
            Tail::Neutral => self.neutral_negative,
            Tail::Synchronous => self.synchronous_negative,
            Tail::Undefined => self.undefined_negative,
        }
    }

    /// Share of the tail's records whose context has at least one −1.
    pub fn negative_rate(&self, tail: Tail) -> Option<f64> {
        let n = self.count(tail);
        (n > 0).then(|| self.negative(tail) as f64 / n as f64)
    }

    pub fn total(&self) -> u64 {
        Tail::ALL.iter().map(|&t| self.count(t)).sum()
    }
}

pub fn tail_counts(table: &SweepTable) -> Result<TailCounts> {
    if table.is_empty() {
        return Err(Error::Empty("sweep table has no records"));
    }
    let mut c = TailCounts::default();
    for rec in &table.records {
        let neg = u64::from(rec.context.has_negative());
        let (n, k) = match rec.tail {
            Tail::Complementary => (&mut c.complementary, &mut c.complementary_negative),
            Tail::Neutral => (&mut c.neutral, &mut c.neutral_negative),
            Tail::Synchronous => (&mut c.synchronous, &mut c.synchronous_negative),
            Tail::Undefined => (&mut c.undefined, &mut c.undefined_negative),
        };
        *n += 1;
        *k += neg;
    }
    Ok(c)
}
