//! Summary report over a sweep and CSV payloads for the figure analogues.

use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{parse_field, simulate, ContextMatrix, ModelParams, NoiseSource};
use crate::error::{Error, Result};
use crate::fmt_float;
use crate::metrics::{
    aggregate_ccf, cross_correlation, histogram, turn_lags, CcfSummary, Histogram, LagSpec,
};
use crate::stats::{
    build_design, chi2_gof, chi2_two_proportion, fit_least_squares, write_coefficients_csv,
    Chi2Result, FitResult, ModelId, ModelSpec,
};
use crate::sweep::{context_index, derive_run_seed, tail_counts, SweepTable, Tail, TailCounts};

/// Share of the 81 contexts with at least one −1 entry.
pub const NEGATIVE_BASELINE: f64 = 65.0 / 81.0;

pub const TABLE1_HEADER: [&str; 8] = [
    "model_id",
    "name",
    "k_nominal",
    "k_effective",
    "r2",
    "adj_r2",
    "aic",
    "bic",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub records: usize,
    pub runs_per_context: usize,
    pub defined: usize,
    pub undefined: usize,
    pub non_finite: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailSummary {
    pub threshold: f64,
    pub counts: TailCounts,
    pub complementary_share: f64,
    pub synchronous_share: f64,
    pub complementary_negative_rate: Option<f64>,
    pub synchronous_negative_rate: Option<f64>,
    pub baseline_negative_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub model_id: u8,
    pub name: String,
    #[serde(flatten)]
    pub fit: FitResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub lowest_aic: u8,
    pub lowest_bic: u8,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub runs_per_context: usize,
    pub tail_threshold: f64,
    pub params: ModelParams,
    pub generator: String,
    pub artifact: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub sweep: SweepSummary,
    pub tails: TailSummary,
    /// Negative-entry share of the complementary tail against the 65/81 baseline.
    pub chi2_complementary_vs_baseline: Chi2Result,
    /// Negative-entry share, complementary tail vs synchronous tail.
    pub chi2_complementary_vs_synchronous: Chi2Result,
    pub models: Vec<ModelFit>,
    pub selection: Selection,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl AnalysisReport {
    pub fn model(&self, id: ModelId) -> Option<&FitResult> {
        self.models
            .iter()
            .find(|m| m.model_id == id.number())
            .map(|m| &m.fit)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn write_table1_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TABLE1_HEADER)?;
        for m in &self.models {
            out.write_record([
                m.model_id.to_string(),
                m.name.clone(),
                m.fit.k_nominal.to_string(),
                m.fit.k_effective.to_string(),
                fmt_float(m.fit.r2),
                fmt_float(m.fit.adj_r2),
                fmt_float(m.fit.aic),
                fmt_float(m.fit.bic),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_coefficients_csv<W: Write>(&self, w: W) -> Result<()> {
        let fits: Vec<(ModelId, &FitResult)> = self
            .models
            .iter()
            .filter_map(|m| {
                ModelId::ALL
                    .into_iter()
                    .find(|id| id.number() == m.model_id)
                    .map(|id| (id, &m.fit))
            })
            .collect();
        write_coefficients_csv(&fits, w)
    }
}

/// One row of `table1.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table1Row {
    pub model_id: u8,
    pub name: String,
    pub k_nominal: usize,
    pub k_effective: usize,
    pub r2: f64,
    pub adj_r2: f64,
    pub aic: f64,
    pub bic: f64,
}

pub fn read_table1_csv<R: Read>(r: R) -> Result<Vec<Table1Row>> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(&mut rdr, &TABLE1_HEADER)?;
    rdr.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            Ok(Table1Row {
                model_id: parse_field(&rec, 0, i)?,
                name: rec.get(1).unwrap_or_default().to_string(),
                k_nominal: parse_field(&rec, 2, i)?,
                k_effective: parse_field(&rec, 3, i)?,
                r2: parse_field(&rec, 4, i)?,
                adj_r2: parse_field(&rec, 5, i)?,
                aic: parse_field(&rec, 6, i)?,
                bic: parse_field(&rec, 7, i)?,
            })
        })
        .collect()
}

pub fn write_table1_rows<W: Write>(rows: &[Table1Row], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TABLE1_HEADER)?;
    for m in rows {
        out.write_record([
            m.model_id.to_string(),
            m.name.clone(),
            m.k_nominal.to_string(),
            m.k_effective.to_string(),
            fmt_float(m.r2),
            fmt_float(m.adj_r2),
            fmt_float(m.aic),
            fmt_float(m.bic),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, header: &[&str]) -> Result<()> {
    let got = rdr.headers()?.clone();
    if got.iter().collect::<Vec<_>>() != header {
        return Err(Error::Validation(format!(
            "expected header {header:?}, found {got:?}"
        )));
    }
    Ok(())
}

/// Tails, both chi-square tests and the five regressions.
pub fn analyze(table: &SweepTable) -> Result<AnalysisReport> {
    let counts = tail_counts(table)?;
    let defined = table.len() - table.undefined_count();
    let share = |t: Tail| {
        if defined == 0 {
            0.0
        } else {
            counts.count(t) as f64 / defined as f64
        }
    };

    let comp = counts.count(Tail::Complementary);
    let comp_neg = counts.negative(Tail::Complementary);
    let sync = counts.count(Tail::Synchronous);
    let sync_neg = counts.negative(Tail::Synchronous);

    let with_stage = |stage: &str, e: Error| match e {
        Error::Stats { reason, .. } => Error::Stats {
            stage: stage.to_string(),
            reason,
        },
        other => Error::Stats {
            stage: stage.to_string(),
            reason: other.to_string(),
        },
    };

    let gof = chi2_gof(
        &[comp_neg, comp - comp_neg],
        &[NEGATIVE_BASELINE, 1.0 - NEGATIVE_BASELINE],
    )
    .map_err(|e| with_stage("complementary tail vs 65/81 baseline", e))?;
    let two = chi2_two_proportion(comp_neg, comp, sync_neg, sync)
        .map_err(|e| with_stage("complementary vs synchronous tail", e))?;

    let mut models = Vec::with_capacity(5);
    for id in ModelId::ALL {
        let design = build_design(table, &ModelSpec::new(id))
            .map_err(|e| with_stage(&format!("model {} design", id.number()), e))?;
        let fit = fit_least_squares(&design)
            .map_err(|e| with_stage(&format!("model {} fit", id.number()), e))?;
        models.push(ModelFit {
            model_id: id.number(),
            name: id.name().to_string(),
            fit,
        });
    }

    let best_by = |key: fn(&FitResult) -> f64| {
        models
            .iter()
            .min_by(|a, b| key(&a.fit).total_cmp(&key(&b.fit)))
            .map(|m| m.model_id)
            .expect("five models")
    };
    let lowest_aic = best_by(|f| f.aic);
    let lowest_bic = best_by(|f| f.bic);
    let selection = Selection {
        lowest_aic,
        lowest_bic,
        note: if lowest_aic == lowest_bic {
            format!("model {lowest_aic} has the lowest AIC and BIC")
        } else {
            format!("lowest AIC: model {lowest_aic}; lowest BIC: model {lowest_bic}")
        },
    };

    let m2 = &models[1].fit;
    let m3 = &models[2].fit;
    let mut notes = vec![format!(
        "models 2 and 3: r2 differs by {}, AIC by {}, BIC by {} (k_effective {} vs {})",
        fmt_float(m3.r2 - m2.r2),
        fmt_float(m3.aic - m2.aic),
        fmt_float(m3.bic - m2.bic),
        m2.k_effective,
        m3.k_effective
    )];
    if table.undefined_count() > 0 {
        notes.push(format!(
            "{} records with undefined r excluded from tails and regressions",
            table.undefined_count()
        ));
    }

    let cfg = &table.config;
    Ok(AnalysisReport {
        sweep: SweepSummary {
            records: table.len(),
            runs_per_context: cfg.runs_per_context,
            defined,
            undefined: table.undefined_count(),
            non_finite: table.non_finite_count(),
        },
        tails: TailSummary {
            threshold: cfg.tail_threshold,
            counts,
            complementary_share: share(Tail::Complementary),
            synchronous_share: share(Tail::Synchronous),
            complementary_negative_rate: counts.negative_rate(Tail::Complementary),
            synchronous_negative_rate: counts.negative_rate(Tail::Synchronous),
            baseline_negative_rate: NEGATIVE_BASELINE,
        },
        chi2_complementary_vs_baseline: gof,
        chi2_complementary_vs_synchronous: two,
        models,
        selection,
        notes,
        provenance: Provenance {
            master_seed: cfg.master_seed,
            runs_per_context: cfg.runs_per_context,
            tail_threshold: cfg.tail_threshold,
            params: cfg.params,
            generator: NoiseSource::ALGORITHM_ID.to_string(),
            artifact: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Panel {
    RHistogram,
    CcfPanel,
    LagPanel,
    TrajectoryPanel,
}

impl Panel {
    pub const ALL: [Panel; 4] = [
        Panel::RHistogram,
        Panel::CcfPanel,
        Panel::LagPanel,
        Panel::TrajectoryPanel,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Panel::RHistogram => "r_histogram",
            Panel::CcfPanel => "ccf_panel",
            Panel::LagPanel => "lag_panel",
            Panel::TrajectoryPanel => "trajectory_panel",
        }
    }
}

impl FromStr for Panel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Panel::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownPanel(s.to_string()))
    }
}

/// Named figure context; `completed` marks matrices whose unstated entries
/// were filled in here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelContext {
    pub name: String,
    pub context: ContextMatrix,
    pub label: String,
    pub completed: bool,
}

pub fn default_panel_contexts() -> Vec<PanelContext> {
    let mk = |name: &str, e: [i8; 4], completed: bool| {
        let context = ContextMatrix::try_from(e).expect("ternary");
        PanelContext {
            name: name.to_string(),
            label: context.label(),
            context,
            completed,
        }
    };
    vec![
        mk("uncoupled", [1, 0, 0, 1], true),
        mk("full coupling", [1, 1, 1, 1], false),
        mk("leader-follower", [1, 0, 1, 0], false),
        mk("inhibited listener", [1, 0, 1, -1], false),
        mk("inhibited follower", [-1, 1, 0, 1], true),
        mk("mutual mimic-inhibit", [-1, 1, 1, -1], true),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FigureConfig {
    pub master_seed: u64,
    pub runs: usize,
    pub params: ModelParams,
    pub max_lag: usize,
    pub bins: usize,
}

impl Default for FigureConfig {
    fn default() -> Self {
        Self {
            master_seed: crate::sweep::DEFAULT_MASTER_SEED,
            runs: 100,
            params: ModelParams::default(),
            max_lag: 20,
            bins: 40,
        }
    }
}

impl FigureConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        LagSpec {
            max_lag: self.max_lag,
        }
        .validate()?;
        if self.runs == 0 {
            return Err(Error::InvalidParameter("runs must be at least 1".into()));
        }
        if self.bins == 0 {
            return Err(Error::InvalidParameter("bins must be at least 1".into()));
        }
        Ok(())
    }

    fn run_seed(&self, context: &ContextMatrix, run: usize) -> u64 {
        derive_run_seed(self.master_seed, context_index(context), run)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvPayload {
    pub file_name: String,
    pub context: Option<ContextMatrix>,
    pub contents: String,
}

/// Mean CCF (and SD) over a seeded batch for one context.
pub fn ccf_batch(context: &ContextMatrix, cfg: &FigureConfig) -> Result<CcfSummary> {
    cfg.validate()?;
    let results = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let traj = simulate(context, &cfg.params, cfg.run_seed(context, run))?;
            cross_correlation(&traj.b1(), &traj.b2(), cfg.max_lag)
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_ccf(&results)
}

/// Turn-lag distribution over a seeded batch.
///
/// `counts` are pooled over runs; `rel_freq` is the mean of each run's
/// relative frequencies over the runs that produced at least one event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagPanel {
    pub max_lag: usize,
    pub counts: Vec<u64>,
    pub rel_freq: Vec<f64>,
    pub total_events: u64,
    pub runs_with_events: usize,
}

impl LagPanel {
    pub fn lags(&self) -> impl Iterator<Item = i64> {
        let m = self.max_lag as i64;
        -m..=m
    }

    /// Lag with the highest mean relative frequency; ties go to smaller |lag|,
    /// then to the positive side.
    pub fn mode(&self) -> Option<i64> {
        if self.runs_with_events == 0 {
            return None;
        }
        let m = self.max_lag as i64;
        self.lags().max_by(|&a, &b| {
            let fa = self.rel_freq[(a + m) as usize];
            let fb = self.rel_freq[(b + m) as usize];
            fa.total_cmp(&fb)
                .then(b.abs().cmp(&a.abs()))
                .then(a.cmp(&b))
        })
    }

    /// `lag,count,rel_freq`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["lag", "count", "rel_freq"])?;
        for (i, lag) in self.lags().enumerate() {
            out.write_record([
                lag.to_string(),
                self.counts[i].to_string(),
                fmt_float(self.rel_freq[i]),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Inverse of [`LagPanel::write_csv`]. `runs_with_events` is not stored
    /// in the file and comes back as 1 when any frequency is nonzero.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        expect_header(&mut rdr, &["lag", "count", "rel_freq"])?;
        let (mut lags, mut counts, mut rel_freq) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            lags.push(parse_field::<i64>(&rec, 0, i)?);
            counts.push(parse_field::<u64>(&rec, 1, i)?);
            rel_freq.push(parse_field::<f64>(&rec, 2, i)?);
        }
        let max_lag = check_lag_axis(&lags)?;
        Ok(Self {
            max_lag,
            total_events: counts.iter().sum(),
            runs_with_events: usize::from(rel_freq.iter().any(|&f| f > 0.0)),
            counts,
            rel_freq,
        })
    }
}

fn check_lag_axis(lags: &[i64]) -> Result<usize> {
    let m = (lags.len().saturating_sub(1) / 2) as i64;
    if lags.is_empty() || lags.len().is_multiple_of(2) || lags.iter().copied().ne(-m..=m) {
        return Err(Error::Validation(format!(
            "lag column is not a symmetric integer range: {lags:?}"
        )));
    }
    Ok(m as usize)
}

pub fn lag_batch(context: &ContextMatrix, cfg: &FigureConfig) -> Result<LagPanel> {
    cfg.validate()?;
    let spec = LagSpec {
        max_lag: cfg.max_lag,
    };
    let dists = (0..cfg.runs)
        .into_par_iter()
        .map(|run| {
            let traj = simulate(context, &cfg.params, cfg.run_seed(context, run))?;
            turn_lags(&traj.b1(), &traj.b2(), &spec)
        })
        .collect::<Result<Vec<_>>>()?;
    let width = 2 * cfg.max_lag + 1;
    let mut counts = vec![0u64; width];
    let mut rel_sum = vec![0.0; width];
    let mut runs_with_events = 0;
    for d in &dists {
        for (c, &k) in counts.iter_mut().zip(&d.counts) {
            *c += k;
        }
        if d.total_events > 0 {
            runs_with_events += 1;
            for (s, &k) in rel_sum.iter_mut().zip(&d.counts) {
                *s += k as f64 / d.total_events as f64;
            }
        }
    }
    let rel_freq = if runs_with_events == 0 {
        vec![0.0; width]
    } else {
        rel_sum
            .iter()
            .map(|s| s / runs_with_events as f64)
            .collect()
    };
    Ok(LagPanel {
        max_lag: cfg.max_lag,
        total_events: counts.iter().sum(),
        counts,
        rel_freq,
        runs_with_events,
    })
}

/// Histogram of every defined r in the sweep over `[-1, 1]`.
pub fn r_histogram(table: &SweepTable, bins: usize) -> Result<Histogram> {
    histogram(&table.r_values(), bins, -1.0, 1.0)
}

pub fn read_histogram_csv<R: Read>(r: R) -> Result<Histogram> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(&mut rdr, &["bin_lo", "bin_hi", "count"])?;
    let mut edges = Vec::new();
    let mut counts = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        edges.push((
            parse_field::<f64>(&rec, 0, i)?,
            parse_field::<f64>(&rec, 1, i)?,
        ));
        counts.push(parse_field::<u64>(&rec, 2, i)?);
    }
    let (lo, hi) = match (edges.first(), edges.last()) {
        (Some(f), Some(l)) => (f.0, l.1),
        _ => return Err(Error::Validation("histogram file has no bins".into())),
    };
    Ok(Histogram {
        lo,
        hi,
        counts,
        overflow: 0,
    })
}

pub fn read_ccf_csv<R: Read>(r: R) -> Result<CcfSummary> {
    let mut rdr = csv::Reader::from_reader(r);
    expect_header(&mut rdr, &["lag", "mean", "sd", "n_defined"])?;
    let (mut lags, mut mean, mut sd, mut n_defined) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        lags.push(parse_field::<i64>(&rec, 0, i)?);
        let m: f64 = parse_field(&rec, 1, i)?;
        let s: f64 = parse_field(&rec, 2, i)?;
        mean.push((!m.is_nan()).then_some(m));
        sd.push((!s.is_nan()).then_some(s));
        n_defined.push(parse_field::<usize>(&rec, 3, i)?);
    }
    let max_lag = check_lag_axis(&lags)?;
    let runs = n_defined.iter().copied().max().unwrap_or(0);
    Ok(CcfSummary {
        max_lag,
        n_undefined: n_defined.iter().map(|n| runs - n).collect(),
        mean,
        sd,
        n_defined,
    })
}

/// CSV payloads for one panel.
///
/// `r_histogram` needs the sweep table; the other panels run fresh seeded
/// batches per context using [`derive_run_seed`] under `cfg.master_seed`.
pub fn figure_data(
    panel: Panel,
    table: Option<&SweepTable>,
    contexts: &[ContextMatrix],
    cfg: &FigureConfig,
) -> Result<Vec<CsvPayload>> {
    cfg.validate()?;
    let csv_of = |f: &dyn Fn(&mut Vec<u8>) -> Result<()>| -> Result<String> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    };
    match panel {
        Panel::RHistogram => {
            let table = table
                .ok_or_else(|| Error::InvalidParameter("r_histogram needs a sweep table".into()))?;
            let h = r_histogram(table, cfg.bins)?;
            Ok(vec![CsvPayload {
                file_name: "fig3_hist.csv".into(),
                context: None,
                contents: csv_of(&|b| h.write_csv(b))?,
            }])
        }
        Panel::CcfPanel => contexts
            .iter()
            .map(|c| {
                let s = ccf_batch(c, cfg)?;
                Ok(CsvPayload {
                    file_name: format!("fig6_ccf_{}.csv", c.label()),
                    context: Some(*c),
                    contents: csv_of(&|b| s.write_csv(b))?,
                })
            })
            .collect(),
        Panel::LagPanel => contexts
            .iter()
            .map(|c| {
                let p = lag_batch(c, cfg)?;
                Ok(CsvPayload {
                    file_name: format!("fig7_lags_{}.csv", c.label()),
                    context: Some(*c),
                    contents: csv_of(&|b| p.write_csv(b))?,
                })
            })
            .collect(),
        Panel::TrajectoryPanel => contexts
            .iter()
            .map(|c| {
                let traj = simulate(c, &cfg.params, cfg.run_seed(c, 0))?;
                Ok(CsvPayload {
                    file_name: format!("fig2_traj_{}.csv", c.label()),
                    context: Some(*c),
                    contents: traj.to_csv_string()?,
                })
            })
            .collect(),
    }
}
