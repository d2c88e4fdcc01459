//! Dummy coding of contexts, the five regression designs, least squares and
//! chi-square tests.

use std::fmt;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::ContextMatrix;
use crate::error::{Error, Result};
use crate::fmt_float;
use crate::sweep::SweepTable;

/// Relative singular-value cutoff below which a direction counts as redundant.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// One of the eight 0/1 indicators; value 0 of each parameter is the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Indicator {
    S1p,
    S1n,
    O1p,
    O1n,
    O2p,
    O2n,
    S2p,
    S2n,
}

impl Indicator {
    pub const ALL: [Indicator; 8] = [
        Indicator::S1p,
        Indicator::S1n,
        Indicator::O1p,
        Indicator::O1n,
        Indicator::O2p,
        Indicator::O2n,
        Indicator::S2p,
        Indicator::S2n,
    ];

    /// Position of the underlying parameter in `(s1, o1, o2, s2)`.
    pub fn parameter(self) -> usize {
        self as usize / 2
    }

    /// The parameter value this indicator flags.
    pub fn level(self) -> i8 {
        if (self as usize).is_multiple_of(2) {
            1
        } else {
            -1
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Indicator::S1p => "s1p",
            Indicator::S1n => "s1n",
            Indicator::O1p => "o1p",
            Indicator::O1n => "o1n",
            Indicator::O2p => "o2p",
            Indicator::O2n => "o2n",
            Indicator::S2p => "s2p",
            Indicator::S2n => "s2n",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DummyEncoding {
    bits: [bool; 8],
}

impl DummyEncoding {
    pub fn get(&self, ind: Indicator) -> bool {
        self.bits[ind as usize]
    }

    pub fn bits(&self) -> [bool; 8] {
        self.bits
    }
}

pub fn encode_dummies(context: &ContextMatrix) -> DummyEncoding {
    let e = context.entries();
    let mut bits = [false; 8];
    for ind in Indicator::ALL {
        bits[ind as usize] = e[ind.parameter()] == ind.level();
    }
    DummyEncoding { bits }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Main(Indicator),
    /// Parents from different parameters, ordered `a < b`.
    Interaction(Indicator, Indicator),
}

impl Term {
    pub fn value(&self, d: &DummyEncoding) -> f64 {
        let on = match *self {
            Term::Main(a) => d.get(a),
            Term::Interaction(a, b) => d.get(a) && d.get(b),
        };
        if on {
            1.0
        } else {
            0.0
        }
    }

    fn involves_any(&self, set: &[Indicator]) -> bool {
        match *self {
            Term::Main(a) => set.contains(&a),
            Term::Interaction(a, b) => set.contains(&a) || set.contains(&b),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Main(a) => f.write_str(a.name()),
            Term::Interaction(a, b) => write!(f, "{}:{}", a.name(), b.name()),
        }
    }
}

/// The 24 unique cross-parameter indicator products, canonical order.
pub fn interaction_terms() -> Vec<Term> {
    let mut out = Vec::with_capacity(24);
    for (i, &a) in Indicator::ALL.iter().enumerate() {
        for &b in &Indicator::ALL[i + 1..] {
            if a.parameter() != b.parameter() {
                out.push(Term::Interaction(a, b));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    MainEffects = 1,
    Interactions = 2,
    Overall = 3,
    InitiatorFocused = 4,
    SelfInfluence = 5,
}

impl ModelId {
    pub const ALL: [ModelId; 5] = [
        ModelId::MainEffects,
        ModelId::Interactions,
        ModelId::Overall,
        ModelId::InitiatorFocused,
        ModelId::SelfInfluence,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::MainEffects => "main effects",
            ModelId::Interactions => "interactions",
            ModelId::Overall => "overall",
            ModelId::InitiatorFocused => "initiator-focused",
            ModelId::SelfInfluence => "self-influence",
        }
    }

    /// Parameter count as conventionally quoted, counting ordered interaction
    /// pairs (8 indicators × 6 cross-parameter partners = 48).
    pub fn k_nominal(self) -> usize {
        match self {
            ModelId::MainEffects => 8,
            ModelId::Interactions => 48,
            ModelId::Overall => 56,
            ModelId::InitiatorFocused | ModelId::SelfInfluence => 28,
        }
    }
}

/// Predictor columns of one regression model. The intercept is implicit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: ModelId,
    pub terms: Vec<Term>,
}

impl ModelSpec {
    pub fn new(id: ModelId) -> Self {
        let mains = |set: &[Indicator]| set.iter().map(|&a| Term::Main(a)).collect::<Vec<_>>();
        let focused = |set: &[Indicator]| {
            let mut t = mains(set);
            t.extend(
                interaction_terms()
                    .into_iter()
                    .filter(|x| x.involves_any(set)),
            );
            t
        };
        let terms = match id {
            ModelId::MainEffects => mains(&Indicator::ALL),
            ModelId::Interactions => interaction_terms(),
            ModelId::Overall => {
                let mut t = mains(&Indicator::ALL);
                t.extend(interaction_terms());
                t
            }
            ModelId::InitiatorFocused => {
                use Indicator::*;
                focused(&[S1p, S1n, O2p, O2n])
            }
            ModelId::SelfInfluence => {
                use Indicator::*;
                focused(&[S1p, S1n, S2p, S2n])
            }
        };
        Self { id, terms }
    }

    pub fn column_names(&self) -> Vec<String> {
        self.terms.iter().map(Term::to_string).collect()
    }
}

/// Design matrix with a leading intercept column, and the response.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    /// Predictor names, excluding the intercept.
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    /// Rows dropped because their response was undefined.
    pub excluded: usize,
    pub k_nominal: usize,
}

impl Design {
    /// Build from predictor columns; an intercept column of ones is prepended.
    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidParameter(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n = y.len();
        if n == 0 {
            return Err(Error::Empty("design has no rows"));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch {
                left: c.len(),
                right: n,
            });
        }
        let x = DMatrix::from_fn(n, columns.len() + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                columns[j - 1][i]
            }
        });
        Ok(Self {
            k_nominal: names.len(),
            names,
            x,
            y: DVector::from_vec(y),
            excluded: 0,
        })
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }
}

pub fn build_design(table: &SweepTable, spec: &ModelSpec) -> Result<Design> {
    if table.is_empty() {
        return Err(Error::Empty("sweep table has no records"));
    }
    let rows: Vec<(DummyEncoding, f64)> = table
        .defined()
        .map(|rec| (encode_dummies(&rec.context), rec.r.expect("defined")))
        .collect();
    if rows.is_empty() {
        return Err(Error::Empty("sweep table has no defined correlations"));
    }
    let n = rows.len();
    let p = spec.terms.len();
    let x = DMatrix::from_fn(n, p + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            spec.terms[j - 1].value(&rows[i].0)
        }
    });
    Ok(Design {
        names: spec.column_names(),
        x,
        y: DVector::from_iterator(n, rows.iter().map(|r| r.1)),
        excluded: table.len() - n,
        k_nominal: spec.id.k_nominal(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub term: String,
    /// `None` when the column was redundant.
    pub estimate: Option<f64>,
}

impl Coefficient {
    pub fn dropped(&self) -> bool {
        self.estimate.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Intercept first, then one entry per predictor column.
    pub coefficients: Vec<Coefficient>,
    pub rss: f64,
    pub tss: f64,
    pub n: usize,
    pub k_nominal: usize,
    /// Numerical rank of the design minus the intercept.
    pub k_effective: usize,
    pub r2: f64,
    pub adj_r2: f64,
    pub aic: f64,
    pub bic: f64,
    #[serde(skip)]
    pub fitted: Vec<f64>,
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl FitResult {
    pub fn coefficient(&self, term: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.term == term)
    }
}

/// Greedy left-to-right column selection: keep a column when it adds a new
/// direction beyond `RANK_TOLERANCE` of its own norm.
fn independent_columns(x: &DMatrix<f64>) -> Vec<bool> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::with_capacity(x.ncols());
    for j in 0..x.ncols() {
        let col = x.column(j).clone_owned();
        let norm = col.norm();
        if norm == 0.0 {
            keep.push(false);
            continue;
        }
        let mut v = col;
        // Two passes of modified Gram-Schmidt for stability.
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let rest = v.norm();
        if rest > RANK_TOLERANCE * norm {
            basis.push(v / rest);
            keep.push(true);
        } else {
            keep.push(false);
        }
    }
    keep
}

fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// Ordinary least squares with rank-deficiency handling.
///
/// Redundant columns are reported as dropped and the remaining ones are solved
/// through an SVD pseudo-inverse. Information criteria use the Gaussian
/// profile likelihood with `k_effective + 1` parameters:
/// `aic = n·ln(rss/n) + 2(k+1)`, `bic = n·ln(rss/n) + ln(n)(k+1)`.
pub fn fit_least_squares(design: &Design) -> Result<FitResult> {
    let n = design.rows();
    if n == 0 {
        return Err(Error::Empty("design has no rows"));
    }
    let y = &design.y;
    let mean = y.mean();
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    if tss == 0.0 {
        return Err(Error::stats(
            "least squares",
            "response has zero total sum of squares",
        ));
    }
    let rank = numerical_rank(&design.x);
    if rank == 0 {
        return Err(Error::stats("least squares", "design has rank 0"));
    }
    if n < rank + 1 {
        return Err(Error::stats(
            "least squares",
            format!("{n} rows cannot support a rank-{rank} fit"),
        ));
    }
    let keep = independent_columns(&design.x);
    let kept: Vec<usize> = (0..keep.len()).filter(|&j| keep[j]).collect();
    let xr = design.x.select_columns(&kept);
    let svd = xr.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let beta = svd
        .solve(y, RANK_TOLERANCE * smax)
        .map_err(|e| Error::stats("least squares", e))?;
    let fitted = &xr * &beta;
    let residuals = y - &fitted;
    let rss = residuals.norm_squared();

    let mut coefficients = Vec::with_capacity(keep.len());
    let mut b = beta.iter();
    for (j, &k) in keep.iter().enumerate() {
        let term = if j == 0 {
            "(intercept)".to_string()
        } else {
            design.names[j - 1].clone()
        };
        coefficients.push(Coefficient {
            term,
            estimate: if k { b.next().copied() } else { None },
        });
    }

    let k_effective = rank - 1;
    let nf = n as f64;
    let r2 = 1.0 - rss / tss;
    let dof = n as f64 - k_effective as f64 - 1.0;
    let adj_r2 = 1.0 - (1.0 - r2) * (nf - 1.0) / dof;
    let ll = nf * (rss / nf).ln();
    let p = (k_effective + 1) as f64;
    Ok(FitResult {
        coefficients,
        rss,
        tss,
        n,
        k_nominal: design.k_nominal,
        k_effective,
        r2,
        adj_r2,
        aic: ll + 2.0 * p,
        bic: ll + nf.ln() * p,
        fitted: fitted.iter().copied().collect(),
        residuals: residuals.iter().copied().collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2Result {
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
}

/// Upper tail of the chi-square law: `Q(df/2, x/2)`.
pub fn chi2_upper_tail(x: f64, df: u32) -> f64 {
    assert!(df >= 1, "chi-square needs at least one degree of freedom");
    if x <= 0.0 {
        return 1.0;
    }
    if x.is_infinite() {
        return 0.0;
    }
    statrs::function::gamma::gamma_ur(f64::from(df) / 2.0, x / 2.0)
}

/// Pearson goodness-of-fit statistic against `expected_probs`.
pub fn chi2_gof(observed: &[u64], expected_probs: &[f64]) -> Result<Chi2Result> {
    if observed.len() != expected_probs.len() {
        return Err(Error::LengthMismatch {
            left: observed.len(),
            right: expected_probs.len(),
        });
    }
    if observed.len() < 2 {
        return Err(Error::stats(
            "chi-square goodness of fit",
            "need at least two categories",
        ));
    }
    let sum: f64 = expected_probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 || expected_probs.iter().any(|p| p.is_nan() || *p < 0.0) {
        return Err(Error::stats(
            "chi-square goodness of fit",
            format!("expected probabilities must be nonnegative and sum to 1 (sum={sum})"),
        ));
    }
    let total: u64 = observed.iter().sum();
    if total == 0 {
        return Err(Error::stats(
            "chi-square goodness of fit",
            "no observations",
        ));
    }
    let mut statistic = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        let e = p * total as f64;
        if e <= 0.0 {
            return Err(Error::stats(
                "chi-square goodness of fit",
                "zero expected count",
            ));
        }
        statistic += (o as f64 - e).powi(2) / e;
    }
    let df = (observed.len() - 1) as u32;
    Ok(Chi2Result {
        statistic,
        df,
        p_value: chi2_upper_tail(statistic, df),
    })
}

/// 2×2 Pearson chi-square (no continuity correction) comparing the
/// in-category proportions `count1/n1` and `count2/n2`.
pub fn chi2_two_proportion(count1: u64, n1: u64, count2: u64, n2: u64) -> Result<Chi2Result> {
    if n1 == 0 || n2 == 0 || count1 > n1 || count2 > n2 {
        return Err(Error::stats(
            "chi-square two proportions",
            format!("invalid counts {count1}/{n1} vs {count2}/{n2}"),
        ));
    }
    let cells = [
        [count1 as f64, (n1 - count1) as f64],
        [count2 as f64, (n2 - count2) as f64],
    ];
    let rows = [n1 as f64, n2 as f64];
    let cols = [cells[0][0] + cells[1][0], cells[0][1] + cells[1][1]];
    let total = rows[0] + rows[1];
    let mut statistic = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let e = rows[i] * cols[j] / total;
            if e == 0.0 {
                return Err(Error::stats(
                    "chi-square two proportions",
                    "zero expected cell count",
                ));
            }
            statistic += (cells[i][j] - e).powi(2) / e;
        }
    }
    Ok(Chi2Result {
        statistic,
        df: 1,
        p_value: chi2_upper_tail(statistic, 1),
    })
}

/// `model_id,term,estimate,dropped` rows for one fit.
pub fn write_coefficients_csv<W: Write>(fits: &[(ModelId, &FitResult)], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["model_id", "term", "estimate", "dropped"])?;
    for (id, fit) in fits {
        for c in &fit.coefficients {
            out.write_record([
                id.number().to_string(),
                c.term.clone(),
                fmt_float(c.estimate.unwrap_or(f64::NAN)),
                c.dropped().to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
