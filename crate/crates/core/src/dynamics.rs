//! The coupled update rule and seeded trajectories.
//!
//! Each turn both agents update simultaneously:
//!
//! ```text
//! b1' = I·(s1·b1 + o1·b2) + n1 − α·b1
//! b2' = I·(o2·b1 + s2·b2) + n2 − α·b2
//! ```
//!
//! with `n1, n2` independent draws from `U(−h, h)`. A trajectory starts from a
//! state drawn uniformly from `[−0.5, 0.5]²` and records `turns + 1` states.

use std::fmt;
use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmt_float;

/// Half-width of the uniform distribution the initial state is drawn from.
pub const INITIAL_HALF_WIDTH: f64 = 0.5;

/// The 2×2 ternary context matrix `(s1, o1; o2, s2)`.
///
/// Row 1 holds the influences on Person 1 (self, then Person 2), row 2 the
/// influences on Person 2 (Person 1, then self).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[i8; 4]", into = "[i8; 4]")]
pub struct ContextMatrix {
    s1: i8,
    o1: i8,
    o2: i8,
    s2: i8,
}

impl ContextMatrix {
    pub const ZERO: ContextMatrix = ContextMatrix {
        s1: 0,
        o1: 0,
        o2: 0,
        s2: 0,
    };

    pub fn new(s1: i8, o1: i8, o2: i8, s2: i8) -> Result<Self> {
        for (name, v) in [("s1", s1), ("o1", o1), ("o2", o2), ("s2", s2)] {
            if !(-1..=1).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "context entry {name}={v} is not in {{-1, 0, 1}}"
                )));
            }
        }
        Ok(Self { s1, o1, o2, s2 })
    }

    /// Self-influence of Person 1.
    pub fn s1(&self) -> i8 {
        self.s1
    }

    /// Influence of Person 2 on Person 1.
    pub fn o1(&self) -> i8 {
        self.o1
    }

    /// Influence of Person 1 on Person 2.
    pub fn o2(&self) -> i8 {
        self.o2
    }

    /// Self-influence of Person 2.
    pub fn s2(&self) -> i8 {
        self.s2
    }

    /// Entries in `(s1, o1, o2, s2)` order.
    pub fn entries(&self) -> [i8; 4] {
        [self.s1, self.o1, self.o2, self.s2]
    }

    pub fn has_negative(&self) -> bool {
        self.entries().contains(&-1)
    }

    /// The same task with the two agents relabeled: `(s2, o2; o1, s1)`.
    pub fn swap(&self) -> Self {
        Self {
            s1: self.s2,
            o1: self.o2,
            o2: self.o1,
            s2: self.s1,
        }
    }

    /// Signed-digit label `s1o1o2s2`, e.g. `+10+1-1` for `(1, 0; 1, -1)`.
    pub fn label(&self) -> String {
        self.entries()
            .iter()
            .map(|v| match v {
                1 => "+1",
                -1 => "-1",
                _ => "0",
            })
            .collect()
    }

    /// Effective update matrix `I·C − α·Id`, row-major.
    pub fn update_matrix(&self, params: &ModelParams) -> [[f64; 2]; 2] {
        let i = params.influence;
        let a = params.alpha;
        [
            [i * f64::from(self.s1) - a, i * f64::from(self.o1)],
            [i * f64::from(self.o2), i * f64::from(self.s2) - a],
        ]
    }
}

impl TryFrom<[i8; 4]> for ContextMatrix {
    type Error = Error;

    fn try_from(v: [i8; 4]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<ContextMatrix> for [i8; 4] {
    fn from(c: ContextMatrix) -> Self {
        c.entries()
    }
}

impl fmt::Display for ContextMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{};{},{}", self.s1, self.o1, self.o2, self.s2)
    }
}

/// Scalar parameters of the update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Decay fraction, `0 ≤ alpha < 1`.
    pub alpha: f64,
    /// Receptivity multiplier on all transmitted signals.
    pub influence: f64,
    /// Noise is drawn from `U(−noise_half_width, +noise_half_width)`.
    pub noise_half_width: f64,
    pub turns: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            influence: 1.0,
            noise_half_width: 0.5,
            turns: 500,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha={} must lie in [0, 1)",
                self.alpha
            )));
        }
        if !(self.influence >= 0.0 && self.influence.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "influence={} must be a nonnegative finite number",
                self.influence
            )));
        }
        if !(self.noise_half_width >= 0.0 && self.noise_half_width.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "noise_half_width={} must be a nonnegative finite number",
                self.noise_half_width
            )));
        }
        if self.turns == 0 {
            return Err(Error::InvalidParameter("turns must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BehaviorState {
    pub b1: f64,
    pub b2: f64,
}

impl BehaviorState {
    pub fn new(b1: f64, b2: f64) -> Self {
        Self { b1, b2 }
    }

    pub fn is_finite(&self) -> bool {
        self.b1.is_finite() && self.b2.is_finite()
    }

    /// Exchange the two agents.
    pub fn swapped(&self) -> Self {
        Self {
            b1: self.b2,
            b2: self.b1,
        }
    }
}

/// Reproducible source of uniform draws.
///
/// ChaCha8 keyed through `seed_from_u64`; each draw takes the top 53 bits of a
/// `u64` output as a uniform in `[0, 1)` and maps it affinely onto `[−h, h]`.
/// The mapping is implemented here rather than through a sampling library so
/// the sequence depends only on the ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub const ALGORITHM_ID: &'static str = "chacha8-u53-v1";

    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm_id(&self) -> &'static str {
        Self::ALGORITHM_ID
    }

    /// Uniform in `[0, 1)`.
    pub fn next_unit(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[−half_width, half_width]`.
    pub fn uniform(&mut self, half_width: f64) -> f64 {
        half_width * (2.0 * self.next_unit() - 1.0)
    }
}

/// One application of the update rule. Pure.
pub fn step(
    context: &ContextMatrix,
    params: &ModelParams,
    prev: BehaviorState,
    noise: (f64, f64),
) -> Result<BehaviorState> {
    if !prev.is_finite() {
        return Err(Error::NonFiniteState { turn: 0 });
    }
    let m = context.update_matrix(params);
    Ok(BehaviorState {
        b1: m[0][0] * prev.b1 + m[0][1] * prev.b2 + noise.0,
        b2: m[1][0] * prev.b1 + m[1][1] * prev.b2 + noise.1,
    })
}

/// Iterate the update rule from an explicit initial state and noise sequence.
///
/// Consumes exactly `params.turns` noise pairs; a short noise sequence is an
/// error.
pub fn simulate_from<I>(
    context: &ContextMatrix,
    params: &ModelParams,
    initial: BehaviorState,
    noise: I,
) -> Result<Vec<BehaviorState>>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    params.validate()?;
    if !initial.is_finite() {
        return Err(Error::NonFiniteState { turn: 0 });
    }
    let mut states = Vec::with_capacity(params.turns + 1);
    states.push(initial);
    let mut noise = noise.into_iter();
    let mut cur = initial;
    for turn in 1..=params.turns {
        let n = noise.next().ok_or_else(|| {
            Error::InvalidParameter(format!("noise sequence exhausted at turn {turn}"))
        })?;
        cur =
            step(context, params, cur, n).map_err(|_| Error::NonFiniteState { turn: turn - 1 })?;
        if !cur.is_finite() {
            return Err(Error::NonFiniteState { turn });
        }
        states.push(cur);
    }
    Ok(states)
}

/// A single seeded interaction.
///
/// Draw order on the stream: initial `b1`, initial `b2`, then `(n1, n2)` per turn.
pub fn simulate(context: &ContextMatrix, params: &ModelParams, seed: u64) -> Result<Trajectory> {
    params.validate()?;
    let mut source = NoiseSource::new(seed);
    let initial = BehaviorState {
        b1: source.uniform(INITIAL_HALF_WIDTH),
        b2: source.uniform(INITIAL_HALF_WIDTH),
    };
    let h = params.noise_half_width;
    let noise = std::iter::repeat_with(|| {
        let n1 = source.uniform(h);
        let n2 = source.uniform(h);
        (n1, n2)
    });
    let states = simulate_from(context, params, initial, noise)?;
    Ok(Trajectory {
        states,
        context: *context,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<BehaviorState>,
    pub context: ContextMatrix,
    pub seed: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn b1(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.b1).collect()
    }

    pub fn b2(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.b2).collect()
    }

    /// `t,b1,b2` with shortest round-trip decimal floats.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t", "b1", "b2"])?;
        for (t, s) in self.states.iter().enumerate() {
            out.write_record([t.to_string(), fmt_float(s.b1), fmt_float(s.b2)])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Parse the states back out of a trajectory CSV.
pub fn read_trajectory_csv<R: Read>(r: R) -> Result<Vec<BehaviorState>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "b1", "b2"] {
        return Err(Error::Validation(format!(
            "unexpected trajectory header {:?}",
            headers
        )));
    }
    let mut states = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let t: usize = parse_field(&rec, 0, i)?;
        if t != i {
            return Err(Error::Validation(format!("row {i} has t={t}")));
        }
        states.push(BehaviorState {
            b1: parse_field(&rec, 1, i)?,
            b2: parse_field(&rec, 2, i)?,
        });
    }
    Ok(states)
}

pub(crate) fn parse_field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    row: usize,
) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::Validation(format!("row {row}: missing column {idx}")))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::Validation(format!("row {row}: cannot parse `{raw}` in column {idx}")))
}
