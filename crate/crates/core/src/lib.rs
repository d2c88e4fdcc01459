//! Two-agent coupled dynamics and the coordination statistics built on top of it.
//!
//! Two people are modelled as a behavior vector `B = (b1, b2)` updated once per
//! turn through a ternary 2×2 context matrix `C`:
//!
//! ```text
//! B(t) = I·C·B(t−1) + U(−h, h) − α·B(t−1)
//! ```
//!
//! The crate is organised bottom-up:
//! - [`dynamics`]: the update rule, seeded noise and trajectories
//! - [`sweep`]: all 81 context matrices × N seeded runs, Pearson r per run
//! - [`metrics`]: Pearson r, lagged cross-correlation, turn-taking lags, histograms
//! - [`stats`]: dummy coding, the five regression designs, OLS fits, χ² tests
//! - [`report`]: the summary report and figure CSV payloads

pub mod dynamics;
pub mod error;
pub mod metrics;
pub mod report;
pub mod stats;
pub mod sweep;

pub use dynamics::{
    simulate, step, BehaviorState, ContextMatrix, ModelParams, NoiseSource, Trajectory,
};
pub use error::{Error, Result};

/// Shortest round-trip decimal; scientific notation outside `[1e-5, 1e16)`.
pub(crate) fn fmt_float(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || !x.is_finite() || (1e-5..1e16).contains(&a) {
        x.to_string()
    } else {
        format!("{x:e}")
    }
}
pub use sweep::{run_sweep, SweepConfig, SweepRecord, SweepTable, Tail};
