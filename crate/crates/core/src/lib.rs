//! Dual approximation policy optimization on finite MDPs.
//!
//! The crate is organised bottom-up:
//!
//! - [`mirror`]: mirror maps, conjugates, Bregman divergences and projections.
//! - [`mdp`]: exact tabular evaluation, visitation, optimal and soft-optimal solves.
//! - [`approx`]: parametrized dual functions (tabular / linear / MLP) and actor losses.
//! - [`engine`]: the actor-critic loop with step schedules, critic noise and diagnostics.
//! - [`theory`]: numerical checks of the convergence-analysis inequalities.
//! - [`experiments`]: config-driven runs, sweeps and comparisons used by the CLI.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod approx;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod mdp;
pub mod mirror;
pub mod rng;
pub mod theory;

pub use error::{Error, Result};
pub use mirror::{MirrorKind, MirrorMap};

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn log_sum_exp(x: &[f64]) -> f64 {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

/// Log-softmax, `x - logsumexp(x)`.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let l = log_sum_exp(x);
    x.iter().map(|v| v - l).collect()
}
