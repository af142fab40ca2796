//! Mirror maps over `R^n`, the nonnegative orthant and the probability simplex.
//!
//! A [`MirrorMap`] bundles the potential `Φ`, its gradient, the convex
//! conjugate `Φ*` and its gradient, the Bregman divergence `D_Φ` and the
//! Bregman projection onto the simplex. For the simplex-restricted entropy
//! `Φ` is not differentiable in the usual sense; [`MirrorMap::grad`] returns
//! the subgradient representative `log x` (the all-ones shift is dropped).

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::{dot, log_sum_exp, softmax};

/// Entries below this are rejected by the entropy maps.
pub const NEG_TOL: f64 = 1e-9;
/// Allowed deviation of `Σx` from 1 for simplex-domain inputs.
pub const SIMPLEX_TOL: f64 = 1e-6;
/// Floor applied before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MirrorKind {
    /// `Φ(x) = ½‖x‖²` on `R^n`.
    #[serde(rename = "l2")]
    SquaredL2,
    /// `Φ(x) = Σ x log x − x` on the nonnegative orthant.
    #[serde(rename = "negent_orthant")]
    NegEntropyOrthant,
    /// Negative entropy restricted to the simplex.
    #[serde(rename = "negent_simplex")]
    NegEntropySimplex,
}

impl MirrorKind {
    pub const ALL: [MirrorKind; 3] =
        [MirrorKind::SquaredL2, MirrorKind::NegEntropyOrthant, MirrorKind::NegEntropySimplex];

    pub fn key(self) -> &'static str {
        match self {
            MirrorKind::SquaredL2 => "l2",
            MirrorKind::NegEntropyOrthant => "negent_orthant",
            MirrorKind::NegEntropySimplex => "negent_simplex",
        }
    }

    pub fn is_entropy(self) -> bool {
        !matches!(self, MirrorKind::SquaredL2)
    }
}

impl fmt::Display for MirrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for MirrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(MirrorKind::SquaredL2),
            "negent_orthant" => Ok(MirrorKind::NegEntropyOrthant),
            "negent_simplex" => Ok(MirrorKind::NegEntropySimplex),
            other => Err(Error::config(format!(
                "unknown mirror map '{other}' (expected l2, negent_orthant or negent_simplex)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MirrorMap {
    pub kind: MirrorKind,
    pub dim: usize,
}

fn xlogx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

impl MirrorMap {
    pub fn new(kind: MirrorKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("mirror map dimension must be positive"));
        }
        Ok(MirrorMap { kind, dim })
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        check_len(self.dim, x.len())?;
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::domain(format!("non-finite coordinate {v}")));
        }
        Ok(())
    }

    /// Validates a primal point and returns it with tiny negatives clamped to 0.
    fn primal(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if !self.kind.is_entropy() {
            return Ok(x.to_vec());
        }
        if let Some(v) = x.iter().find(|&&v| v < -NEG_TOL) {
            return Err(Error::domain(format!("negative entry {v} outside the orthant")));
        }
        if self.kind == MirrorKind::NegEntropySimplex {
            let s: f64 = x.iter().sum();
            if (s - 1.0).abs() > SIMPLEX_TOL {
                return Err(Error::domain(format!("point sums to {s}, not 1")));
            }
        }
        Ok(x.iter().map(|&v| v.max(0.0)).collect())
    }

    pub fn phi(&self, x: &[f64]) -> Result<f64> {
        let x = self.primal(x)?;
        Ok(match self.kind {
            MirrorKind::SquaredL2 => 0.5 * dot(&x, &x),
            _ => x.iter().map(|&v| xlogx(v) - v).sum(),
        })
    }

    /// `∇Φ(x)`; for the simplex entropy this is the representative `log x`.
    pub fn grad(&self, x: &[f64]) -> Result<Vec<f64>> {
        let x = self.primal(x)?;
        match self.kind {
            MirrorKind::SquaredL2 => Ok(x),
            _ => {
                if let Some(v) = x.iter().find(|&&v| v <= 0.0) {
                    return Err(Error::domain(format!("gradient of entropy needs positive entries, got {v}")));
                }
                Ok(x.iter().map(|v| v.max(LOG_FLOOR).ln()).collect())
            }
        }
    }

    /// `∇Φ*(x*)`: identity, `exp`, or softmax.
    pub fn conj_grad(&self, xstar: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(xstar)?;
        Ok(match self.kind {
            MirrorKind::SquaredL2 => xstar.to_vec(),
            MirrorKind::NegEntropyOrthant => xstar.iter().map(|v| v.exp()).collect(),
            MirrorKind::NegEntropySimplex => softmax(xstar),
        })
    }

    pub fn conj_value(&self, xstar: &[f64]) -> Result<f64> {
        self.check_dim(xstar)?;
        Ok(match self.kind {
            MirrorKind::SquaredL2 => 0.5 * dot(xstar, xstar),
            MirrorKind::NegEntropyOrthant => xstar.iter().map(|v| v.exp()).sum(),
            MirrorKind::NegEntropySimplex => log_sum_exp(xstar),
        })
    }

    /// `D_Φ(x, y)`.
    pub fn bregman(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let x = self.primal(x)?;
        let y = self.primal(y)?;
        if self.kind == MirrorKind::SquaredL2 {
            return Ok(0.5 * x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
        }
        let mut total = 0.0;
        for (&xi, &yi) in x.iter().zip(&y) {
            if xi > 0.0 && yi <= 0.0 {
                return Err(Error::domain("x is not absolutely continuous with respect to y"));
            }
            let term = if xi > 0.0 { xi * (xi.ln() - yi.ln()) } else { 0.0 };
            total += match self.kind {
                MirrorKind::NegEntropyOrthant => term - xi + yi,
                _ => term,
            };
        }
        Ok(total)
    }

    /// `D_{Φ*}(x*, y*) = Φ*(x*) − Φ*(y*) − ⟨∇Φ*(y*), x* − y*⟩`.
    pub fn dual_bregman(&self, xstar: &[f64], ystar: &[f64]) -> Result<f64> {
        let gy = self.conj_grad(ystar)?;
        check_len(self.dim, xstar.len())?;
        let diff: Vec<f64> = xstar.iter().zip(ystar).map(|(a, b)| a - b).collect();
        let val = self.conj_value(xstar)? - self.conj_value(ystar)? - dot(&gy, &diff);
        Ok(val.max(0.0))
    }

    /// Bregman projection onto the probability simplex.
    pub fn project(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(y)?;
        match self.kind {
            MirrorKind::SquaredL2 => Ok(euclidean_simplex_projection(y)),
            MirrorKind::NegEntropyOrthant => {
                if let Some(v) = y.iter().find(|&&v| v <= 0.0) {
                    return Err(Error::domain(format!("entropy projection needs positive entries, got {v}")));
                }
                let s: f64 = y.iter().sum();
                Ok(y.iter().map(|v| v / s).collect())
            }
            MirrorKind::NegEntropySimplex => {
                let y = self.primal(y)?;
                let s: f64 = y.iter().sum();
                Ok(y.iter().map(|v| v / s).collect())
            }
        }
    }

    /// One mirror-descent step: `proj(∇Φ*(∇Φ(x) − η g))`.
    pub fn md_step(&self, x: &[f64], g: &[f64], eta: f64) -> Result<Vec<f64>> {
        if !(eta > 0.0) {
            return Err(Error::domain(format!("step size must be positive, got {eta}")));
        }
        check_len(self.dim, g.len())?;
        let gx = self.grad(x)?;
        let dual: Vec<f64> = gx.iter().zip(g).map(|(a, b)| a - eta * b).collect();
        self.project(&self.conj_grad(&dual)?)
    }
}

/// Euclidean projection onto the probability simplex (sort-and-threshold).
pub fn euclidean_simplex_projection(y: &[f64]) -> Vec<f64> {
    let mut u = y.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// `KL(p ‖ q) = Σ p log(p/q)` for distributions, with `0 log 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p.len(), q.len())?;
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(Error::domain("p is not absolutely continuous with respect to q"));
            }
            total += pi * (pi.ln() - qi.ln());
        }
    }
    Ok(total)
}
