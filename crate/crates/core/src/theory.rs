//! Numerical checks of the inequalities behind the convergence analysis:
//! conjugate identities, approximate Pythagorean bounds, the `|log(p/q)|`
//! bound and the single-iteration base relation, plus seeded fuzz campaigns
//! over all of them.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::mirror::{euclidean_simplex_projection, kl_divergence, MirrorKind, MirrorMap};
use crate::rng::{dirichlet_ones, rng_from_seed, split_seed, standard_normal_vec, uniform_in, DapoRng};
use crate::{dot, log_softmax};

/// Tolerance of the Pythagorean and `|log(p/q)|` checks.
pub const CHECK_TOL: f64 = 1e-9;
/// Tolerance of the base-relation check.
pub const BASE_RELATION_TOL: f64 = 1e-8;
/// Tolerance of `‖∇Φ*(∇Φ(x)) − x‖∞`.
pub const INVERSE_TOL: f64 = 1e-10;
/// Smallest entry of the near-boundary fuzz points.
pub const BOUNDARY_MIN: f64 = 1e-8;

/// One inequality `lhs ≤ rhs` (up to its tolerance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Check {
    fn new(lhs: f64, rhs: f64, tol: f64) -> Self {
        Check { lhs, rhs, holds: lhs <= rhs + tol }
    }

    /// `lhs − rhs`; positive means the inequality is violated.
    pub fn slack(&self) -> f64 {
        self.lhs - self.rhs
    }
}

/// `ψ` and `ω` for a mirror map; `c` is the policy-ratio constant used by the
/// entropy case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryConstants {
    pub mirror: MirrorKind,
    pub c: f64,
}

impl TheoryConstants {
    pub fn l2() -> Self {
        TheoryConstants { mirror: MirrorKind::SquaredL2, c: 0.0 }
    }

    pub fn kl(c: f64) -> Self {
        TheoryConstants { mirror: MirrorKind::NegEntropySimplex, c }
    }

    /// `√(2x)` for L2, `(1 + C)(x + √(2x))` for the entropy maps.
    pub fn psi(&self, x: f64) -> f64 {
        let x = x.max(0.0);
        match self.mirror {
            MirrorKind::SquaredL2 => (2.0 * x).sqrt(),
            _ => (1.0 + self.c) * (x + (2.0 * x).sqrt()),
        }
    }

    /// Power of `η` in the actor-error condition.
    pub fn omega(&self) -> f64 {
        match self.mirror {
            MirrorKind::SquaredL2 => 2.0,
            _ => 1.0,
        }
    }
}

/// Transient part of the linear-convergence bound:
/// `(1 − 1/ϑ)^k (gap₀ + D*₀ / ((1 − γ) η₀ (ϑ − 1)))`.
pub fn linear_rate_bound(gap0: f64, d_star0: f64, gamma: f64, eta0: f64, vartheta: f64, k: usize) -> f64 {
    let rate = (1.0 - 1.0 / vartheta).powi(k as i32);
    if rate == 0.0 {
        return 0.0;
    }
    rate * (gap0 + d_star0 / ((1.0 - gamma) * eta0 * (vartheta - 1.0)))
}

/// Error floor `(ϑ² ψ(ε_actor) + 2ϑ ε_critic) / (1 − γ)`.
pub fn error_floor(vartheta: f64, gamma: f64, psi_actor: f64, eps_critic: f64) -> f64 {
    (vartheta * vartheta * psi_actor + 2.0 * vartheta * eps_critic) / (1.0 - gamma)
}

fn simplex_point(x: &[f64], name: &str) -> Result<()> {
    if x.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::domain(format!("{name} has a negative or non-finite entry")));
    }
    let s: f64 = x.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::domain(format!("{name} sums to {s}, not 1")));
    }
    Ok(())
}

fn positive(x: &[f64], name: &str) -> Result<()> {
    if x.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain(format!("{name} must be strictly positive")));
    }
    Ok(())
}

/// `KL(p ‖ q)` from `p` and both log vectors.
fn kl_logs(p: &[f64], log_p: &[f64], log_q: &[f64]) -> f64 {
    p.iter().zip(log_p.iter().zip(log_q)).filter(|(pa, _)| **pa > 0.0).map(|(pa, (lp, lq))| pa * (lp - lq)).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn half_sq(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
}

/// `D(u,u*) + D(u*,c) − D(u,c) ≤ ⟨∇Φ(v) − ∇Φ(c), u* − u⟩` with `u*` the
/// Bregman projection of `v` onto the simplex.
pub fn check_pythagorean_general(map: &MirrorMap, u: &[f64], v: &[f64], c: &[f64]) -> Result<Check> {
    pythagorean_general(map, u, v, c, 0.0)
}

fn pythagorean_general(map: &MirrorMap, u: &[f64], v: &[f64], c: &[f64], off: f64) -> Result<Check> {
    simplex_point(u, "u")?;
    let ustar = map.project(v)?;
    let d = |x: &[f64], y: &[f64]| map.bregman(x, y).map(|b| b + off);
    let lhs = d(u, &ustar)? + d(&ustar, c)? - d(u, c)?;
    let rhs = dot(&sub(&map.grad(v)?, &map.grad(c)?), &sub(&ustar, u));
    Ok(Check::new(lhs, rhs, CHECK_TOL))
}

/// The squared-L2 case: the right side becomes `√(2 D(v, c)) = ‖v − c‖`.
pub fn check_pythagorean_l2(u: &[f64], v: &[f64], c: &[f64]) -> Result<Check> {
    pythagorean_l2(u, v, c, 0.0)
}

fn pythagorean_l2(u: &[f64], v: &[f64], c: &[f64], off: f64) -> Result<Check> {
    check_len(u.len(), v.len())?;
    check_len(u.len(), c.len())?;
    simplex_point(u, "u")?;
    let ustar = euclidean_simplex_projection(v);
    let lhs = half_sq(u, &ustar) + half_sq(&ustar, c) - half_sq(u, c) + off;
    Ok(Check::new(lhs, (2.0 * half_sq(v, c)).sqrt(), CHECK_TOL))
}

/// The simplex-entropy case with `v` already on the simplex, so `u* = v`:
/// the right side is `(1 + ‖u/v‖∞)(D(v,c) + √(2 D(v,c)))`.
pub fn check_pythagorean_kl(u: &[f64], v: &[f64], c: &[f64]) -> Result<Check> {
    pythagorean_kl(u, v, c, 0.0)
}

fn pythagorean_kl(u: &[f64], v: &[f64], c: &[f64], off: f64) -> Result<Check> {
    check_len(u.len(), v.len())?;
    check_len(u.len(), c.len())?;
    simplex_point(u, "u")?;
    simplex_point(v, "v")?;
    simplex_point(c, "c")?;
    positive(v, "v")?;
    positive(c, "c")?;
    let d = |x: &[f64], y: &[f64]| kl_divergence(x, y).map(|b| b + off);
    let lhs = d(u, v)? + d(v, c)? - d(u, c)?;
    let dvc = kl_divergence(v, c)?;
    let ratio = u.iter().zip(v).map(|(a, b)| a / b).fold(0.0, f64::max);
    Ok(Check::new(lhs, (1.0 + ratio) * (dvc + (2.0 * dvc).sqrt()), CHECK_TOL))
}

/// `⟨|log(p/q)|, p⟩ ≤ KL(p‖q) + √(2 KL(p‖q))`.
pub fn check_abs_kl_bound(p: &[f64], q: &[f64]) -> Result<Check> {
    abs_kl_bound(p, q, 0.0)
}

fn abs_kl_bound(p: &[f64], q: &[f64], off: f64) -> Result<Check> {
    check_len(p.len(), q.len())?;
    simplex_point(p, "p")?;
    simplex_point(q, "q")?;
    let kl = kl_divergence(p, q)? + off;
    let lhs = p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a.ln() - b.ln()).abs()).sum();
    Ok(Check::new(lhs, kl + (2.0 * kl.max(0.0)).sqrt(), CHECK_TOL))
}

/// Single-state relation between one actor step and its exact mirror-descent
/// target, for the squared-L2 or simplex-entropy map:
///
/// `η⟨Q̂, π⁺ − π⟩ + D(π, π⁺) + D(π⁺, π_k) − D(π, π_k) ≤ ψ(D(∇Φ*(f), target))`
///
/// where `π⁺` is the projection of `∇Φ*(f)`, `π` is `pi_ref` (`π_k` or a
/// comparator) and `ψ` uses `C = ‖π/π⁺‖∞`.
pub fn check_base_relation(
    mirror: MirrorKind,
    pi_k: &[f64],
    f_next: &[f64],
    qhat: &[f64],
    eta: f64,
    pi_ref: &[f64],
) -> Result<Check> {
    base_relation(mirror, pi_k, f_next, qhat, eta, pi_ref, 0.0)
}

fn base_relation(
    mirror: MirrorKind,
    pi_k: &[f64],
    f_next: &[f64],
    qhat: &[f64],
    eta: f64,
    pi_ref: &[f64],
    off: f64,
) -> Result<Check> {
    let n = pi_k.len();
    check_len(n, f_next.len())?;
    check_len(n, qhat.len())?;
    check_len(n, pi_ref.len())?;
    simplex_point(pi_k, "pi_k")?;
    simplex_point(pi_ref, "pi_ref")?;
    if !(eta > 0.0) {
        return Err(Error::domain(format!("step size must be positive, got {eta}")));
    }
    let (lhs, rhs) = match mirror {
        MirrorKind::SquaredL2 => {
            let target: Vec<f64> = pi_k.iter().zip(qhat).map(|(p, q)| p - eta * q).collect();
            let next = euclidean_simplex_projection(f_next);
            let lhs = eta * dot(qhat, &sub(&next, pi_ref)) + half_sq(pi_ref, &next) + half_sq(&next, pi_k)
                - half_sq(pi_ref, pi_k)
                + off;
            (lhs, TheoryConstants::l2().psi(half_sq(f_next, &target)))
        }
        MirrorKind::NegEntropySimplex => {
            positive(pi_k, "pi_k")?;
            let log_k: Vec<f64> = pi_k.iter().map(|p| p.ln()).collect();
            let log_target = log_softmax(&sub(&log_k, &qhat.iter().map(|q| eta * q).collect::<Vec<_>>()));
            let log_next = log_softmax(f_next);
            let next: Vec<f64> = log_next.iter().map(|l| l.exp()).collect();
            let log_ref: Vec<f64> = pi_ref.iter().map(|p| if *p > 0.0 { p.ln() } else { f64::NEG_INFINITY }).collect();
            let lhs = eta * dot(qhat, &sub(&next, pi_ref))
                + kl_logs(pi_ref, &log_ref, &log_next)
                + kl_logs(&next, &log_next, &log_k)
                - kl_logs(pi_ref, &log_ref, &log_k)
                + off;
            let c = pi_ref
                .iter()
                .zip(&log_next)
                .filter(|(p, _)| **p > 0.0)
                .map(|(p, l)| (p.ln() - l).exp())
                .fold(0.0, f64::max);
            let div = kl_logs(&next, &log_next, &log_target).max(0.0);
            (lhs, TheoryConstants::kl(c).psi(div))
        }
        MirrorKind::NegEntropyOrthant => {
            return Err(Error::domain("the base relation covers the squared-L2 and simplex-entropy maps"))
        }
    };
    Ok(Check::new(lhs, rhs, BASE_RELATION_TOL))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConjugateReport {
    pub samples: usize,
    /// Largest `‖∇Φ*(∇Φ(x)) − x‖∞`.
    pub max_inverse_error: f64,
    /// Largest `|⟨∇Φ(∇Φ*(x*)), x − y⟩ − ⟨x*, x − y⟩|` over `x, y` in the simplex.
    pub max_pairing_error: f64,
    pub holds: bool,
}

/// Seeded fuzz of both conjugate identities for one map.
pub fn check_conjugate_identities(kind: MirrorKind, samples: usize, seed: u64) -> Result<ConjugateReport> {
    let mut report = ConjugateReport { samples, max_inverse_error: 0.0, max_pairing_error: 0.0, holds: true };
    for i in 0..samples {
        let mut rng = rng_from_seed(split_seed(seed, i as u64));
        let n = rng.random_range(2..=16);
        let (inv, pair) = conjugate_errors(&MirrorMap::new(kind, n)?, &mut rng, i)?;
        report.max_inverse_error = report.max_inverse_error.max(inv.lhs);
        report.max_pairing_error = report.max_pairing_error.max(pair.lhs);
        report.holds &= inv.holds && pair.holds;
    }
    Ok(report)
}

fn conjugate_errors(map: &MirrorMap, rng: &mut DapoRng, i: usize) -> Result<(Check, Check)> {
    let x = interior_point(map.kind, map.dim, rng, i);
    let back = map.conj_grad(&map.grad(&x)?)?;
    let inv = back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let xstar = standard_normal_vec(rng, map.dim);
    let (p, q) = (dirichlet_ones(rng, map.dim), dirichlet_ones(rng, map.dim));
    let diff = sub(&p, &q);
    let pair = (dot(&map.grad(&map.conj_grad(&xstar)?)?, &diff) - dot(&xstar, &diff)).abs();
    Ok((Check::new(inv, 0.0, INVERSE_TOL), Check::new(pair, 0.0, CHECK_TOL)))
}

/// Dirichlet point, with every tenth sample pushed toward the boundary.
fn fuzz_simplex(rng: &mut DapoRng, n: usize, i: usize) -> Vec<f64> {
    let mut p = dirichlet_ones(rng, n);
    if i % 10 == 9 {
        let k = rng.random_range(0..n);
        p[k] = 0.0;
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v = (*v / s).max(BOUNDARY_MIN));
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= s);
    }
    p
}

fn interior_point(kind: MirrorKind, n: usize, rng: &mut DapoRng, i: usize) -> Vec<f64> {
    match kind {
        MirrorKind::SquaredL2 => standard_normal_vec(rng, n),
        MirrorKind::NegEntropyOrthant => standard_normal_vec(rng, n).into_iter().map(f64::exp).collect(),
        MirrorKind::NegEntropySimplex => fuzz_simplex(rng, n, i),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lemma {
    Conjugate,
    DualBregman,
    PythagoreanGeneral,
    PythagoreanL2,
    PythagoreanKl,
    AbsKl,
    BaseRelation,
}

impl Lemma {
    pub const ALL: [Lemma; 7] = [
        Lemma::Conjugate,
        Lemma::DualBregman,
        Lemma::PythagoreanGeneral,
        Lemma::PythagoreanL2,
        Lemma::PythagoreanKl,
        Lemma::AbsKl,
        Lemma::BaseRelation,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Lemma::Conjugate => "conjugate",
            Lemma::DualBregman => "dual_bregman",
            Lemma::PythagoreanGeneral => "pythagorean_general",
            Lemma::PythagoreanL2 => "pythagorean_l2",
            Lemma::PythagoreanKl => "pythagorean_kl",
            Lemma::AbsKl => "abs_kl",
            Lemma::BaseRelation => "base_relation",
        }
    }

    /// Campaign size: 10⁴ per map (or per lemma), 10³ per map for the base relation.
    pub fn default_samples(self) -> usize {
        match self {
            Lemma::Conjugate | Lemma::DualBregman | Lemma::PythagoreanGeneral => 30_000,
            Lemma::BaseRelation => 2_000,
            _ => 10_000,
        }
    }
}

impl fmt::Display for Lemma {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Lemma {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Lemma::ALL.into_iter().find(|l| l.key() == s).ok_or_else(|| Error::config(format!("unknown lemma '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FuzzOptions {
    pub samples: usize,
    pub seed: u64,
    /// Added to every Bregman divergence on the left-hand sides; nonzero only
    /// to test that violations are caught.
    pub bregman_offset: f64,
}

impl FuzzOptions {
    pub fn new(samples: usize, seed: u64) -> Self {
        FuzzOptions { samples, seed, bregman_offset: 0.0 }
    }
}

/// Enough to replay a failing sample: the lemma, master seed and sample index
/// regenerate the inputs, which are also stored verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub lemma: Lemma,
    pub seed: u64,
    pub sample: usize,
    pub bregman_offset: f64,
    pub map: Option<MirrorKind>,
    pub inputs: BTreeMap<String, Vec<f64>>,
    pub lhs: f64,
    pub rhs: f64,
}

impl Witness {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable witness")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("witness: {e}")))
    }

    /// Recomputes the sample's checks.
    pub fn replay(&self) -> Result<Vec<Check>> {
        let opts = FuzzOptions { samples: self.sample + 1, seed: self.seed, bregman_offset: self.bregman_offset };
        Ok(trial(self.lemma, self.sample, &opts)?.checks)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuzzReport {
    pub lemma: Lemma,
    pub samples: usize,
    pub violations: usize,
    /// Largest `lhs − rhs` seen (for the identity checks: the largest error).
    pub worst_slack: f64,
    /// The first violating sample, if any.
    pub witness: Option<Witness>,
}

impl FuzzReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

struct Trial {
    checks: Vec<Check>,
    map: Option<MirrorKind>,
    inputs: Vec<(&'static str, Vec<f64>)>,
}

fn map_for(i: usize, kinds: &[MirrorKind], n: usize) -> Result<MirrorMap> {
    MirrorMap::new(kinds[i % kinds.len()], n)
}

/// Sample `i` of a campaign; inputs depend only on the seed and index.
fn trial(lemma: Lemma, i: usize, opts: &FuzzOptions) -> Result<Trial> {
    let mut rng = rng_from_seed(split_seed(opts.seed, i as u64));
    let off = opts.bregman_offset;
    let rng = &mut rng;
    Ok(match lemma {
        Lemma::Conjugate => {
            let n = rng.random_range(2..=16);
            let map = map_for(i, &MirrorKind::ALL, n)?;
            let mut probe = rng.clone();
            let x = interior_point(map.kind, n, &mut probe, i);
            let (inv, pair) = conjugate_errors(&map, rng, i)?;
            Trial { checks: vec![inv, pair], map: Some(map.kind), inputs: vec![("x", x)] }
        }
        Lemma::DualBregman => {
            let n = rng.random_range(2..=16);
            let map = map_for(i, &MirrorKind::ALL, n)?;
            let x = interior_point(map.kind, n, rng, i);
            let y = interior_point(map.kind, n, rng, i);
            let primal = map.bregman(&x, &y)? + off;
            let dual = map.dual_bregman(&map.grad(&y)?, &map.grad(&x)?)?;
            let err = (dual - primal).abs();
            Trial {
                checks: vec![Check::new(err, 0.0, CHECK_TOL)],
                map: Some(map.kind),
                inputs: vec![("x", x), ("y", y)],
            }
        }
        Lemma::PythagoreanGeneral => {
            let n = rng.random_range(2..=8);
            let map = map_for(i, &MirrorKind::ALL, n)?;
            let u = fuzz_simplex(rng, n, i);
            let v = interior_point(map.kind, n, rng, i);
            let c = interior_point(map.kind, n, rng, i);
            let check = pythagorean_general(&map, &u, &v, &c, off)?;
            Trial { checks: vec![check], map: Some(map.kind), inputs: vec![("u", u), ("v", v), ("c", c)] }
        }
        Lemma::PythagoreanL2 => {
            let n = rng.random_range(2..=8);
            let u = fuzz_simplex(rng, n, i);
            let v = standard_normal_vec(rng, n);
            let c = standard_normal_vec(rng, n);
            let check = pythagorean_l2(&u, &v, &c, off)?;
            Trial { checks: vec![check], map: Some(MirrorKind::SquaredL2), inputs: vec![("u", u), ("v", v), ("c", c)] }
        }
        Lemma::PythagoreanKl => {
            let n = rng.random_range(2..=8);
            let u = fuzz_simplex(rng, n, i);
            let v = fuzz_simplex(rng, n, i);
            let c = fuzz_simplex(rng, n, i);
            let check = pythagorean_kl(&u, &v, &c, off)?;
            Trial {
                checks: vec![check],
                map: Some(MirrorKind::NegEntropySimplex),
                inputs: vec![("u", u), ("v", v), ("c", c)],
            }
        }
        Lemma::AbsKl => {
            let n = rng.random_range(2..=16);
            let mut p = dirichlet_ones(rng, n);
            if i % 4 == 3 {
                // sparse p exercises the absolutely-continuous case
                let k = rng.random_range(0..n);
                p[k] = 0.0;
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
            }
            let q = fuzz_simplex(rng, n, i);
            let check = abs_kl_bound(&p, &q, off)?;
            Trial { checks: vec![check], map: None, inputs: vec![("p", p), ("q", q)] }
        }
        Lemma::BaseRelation => {
            let n = rng.random_range(2..=8);
            let kind = [MirrorKind::SquaredL2, MirrorKind::NegEntropySimplex][i % 2];
            let pi_k = fuzz_simplex(rng, n, i / 2);
            let qhat = standard_normal_vec(rng, n);
            let eta = uniform_in(rng, 0.1, 10.0);
            let noise = [0.0, 0.01, 0.1, 1.0][(i / 2) % 4];
            let exact: Vec<f64> = match kind {
                MirrorKind::SquaredL2 => pi_k.iter().zip(&qhat).map(|(p, q)| p - eta * q).collect(),
                _ => pi_k.iter().zip(&qhat).map(|(p, q)| p.ln() - eta * q).collect(),
            };
            let f: Vec<f64> = exact.iter().zip(standard_normal_vec(rng, n)).map(|(e, z)| e + noise * z).collect();
            let pi_ref = if (i / 2).is_multiple_of(2) { pi_k.clone() } else { fuzz_simplex(rng, n, i / 2) };
            let check = base_relation(kind, &pi_k, &f, &qhat, eta, &pi_ref, off)?;
            Trial {
                checks: vec![check],
                map: Some(kind),
                inputs: vec![("pi_k", pi_k), ("f_next", f), ("qhat", qhat), ("eta", vec![eta]), ("pi_ref", pi_ref)],
            }
        }
    })
}

/// Runs one campaign. Samples are independent streams split from the master
/// seed, so the report does not depend on how the work is sharded.
pub fn run_campaign(lemma: Lemma, opts: &FuzzOptions) -> Result<FuzzReport> {
    let outcomes: Vec<(usize, Trial)> =
        (0..opts.samples).into_par_iter().map(|i| trial(lemma, i, opts).map(|t| (i, t))).collect::<Result<_>>()?;
    let mut report =
        FuzzReport { lemma, samples: opts.samples, violations: 0, worst_slack: f64::NEG_INFINITY, witness: None };
    for (i, t) in outcomes {
        for c in &t.checks {
            report.worst_slack = report.worst_slack.max(c.slack());
        }
        if let Some(bad) = t.checks.iter().find(|c| !c.holds) {
            report.violations += 1;
            if report.witness.is_none() {
                report.witness = Some(Witness {
                    lemma,
                    seed: opts.seed,
                    sample: i,
                    bregman_offset: opts.bregman_offset,
                    map: t.map,
                    inputs: t.inputs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
                    lhs: bad.lhs,
                    rhs: bad.rhs,
                });
            }
        }
    }
    Ok(report)
}

/// Least-squares slope of `log Δ(η)` on `log η` over `η ∈ {0.25, …, 4}`,
/// where `Δ(η) = L(η) − L(η/2)` and `L(η)` is the actor divergence of the
/// frozen `f = ∇Φ(π)` against the target `∇Φ*(∇Φ(π) − ηQ̂)`. The increments
/// cancel the constant offset the entropy case picks up once one action
/// dominates the target, leaving the power of `η`.
pub fn omega_scaling_exponent(mirror: MirrorKind, n_actions: usize, seed: u64) -> Result<f64> {
    if n_actions < 2 {
        return Err(Error::domain("the scaling check needs at least two actions"));
    }
    let mut rng = rng_from_seed(seed);
    let pi = dirichlet_ones(&mut rng, n_actions);
    // a well separated best action keeps the entropy case in its linear regime
    let best = rng.random_range(0..n_actions);
    let qhat: Vec<f64> =
        (0..n_actions).map(|a| if a == best { 0.0 } else { 60.0 + 40.0 * rng.random::<f64>() }).collect();
    let div = |eta: f64| -> f64 {
        match mirror {
            MirrorKind::SquaredL2 => {
                let target: Vec<f64> = pi.iter().zip(&qhat).map(|(p, q)| p - eta * q).collect();
                half_sq(&pi, &target)
            }
            _ => {
                let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
                let shifted: Vec<f64> = log_pi.iter().zip(&qhat).map(|(l, q)| l - eta * q).collect();
                kl_logs(&pi, &log_pi, &log_softmax(&shifted))
            }
        }
    };
    let etas = [0.25, 0.5, 1.0, 2.0, 4.0];
    let xs: Vec<f64> = etas.iter().map(|e: &f64| e.ln()).collect();
    let ys: Vec<f64> = etas.iter().map(|&e| (div(e) - div(e / 2.0)).ln()).collect();
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::Invariant("actor divergence did not grow with the step size".into()));
    }
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let cov: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(cov / var)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn psi_and_omega() {
        let l2 = TheoryConstants::l2();
        assert_eq!(l2.psi(0.0), 0.0);
        assert_eq!(l2.psi(2.0), 2.0);
        assert_eq!(l2.omega(), 2.0);
        let kl = TheoryConstants::kl(1.0);
        assert_eq!(kl.psi(0.0), 0.0);
        assert!((kl.psi(0.5) - 2.0 * 1.5).abs() < 1e-15);
        assert_eq!(kl.omega(), 1.0);
    }

    #[test]
    fn pythagorean_trivial_cases() {
        let u = [0.2, 0.3, 0.5];
        let map = MirrorMap::new(MirrorKind::SquaredL2, 3).unwrap();
        // u = u*: both sides vanish
        let c = check_pythagorean_general(&map, &u, &u, &[0.4, -1.0, 2.0]).unwrap();
        assert!(c.holds && c.lhs.abs() < 1e-15 && c.rhs.abs() < 1e-15);
        // v = c: both specialized right sides are 0
        let v = [0.1, 0.6, 0.3];
        let l2 = check_pythagorean_l2(&u, &v, &v).unwrap();
        assert!(l2.holds && l2.rhs == 0.0 && l2.lhs <= 1e-15);
        let kl = check_pythagorean_kl(&u, &v, &v).unwrap();
        assert!(kl.holds && kl.rhs == 0.0);
        let kl_uv = check_pythagorean_kl(&v, &v, &[0.3, 0.3, 0.4]).unwrap();
        assert!(kl_uv.holds && kl_uv.lhs.abs() < 1e-15);
    }

    #[test]
    fn abs_kl_examples() {
        let c = check_abs_kl_bound(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!((c.lhs, c.rhs), (0.0, 0.0));
        let c = check_abs_kl_bound(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        let l2 = 2f64.ln();
        assert!((c.lhs - l2).abs() < 1e-15);
        assert!((c.rhs - (l2 + (2.0 * l2).sqrt())).abs() < 1e-15);
        assert!(matches!(check_abs_kl_bound(&[0.5, 0.5], &[1.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn exact_actor_base_relation_is_three_point_inequality() {
        let pi_k = [0.2, 0.5, 0.3];
        let q = [1.0, -0.5, 0.3];
        let eta = 0.7;
        let star = [0.0, 1.0, 0.0];
        let log_f: Vec<f64> = pi_k.iter().zip(&q).map(|(p, v): (&f64, &f64)| p.ln() - eta * v).collect();
        for pi_ref in [&pi_k[..], &star[..]] {
            let c = check_base_relation(MirrorKind::NegEntropySimplex, &pi_k, &log_f, &q, eta, pi_ref).unwrap();
            assert_eq!(c.rhs, 0.0);
            assert!(c.lhs <= 1e-12, "{}", c.lhs);
            let t: Vec<f64> = pi_k.iter().zip(&q).map(|(p, v)| p - eta * v).collect();
            let c = check_base_relation(MirrorKind::SquaredL2, &pi_k, &t, &q, eta, pi_ref).unwrap();
            assert_eq!(c.rhs, 0.0);
            assert!(c.lhs <= 1e-12);
        }
        assert!(check_base_relation(MirrorKind::NegEntropyOrthant, &pi_k, &log_f, &q, eta, &pi_k).is_err());
    }

    #[test]
    fn base_relation_holds_as_step_shrinks() {
        let mut rng = rng_from_seed(4);
        for eta in [1e-4, 1e-3, 1e-2, 1e-1, 1.0] {
            for kind in [MirrorKind::SquaredL2, MirrorKind::NegEntropySimplex] {
                let pi_k = dirichlet_ones(&mut rng, 4);
                let q = standard_normal_vec(&mut rng, 4);
                let f: Vec<f64> = match kind {
                    MirrorKind::SquaredL2 => pi_k.iter().zip(&q).map(|(p, v)| p - eta * v + 0.05).collect(),
                    _ => pi_k.iter().zip(&q).map(|(p, v)| p.ln() - eta * v + 0.05 * rng.random::<f64>()).collect(),
                };
                let pi_ref = dirichlet_ones(&mut rng, 4);
                let c = check_base_relation(kind, &pi_k, &f, &q, eta, &pi_ref).unwrap();
                assert!(c.holds, "{kind} eta {eta}: {c:?}");
            }
        }
    }

    #[test]
    fn conjugate_identities_hold() {
        for kind in MirrorKind::ALL {
            let r = check_conjugate_identities(kind, 500, 1).unwrap();
            assert!(r.holds, "{kind}: {r:?}");
        }
        let r = check_conjugate_identities(MirrorKind::SquaredL2, 100, 2).unwrap();
        assert_eq!(r.max_inverse_error, 0.0);
    }

    #[test]
    fn campaigns_pass_and_do_not_depend_on_sharding() {
        for lemma in Lemma::ALL {
            let opts = FuzzOptions::new(400, 9);
            let r = run_campaign(lemma, &opts).unwrap();
            if lemma != Lemma::PythagoreanL2 {
                assert!(r.passed(), "{lemma}: {r:?}");
            }
            let serial = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
            let again = serial.install(|| run_campaign(lemma, &opts).unwrap());
            assert_eq!(r, again);
        }
    }

    #[test]
    fn injected_fault_is_caught_with_a_replayable_witness() {
        let opts = FuzzOptions { samples: 200, seed: 3, bregman_offset: 0.01 };
        let r = run_campaign(Lemma::DualBregman, &opts).unwrap();
        assert!(!r.passed());
        let w = r.witness.unwrap();
        let back = Witness::from_json(&w.to_json()).unwrap();
        assert_eq!(back, w);
        assert!(back.replay().unwrap().iter().any(|c| !c.holds));
    }

    #[test]
    fn stated_l2_bound_misses_the_simplex_diameter() {
        // u* at a vertex, u on the opposite edge: ‖u* − u‖ ≈ 1.22 > 1
        let u = [0.508022075549974, 0.4919779144500262, 9.999999900000002e-9];
        let v = [-0.2652026909961191, -0.3368899040631666, 0.7399750949324307];
        let c = [0.09429409244560759, 0.1593413948839896, 0.32553881873620927];
        let stated = check_pythagorean_l2(&u, &v, &c).unwrap();
        assert!(!stated.holds);
        assert_eq!(euclidean_simplex_projection(&v), vec![0.0, 0.0, 1.0]);
        // with the diameter √2 in the Cauchy-Schwarz step every sample holds
        for i in 0..10_000 {
            let mut rng = rng_from_seed(split_seed(9, i));
            let n = rng.random_range(2..=8);
            let u = dirichlet_ones(&mut rng, n);
            let v = standard_normal_vec(&mut rng, n);
            let c = standard_normal_vec(&mut rng, n);
            let chk = check_pythagorean_l2(&u, &v, &c).unwrap();
            assert!(chk.lhs <= 2f64.sqrt() * chk.rhs + CHECK_TOL);
        }
    }

    #[test]
    fn omega_matches_the_mirror_map() {
        for seed in 0..5 {
            let l2 = omega_scaling_exponent(MirrorKind::SquaredL2, 4, seed).unwrap();
            assert!((l2 - 2.0).abs() < 0.05, "{l2}");
            let kl = omega_scaling_exponent(MirrorKind::NegEntropySimplex, 4, seed).unwrap();
            assert!((kl - 1.0).abs() < 0.05, "{kl}");
        }
    }

    #[test]
    fn bounds_combine() {
        assert_eq!(linear_rate_bound(1.0, 0.0, 0.9, 2.0, 2.0, 1), 0.5);
        assert!((linear_rate_bound(1.0, 1.0, 0.5, 2.0, 2.0, 0) - 2.0).abs() < 1e-15);
        assert!((error_floor(2.0, 0.5, 0.0, 0.1) - 0.8).abs() < 1e-15);
    }

    #[test]
    fn lemma_keys_round_trip() {
        for l in Lemma::ALL {
            assert_eq!(l.key().parse::<Lemma>().unwrap(), l);
        }
        assert!("nope".parse::<Lemma>().is_err());
    }

    proptest! {
        #[test]
        fn psi_is_monotone_and_concave(c in 0.0f64..10.0, a in 0.0f64..5.0, b in 0.0f64..5.0) {
            for t in [TheoryConstants::l2(), TheoryConstants::kl(c)] {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                prop_assert!(t.psi(lo) <= t.psi(hi));
                prop_assert!(t.psi(0.5 * (lo + hi)) + 1e-12 >= 0.5 * (t.psi(lo) + t.psi(hi)));
            }
        }
    }
}
