//! Finite discounted MDPs with costs in `[0, 1]`, evaluated exactly.
//!
//! All matrices are stored flat in row-major order: the transition kernel as
//! `P[(s * A + a) * S + s']`, costs and policies as `x[s * A + a]`.

mod generate;
mod io;

pub use generate::{gridworld, random_mdp};
pub use io::{read_mdp, write_mdp};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mirror::kl_divergence;
use crate::{dot, log_sum_exp, softmax};

/// Tolerance on row sums of stochastic matrices.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    gamma: f64,
    transition: Vec<f64>,
    cost: Vec<f64>,
}

impl TabularMdp {
    pub fn new(n_states: usize, n_actions: usize, gamma: f64, transition: Vec<f64>, cost: Vec<f64>) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::domain("an MDP needs at least one state and one action"));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::domain(format!("discount must lie in (0, 1), got {gamma}")));
        }
        check_len(n_states * n_actions * n_states, transition.len())?;
        check_len(n_states * n_actions, cost.len())?;
        for (i, row) in transition.chunks(n_states).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::domain(format!(
                    "transition row (s={}, a={}) has a negative or non-finite entry",
                    i / n_actions,
                    i % n_actions
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::domain(format!(
                    "transition row (s={}, a={}) sums to {s}",
                    i / n_actions,
                    i % n_actions
                )));
            }
        }
        if let Some(c) = cost.iter().find(|&&c| !(0.0..=1.0).contains(&c)) {
            return Err(Error::domain(format!("cost {c} outside [0, 1]")));
        }
        Ok(TabularMdp { n_states, n_actions, gamma, transition, cost })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn cost(&self) -> &[f64] {
        &self.cost
    }

    /// Next-state distribution `P(· | s, a)`.
    pub fn next(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn c(&self, s: usize, a: usize) -> f64 {
        self.cost[s * self.n_actions + a]
    }

    /// `Q(s, a) = cost(s, a) + γ Σ_s' P(s'|s,a) V(s')` for a per-state-action cost.
    fn backup(&self, cost: &[f64], v: &[f64]) -> Vec<f64> {
        let mut q = vec![0.0; self.n_states * self.n_actions];
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let i = s * self.n_actions + a;
                q[i] = cost[i] + self.gamma * dot(self.next(s, a), v);
            }
        }
        q
    }

    /// `I − γ P_π` as a dense matrix.
    fn resolvent_matrix(&self, pi: &Policy) -> DMatrix<f64> {
        let n = self.n_states;
        let mut m = DMatrix::<f64>::identity(n, n);
        for s in 0..n {
            for a in 0..self.n_actions {
                let w = self.gamma * pi.prob(s, a);
                if w == 0.0 {
                    continue;
                }
                for (t, p) in self.next(s, a).iter().enumerate() {
                    m[(s, t)] -= w * p;
                }
            }
        }
        m
    }

    fn check_policy(&self, pi: &Policy) -> Result<()> {
        check_len(self.n_states, pi.n_states)?;
        check_len(self.n_actions, pi.n_actions)
    }

    fn check_rho(&self, rho: &StateDistribution) -> Result<()> {
        check_len(self.n_states, rho.weights.len())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        check_len(n_states * n_actions, probs.len())?;
        for (s, row) in probs.chunks(n_actions.max(1)).enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::domain(format!("policy row {s} has a negative entry")));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::domain(format!("policy row {s} sums to {total}")));
            }
        }
        Ok(Policy { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Policy { n_states, n_actions, probs: vec![1.0 / n_actions as f64; n_states * n_actions] }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::Index(format!("action {a} at state {s}")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Policy { n_states: actions.len(), n_actions, probs })
    }

    /// Row-wise softmax of a flat logit table.
    pub fn from_logits(n_states: usize, n_actions: usize, logits: &[f64]) -> Result<Self> {
        check_len(n_states * n_actions, logits.len())?;
        let probs = logits.chunks(n_actions).flat_map(softmax).collect();
        Ok(Policy { n_states, n_actions, probs })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    fn log_probs(&self) -> Result<Vec<f64>> {
        if !self.is_strictly_positive() {
            return Err(Error::domain("regularized evaluation needs a strictly positive policy"));
        }
        Ok(self.probs.iter().map(|p| p.ln()).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    weights: Vec<f64>,
}

impl StateDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::domain("empty state distribution"));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::domain("state distribution has a negative entry"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::domain(format!("state distribution sums to {total}")));
        }
        Ok(StateDistribution { weights })
    }

    pub fn uniform(n: usize) -> Self {
        StateDistribution { weights: vec![1.0 / n as f64; n] }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// `V`, `Q` for one policy. `tau > 0` marks the entropy-regularized quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEstimate {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
    pub tau: f64,
}

impl ValueEstimate {
    /// `⟨ρ, V⟩`.
    pub fn expected(&self, rho: &StateDistribution) -> f64 {
        dot(rho.weights(), &self.v)
    }
}

fn solve_linear(m: DMatrix<f64>, b: Vec<f64>) -> Result<Vec<f64>> {
    let lu = m.lu();
    let x = lu.solve(&DVector::from_vec(b)).ok_or(Error::SingularSystem)?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularSystem);
    }
    Ok(x.iter().copied().collect())
}

fn policy_cost(mdp: &TabularMdp, pi: &Policy, cost: &[f64]) -> Vec<f64> {
    (0..mdp.n_states).map(|s| dot(pi.row(s), &cost[s * mdp.n_actions..(s + 1) * mdp.n_actions])).collect()
}

/// Exact policy evaluation by solving `(I − γ P_π) V = c_π`.
pub fn evaluate(mdp: &TabularMdp, pi: &Policy) -> Result<ValueEstimate> {
    mdp.check_policy(pi)?;
    let v = solve_linear(mdp.resolvent_matrix(pi), policy_cost(mdp, pi, &mdp.cost))?;
    let q = mdp.backup(&mdp.cost, &v);
    Ok(ValueEstimate { v, q, tau: 0.0 })
}

/// Entropy-regularized evaluation: the per-step cost is `c(s,a) + τ log π(a|s)`
/// and `Q_τ` includes the log-probability of the first action.
pub fn evaluate_regularized(mdp: &TabularMdp, pi: &Policy, tau: f64) -> Result<ValueEstimate> {
    mdp.check_policy(pi)?;
    if !(tau >= 0.0) {
        return Err(Error::domain(format!("regularization must be nonnegative, got {tau}")));
    }
    if tau == 0.0 {
        return evaluate(mdp, pi);
    }
    let logp = pi.log_probs()?;
    let aug: Vec<f64> = mdp.cost.iter().zip(&logp).map(|(c, l)| c + tau * l).collect();
    let v = solve_linear(mdp.resolvent_matrix(pi), policy_cost(mdp, pi, &aug))?;
    let q = mdp.backup(&aug, &v);
    Ok(ValueEstimate { v, q, tau })
}

/// Soft Q-values `q_τ = c + γ P V_τ = Q_τ − τ log π`.
pub fn soft_q(mdp: &TabularMdp, pi: &Policy, tau: f64) -> Result<Vec<f64>> {
    let est = evaluate_regularized(mdp, pi, tau)?;
    Ok(mdp.backup(&mdp.cost, &est.v))
}

/// Discounted state visitation `d = (1−γ) ρᵀ (I − γ P_π)⁻¹`.
pub fn visitation(mdp: &TabularMdp, pi: &Policy, rho: &StateDistribution) -> Result<StateDistribution> {
    mdp.check_policy(pi)?;
    mdp.check_rho(rho)?;
    let m = mdp.resolvent_matrix(pi).transpose();
    let x = solve_linear(m, rho.weights.clone())?;
    let mut d: Vec<f64> = x.iter().map(|v| ((1.0 - mdp.gamma) * v).max(0.0)).collect();
    let total: f64 = d.iter().sum();
    d.iter_mut().for_each(|v| *v /= total);
    Ok(StateDistribution { weights: d })
}

/// `∇_s V_ρ = d_s Q_s / (1 − γ)`, flat over state-action pairs.
pub fn policy_gradient(mdp: &TabularMdp, pi: &Policy, rho: &StateDistribution) -> Result<Vec<f64>> {
    let est = evaluate(mdp, pi)?;
    let d = visitation(mdp, pi, rho)?;
    let a = mdp.n_actions;
    Ok(est.q.iter().enumerate().map(|(i, q)| d.weights[i / a] * q / (1.0 - mdp.gamma)).collect())
}

const MAX_SWEEPS: usize = 1_000_000;
const VI_TOL: f64 = 1e-12;

fn greedy(mdp: &TabularMdp, q: &[f64]) -> Vec<usize> {
    q.chunks(mdp.n_actions)
        .map(|row| {
            let mut best = 0;
            for (a, &v) in row.iter().enumerate() {
                if v < row[best] {
                    best = a;
                }
            }
            best
        })
        .collect()
}

/// Optimal deterministic policy: value iteration followed by exact
/// policy-iteration polishing.
pub fn solve_optimal(mdp: &TabularMdp) -> Result<(Policy, ValueEstimate)> {
    let mut v = vec![0.0; mdp.n_states];
    let mut sweeps = 0;
    loop {
        let q = mdp.backup(&mdp.cost, &v);
        let next: Vec<f64> = q.chunks(mdp.n_actions).map(|r| r.iter().cloned().fold(f64::INFINITY, f64::min)).collect();
        let diff = crate::max_abs_diff(&next, &v);
        v = next;
        sweeps += 1;
        if diff <= VI_TOL {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NonConvergence { sweeps });
        }
    }
    let mut actions = greedy(mdp, &mdp.backup(&mdp.cost, &v));
    let mut est;
    let mut rounds = 0;
    loop {
        est = evaluate(mdp, &Policy::deterministic(mdp.n_actions, &actions)?)?;
        let mut changed = false;
        for s in 0..mdp.n_states {
            let row = &est.q[s * mdp.n_actions..(s + 1) * mdp.n_actions];
            let (best, &bv) = row.iter().enumerate().min_by(|x, y| x.1.total_cmp(y.1)).expect("nonempty action set");
            if bv < row[actions[s]] - 1e-14 {
                actions[s] = best;
                changed = true;
            }
        }
        rounds += 1;
        if !changed {
            break;
        }
        if rounds > 10_000 {
            return Err(Error::NonConvergence { sweeps: sweeps + rounds });
        }
    }
    Ok((Policy::deterministic(mdp.n_actions, &actions)?, est))
}

/// Optimal policy of the entropy-regularized problem: soft value iteration,
/// then soft policy iteration to polish, with exact regularized evaluation.
pub fn solve_regularized_optimal(mdp: &TabularMdp, tau: f64) -> Result<(Policy, ValueEstimate)> {
    if !(tau > 0.0) {
        return Err(Error::domain(format!("regularization must be positive, got {tau}")));
    }
    let a = mdp.n_actions;
    let soft_min = |q: &[f64]| -> Vec<f64> {
        q.chunks(a)
            .map(|r| {
                let neg: Vec<f64> = r.iter().map(|x| -x / tau).collect();
                -tau * log_sum_exp(&neg)
            })
            .collect()
    };
    let mut v = vec![0.0; mdp.n_states];
    let mut sweeps = 0;
    loop {
        let next = soft_min(&mdp.backup(&mdp.cost, &v));
        let diff = crate::max_abs_diff(&next, &v);
        v = next;
        sweeps += 1;
        if diff <= VI_TOL {
            break;
        }
        if sweeps >= MAX_SWEEPS {
            return Err(Error::NonConvergence { sweeps });
        }
    }
    let boltzmann = |q: &[f64]| -> Result<Policy> {
        let logits: Vec<f64> = q.iter().map(|x| -x / tau).collect();
        Policy::from_logits(mdp.n_states, a, &logits)
    };
    let mut pi = boltzmann(&mdp.backup(&mdp.cost, &v))?;
    for _ in 0..100 {
        let q = soft_q(mdp, &pi, tau)?;
        let next = boltzmann(&q)?;
        let diff = crate::max_abs_diff(next.probs(), pi.probs());
        pi = next;
        if diff <= 1e-15 {
            break;
        }
    }
    let est = evaluate_regularized(mdp, &pi, tau)?;
    Ok((pi, est))
}

/// Which expectation of the performance-difference identity to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdlForm {
    /// Expectation under `d^π` with the Q-values of `π̃`.
    UnderFirst,
    /// Expectation under `d^π̃` with the Q-values of `π`.
    UnderSecond,
}

/// Evaluates `V^π_ρ − V^π̃_ρ` through the performance-difference identity.
pub fn performance_difference(
    mdp: &TabularMdp,
    pi: &Policy,
    pitilde: &Policy,
    rho: &StateDistribution,
    form: PdlForm,
) -> Result<f64> {
    performance_difference_regularized(mdp, pi, pitilde, rho, 0.0, form)
}

/// Regularized counterpart; `tau = 0` reduces to [`performance_difference`].
pub fn performance_difference_regularized(
    mdp: &TabularMdp,
    pi: &Policy,
    pitilde: &Policy,
    rho: &StateDistribution,
    tau: f64,
    form: PdlForm,
) -> Result<f64> {
    let a = mdp.n_actions;
    let (weights_of, q_of, sign) = match form {
        PdlForm::UnderFirst => (pi, pitilde, 1.0),
        PdlForm::UnderSecond => (pitilde, pi, -1.0),
    };
    let d = visitation(mdp, weights_of, rho)?;
    let q = evaluate_regularized(mdp, q_of, tau)?.q;
    let mut total = 0.0;
    for s in 0..mdp.n_states {
        let ds = d.weights[s];
        if ds == 0.0 {
            continue;
        }
        let diff: Vec<f64> = pi.row(s).iter().zip(pitilde.row(s)).map(|(x, y)| x - y).collect();
        let mut term = dot(&q[s * a..(s + 1) * a], &diff);
        if tau > 0.0 {
            let kl = match form {
                PdlForm::UnderFirst => kl_divergence(pi.row(s), pitilde.row(s))?,
                PdlForm::UnderSecond => kl_divergence(pitilde.row(s), pi.row(s))?,
            };
            term += sign * tau * kl;
        }
        total += ds * term;
    }
    Ok(total / (1.0 - mdp.gamma))
}

/// Largest `d1[s] / d2[s]`; denominators are floored at `floor`.
pub fn sup_ratio(d1: &[f64], d2: &[f64], floor: f64) -> f64 {
    d1.iter().zip(d2).map(|(a, b)| a / b.max(floor)).fold(0.0, f64::max)
}
