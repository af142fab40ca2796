use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::ApproxFunction;
use crate::error::{check_len, Error, Result};
use crate::log_softmax;
use crate::mdp::{Policy, StateDistribution};
use crate::rng::rng_from_seed;

/// Logits above this make the unnormalized-KL loss refuse to evaluate.
pub const KLSTAR_MAX_LOGIT: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `E_d KL(softmax f_s ‖ π_s exp(−ηQ̂_s)/Z_s)`.
    DapoKl,
    /// KL between unnormalized measures `exp f_s` and `π_s exp(−ηQ̂_s)`.
    DapoKlStar,
    /// `E_d ‖f_s − (π_s − ηQ̂_s)‖²`.
    DapoL2,
    /// `E_d ‖f_s − (log π_s − ηQ̂_s)‖²`.
    Ampo,
    /// `E_d ‖f_s − (f^(k)_s − ηQ̂_s)‖²`.
    AmpoV2,
    /// Same objective as [`LossKind::DapoL2`], followed by an entropy projection.
    Mampo,
    /// `E_d ⟨softmax f_s, τ log softmax f_s + q_τ,s⟩`.
    Sac,
}

impl LossKind {
    pub const ALL: [LossKind; 7] = [
        LossKind::DapoKl,
        LossKind::DapoKlStar,
        LossKind::DapoL2,
        LossKind::Ampo,
        LossKind::AmpoV2,
        LossKind::Mampo,
        LossKind::Sac,
    ];

    pub fn key(self) -> &'static str {
        match self {
            LossKind::DapoKl => "dapo_kl",
            LossKind::DapoKlStar => "dapo_klstar",
            LossKind::DapoL2 => "dapo_l2",
            LossKind::Ampo => "ampo",
            LossKind::AmpoV2 => "ampo_v2",
            LossKind::Mampo => "mampo",
            LossKind::Sac => "sac",
        }
    }

    fn is_squared(self) -> bool {
        matches!(self, LossKind::DapoL2 | LossKind::Ampo | LossKind::AmpoV2 | LossKind::Mampo)
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.key() == s)
            .ok_or_else(|| Error::config(format!("unknown algorithm '{s}'")))
    }
}

/// Everything an actor loss needs besides `f` itself.
///
/// `values` holds, per kind: the log of the normalized target (`DapoKl`), the
/// log of the unnormalized target (`DapoKlStar`), the dual target `t` for the
/// squared losses, or the soft Q-values (`Sac`).
#[derive(Debug, Clone, PartialEq)]
pub struct ActorTarget {
    pub kind: LossKind,
    pub n_states: usize,
    pub n_actions: usize,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub tau: f64,
}

fn shifted(base: &[f64], qhat: &[f64], eta: f64) -> Vec<f64> {
    base.iter().zip(qhat).map(|(b, q)| b - eta * q).collect()
}

impl ActorTarget {
    fn build(
        kind: LossKind,
        n_actions: usize,
        weights: &StateDistribution,
        values: Vec<f64>,
        tau: f64,
    ) -> Result<Self> {
        let n_states = weights.len();
        check_len(n_states * n_actions, values.len())?;
        if let Some((i, v)) =
            values.iter().enumerate().find(|(i, v)| !v.is_finite() && weights.weights()[i / n_actions] > 0.0)
        {
            return Err(Error::domain(format!(
                "target entry (s={}, a={}) is {v}; a zero-probability target on the support of d",
                i / n_actions,
                i % n_actions
            )));
        }
        Ok(ActorTarget { kind, n_states, n_actions, weights: weights.weights().to_vec(), values, tau })
    }

    /// Target in log space: `log p = log π − ηQ̂ − log Z`.
    pub fn dapo_kl(log_pi: &[f64], qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<Self> {
        check_len(log_pi.len(), qhat.len())?;
        let n_actions = log_pi.len() / d.len().max(1);
        let values = shifted(log_pi, qhat, eta).chunks(n_actions.max(1)).flat_map(log_softmax).collect();
        Self::build(LossKind::DapoKl, n_actions, d, values, 0.0)
    }

    /// Unnormalized target in log space: `log m = log π − ηQ̂`.
    pub fn dapo_klstar(log_pi: &[f64], qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<Self> {
        check_len(log_pi.len(), qhat.len())?;
        let n_actions = log_pi.len() / d.len().max(1);
        Self::build(LossKind::DapoKlStar, n_actions, d, shifted(log_pi, qhat, eta), 0.0)
    }

    pub fn dapo_l2(pi: &Policy, qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<Self> {
        check_len(pi.probs().len(), qhat.len())?;
        Self::build(LossKind::DapoL2, pi.n_actions(), d, shifted(pi.probs(), qhat, eta), 0.0)
    }

    pub fn ampo(log_pi: &[f64], qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<Self> {
        check_len(log_pi.len(), qhat.len())?;
        let n_actions = log_pi.len() / d.len().max(1);
        Self::build(LossKind::Ampo, n_actions, d, shifted(log_pi, qhat, eta), 0.0)
    }

    pub fn ampo_v2(f_k: &[f64], qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<Self> {
        check_len(f_k.len(), qhat.len())?;
        let n_actions = f_k.len() / d.len().max(1);
        Self::build(LossKind::AmpoV2, n_actions, d, shifted(f_k, qhat, eta), 0.0)
    }

    pub fn mampo(pi: &Policy, qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<Self> {
        check_len(pi.probs().len(), qhat.len())?;
        Self::build(LossKind::Mampo, pi.n_actions(), d, shifted(pi.probs(), qhat, eta), 0.0)
    }

    pub fn sac(soft_q: &[f64], tau: f64, d: &StateDistribution) -> Result<Self> {
        if !(tau > 0.0) {
            return Err(Error::domain(format!("regularization must be positive, got {tau}")));
        }
        let n_actions = soft_q.len() / d.len().max(1);
        Self::build(LossKind::Sac, n_actions, d, soft_q.to_vec(), tau)
    }

    /// Replaces the state weights (off-policy weighting).
    pub fn with_weights(mut self, nu: &StateDistribution) -> Result<Self> {
        check_len(self.n_states, nu.len())?;
        self.weights = nu.weights().to_vec();
        Ok(self)
    }

    /// A table `f` that minimizes the loss exactly.
    pub fn exact_minimizer(&self) -> Vec<f64> {
        match self.kind {
            LossKind::Sac => self.values.iter().map(|q| -q / self.tau).collect(),
            _ => self.values.clone(),
        }
    }

    /// Per-state loss and its gradient with respect to `f_s`.
    fn state_loss(&self, f: &[f64], t: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        match self.kind {
            k if k.is_squared() => {
                let loss = f.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
                if let Some(g) = grad {
                    g.iter_mut().zip(f.iter().zip(t)).for_each(|(g, (a, b))| *g = 2.0 * (a - b));
                }
                Ok(loss)
            }
            LossKind::DapoKl | LossKind::Sac => {
                let logs = log_softmax(f);
                let g: Vec<f64> = match self.kind {
                    LossKind::DapoKl => logs.iter().zip(t).map(|(l, lp)| l - lp).collect(),
                    _ => logs.iter().zip(t).map(|(l, q)| self.tau * l + q).collect(),
                };
                let sigma: Vec<f64> = logs.iter().map(|l| l.exp()).collect();
                let loss: f64 = sigma.iter().zip(&g).map(|(s, g)| s * g).sum();
                if let Some(out) = grad {
                    for ((o, s), gb) in out.iter_mut().zip(&sigma).zip(&g) {
                        *o = s * (gb - loss);
                    }
                }
                Ok(loss)
            }
            LossKind::DapoKlStar => {
                if let Some(v) = f.iter().find(|&&v| v > KLSTAR_MAX_LOGIT) {
                    return Err(Error::Divergence(format!("logit {v} exceeds {KLSTAR_MAX_LOGIT}; exp would overflow")));
                }
                let loss = f
                    .iter()
                    .zip(t)
                    .map(|(&fa, &lm)| {
                        let ef = fa.exp();
                        ef * (fa - lm) - ef + lm.exp()
                    })
                    .sum();
                if let Some(g) = grad {
                    for ((o, &fa), &lm) in g.iter_mut().zip(f).zip(t) {
                        *o = fa.exp() * (fa - lm);
                    }
                }
                Ok(loss)
            }
            _ => unreachable!("all loss kinds handled"),
        }
    }

    /// Loss value and `∂L/∂f` for a flat table of function values.
    pub fn loss_and_grad_values(&self, f: &[f64]) -> Result<(f64, Vec<f64>)> {
        check_len(self.n_states * self.n_actions, f.len())?;
        let a = self.n_actions;
        let mut grad = vec![0.0; f.len()];
        let mut total = 0.0;
        for s in 0..self.n_states {
            let w = self.weights[s];
            if w == 0.0 {
                continue;
            }
            let range = s * a..(s + 1) * a;
            let l = self.state_loss(&f[range.clone()], &self.values[range.clone()], Some(&mut grad[range.clone()]))?;
            grad[range].iter_mut().for_each(|g| *g *= w);
            total += w * l;
        }
        Ok((total, grad))
    }

    pub fn loss_values(&self, f: &[f64]) -> Result<f64> {
        check_len(self.n_states * self.n_actions, f.len())?;
        let a = self.n_actions;
        let mut total = 0.0;
        for s in 0..self.n_states {
            let w = self.weights[s];
            if w > 0.0 {
                total += w * self.state_loss(&f[s * a..(s + 1) * a], &self.values[s * a..(s + 1) * a], None)?;
            }
        }
        Ok(total)
    }

    /// Per-state losses (unweighted).
    pub fn state_losses(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_states * self.n_actions, f.len())?;
        let a = self.n_actions;
        (0..self.n_states)
            .map(|s| self.state_loss(&f[s * a..(s + 1) * a], &self.values[s * a..(s + 1) * a], None))
            .collect()
    }
}

pub fn loss(f: &ApproxFunction, target: &ActorTarget) -> Result<f64> {
    target.loss_values(&f.eval_all())
}

/// Exact gradient of the loss with respect to θ.
pub fn loss_gradient(f: &ApproxFunction, target: &ActorTarget) -> Result<Vec<f64>> {
    let (_, g) = target.loss_and_grad_values(&f.eval_all())?;
    f.vjp(&g)
}

fn log_policy(pi: &Policy) -> Result<Vec<f64>> {
    if !pi.is_strictly_positive() {
        return Err(Error::domain("the previous policy must be strictly positive"));
    }
    Ok(pi.probs().iter().map(|p| p.ln()).collect())
}

pub fn loss_dapo_kl(f: &ApproxFunction, pi_k: &Policy, qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<f64> {
    loss(f, &ActorTarget::dapo_kl(&log_policy(pi_k)?, qhat, eta, d)?)
}

pub fn loss_dapo_klstar(
    f: &ApproxFunction,
    pi_k: &Policy,
    qhat: &[f64],
    eta: f64,
    d: &StateDistribution,
) -> Result<f64> {
    loss(f, &ActorTarget::dapo_klstar(&log_policy(pi_k)?, qhat, eta, d)?)
}

pub fn loss_dapo_l2(f: &ApproxFunction, pi_k: &Policy, qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<f64> {
    loss(f, &ActorTarget::dapo_l2(pi_k, qhat, eta, d)?)
}

pub fn loss_ampo(f: &ApproxFunction, pi_k: &Policy, qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<f64> {
    loss(f, &ActorTarget::ampo(&log_policy(pi_k)?, qhat, eta, d)?)
}

pub fn loss_ampo_v2(
    f: &ApproxFunction,
    f_k: &ApproxFunction,
    qhat: &[f64],
    eta: f64,
    d: &StateDistribution,
) -> Result<f64> {
    loss(f, &ActorTarget::ampo_v2(&f_k.eval_all(), qhat, eta, d)?)
}

pub fn loss_mampo(f: &ApproxFunction, pi_k: &Policy, qhat: &[f64], eta: f64, d: &StateDistribution) -> Result<f64> {
    loss(f, &ActorTarget::mampo(pi_k, qhat, eta, d)?)
}

/// The previous policy does not appear: it cancels once the target is written
/// with the soft Q-values.
pub fn loss_sac(f: &ApproxFunction, soft_q: &[f64], tau: f64, d: &StateDistribution) -> Result<f64> {
    loss(f, &ActorTarget::sac(soft_q, tau, d)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub steps: usize,
    pub lr: f64,
    /// Minibatch size in states; `None` means full batch.
    pub batch: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SgdOutcome {
    pub function: ApproxFunction,
    pub final_loss: f64,
}

/// Plain gradient descent on θ. With a minibatch, states are drawn uniformly
/// with replacement and reweighted by `|S| / |B|` so the step is unbiased.
pub fn sgd_minimize(f: &ApproxFunction, target: &ActorTarget, cfg: &SgdConfig) -> Result<SgdOutcome> {
    if cfg.steps == 0 {
        return Err(Error::config("the actor needs at least one gradient step"));
    }
    if !(cfg.lr > 0.0) {
        return Err(Error::config(format!("learning rate must be positive, got {}", cfg.lr)));
    }
    let mut f = f.clone();
    let mut rng = rng_from_seed(cfg.seed);
    let mut batch_target = target.clone();
    for step in 0..cfg.steps {
        let active = match cfg.batch {
            None => target,
            Some(0) => return Err(Error::config("minibatch size must be positive")),
            Some(b) => {
                let mut counts = vec![0usize; target.n_states];
                for _ in 0..b {
                    counts[rng.random_range(0..target.n_states)] += 1;
                }
                let scale = target.n_states as f64 / b as f64;
                for (w, (c, base)) in batch_target.weights.iter_mut().zip(counts.iter().zip(&target.weights)) {
                    *w = *c as f64 * scale * base;
                }
                &batch_target
            }
        };
        let (l, g_values) = active.loss_and_grad_values(&f.eval_all())?;
        let g = f.vjp(&g_values)?;
        if !l.is_finite() || g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("actor loss became non-finite at step {step}")));
        }
        let theta: Vec<f64> = f.theta().iter().zip(&g).map(|(t, gi)| t - cfg.lr * gi).collect();
        f.set_theta(theta)?;
    }
    let final_loss = loss(&f, target)?;
    if !final_loss.is_finite() {
        return Err(Error::Divergence("actor loss became non-finite".into()));
    }
    Ok(SgdOutcome { function: f, final_loss })
}
