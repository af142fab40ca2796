//! The actor-critic loop: exact (or noisy) critic, actor fit in the dual
//! space, Bregman projection back to policies, and per-iteration diagnostics.

mod config;
mod log;

pub use config::{
    calibrated_half_width, check_compatible, default_ratio, natural_mirror, schedule_eta, ActorMode, CriticConfig,
    DapoConfig, FunctionConfig, StepSchedule, ETA_CAP,
};
pub use log::{estimate_constants, EstimatedConstants, IterationLog, IterationRecord, CSV_HEADER, RATIO_FLOOR};

use config::Critic;
use log::ConstantsContext;

use crate::approx::{loss_gradient, sgd_minimize, ActorTarget, ApproxFunction, LossKind, SgdConfig};
use crate::error::{Error, Result};
use crate::log_softmax;
use crate::mdp::{
    evaluate, evaluate_regularized, solve_optimal, solve_regularized_optimal, visitation, Policy, StateDistribution,
    TabularMdp,
};
use crate::mirror::{euclidean_simplex_projection, MirrorKind};

/// Relative-error threshold of the per-iteration SAC gradient check.
pub const SAC_GRAD_TOL: f64 = 1e-8;
/// Gradient scale below which the SAC check switches to absolute error.
const SAC_GRAD_FLOOR: f64 = 1e-4;

/// Current policy iterate with log-probabilities for the entropy maps.
struct Iterate {
    pi: Policy,
    log_pi: Vec<f64>,
}

impl Iterate {
    fn from_policy(pi: Policy) -> Self {
        let log_pi = pi.probs().iter().map(|p| p.ln()).collect();
        Iterate { pi, log_pi }
    }

    fn project(mirror: MirrorKind, f: &[f64], n_states: usize, n_actions: usize) -> Result<Self> {
        match mirror {
            MirrorKind::SquaredL2 => {
                let probs: Vec<f64> = f.chunks(n_actions).flat_map(euclidean_simplex_projection).collect();
                Ok(Iterate::from_policy(Policy::new(n_states, n_actions, probs)?))
            }
            _ => {
                let log_pi: Vec<f64> = f.chunks(n_actions).flat_map(log_softmax).collect();
                let pi = Policy::from_logits(n_states, n_actions, f)?;
                Ok(Iterate { pi, log_pi })
            }
        }
    }
}

/// `D_Φ(p, q)` per state for policies on the simplex.
fn policy_divergence(mirror: MirrorKind, p: &Iterate, q: &Iterate, s: usize, n_actions: usize) -> f64 {
    let r = s * n_actions..(s + 1) * n_actions;
    match mirror {
        MirrorKind::SquaredL2 => 0.5 * p.pi.row(s).iter().zip(q.pi.row(s)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
        _ => {
            p.pi.row(s)
                .iter()
                .zip(&p.log_pi[r.clone()])
                .zip(&q.log_pi[r])
                .filter(|((pa, _), _)| **pa > 0.0)
                .map(|((pa, lp), lq)| pa * (lp - lq))
                .sum::<f64>()
                .max(0.0)
        }
    }
}

fn expected_divergence(mirror: MirrorKind, d: &[f64], p: &Iterate, q: &Iterate, n_actions: usize) -> f64 {
    d.iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(s, w)| w * policy_divergence(mirror, p, q, s, n_actions))
        .sum()
}

#[derive(Clone, Copy)]
enum Objective {
    Plain,
    Regularized { tau: f64 },
}

/// Runs the unregularized algorithm for `cfg.iterations` steps.
pub fn run_dapo(mdp: &TabularMdp, cfg: &DapoConfig) -> Result<IterationLog> {
    if cfg.tau != 0.0 || cfg.algorithm == LossKind::Sac {
        return Err(Error::config("entropy-regularized runs go through run_sac_mode"));
    }
    run(mdp, cfg, Objective::Plain)
}

/// Runs the entropy-regularized algorithm: the critic returns `Q_τ`, gaps
/// are measured against the regularized optimum and the step size is
/// constant. With algorithm `sac` the step is `1/τ` implicitly.
pub fn run_sac_mode(mdp: &TabularMdp, cfg: &DapoConfig) -> Result<IterationLog> {
    if !(cfg.tau > 0.0) {
        return Err(Error::config("regularized runs need tau > 0"));
    }
    if cfg.mirror_kind() != MirrorKind::NegEntropySimplex || !matches!(cfg.algorithm, LossKind::DapoKl | LossKind::Sac)
    {
        return Err(Error::config("regularized runs use the dapo_kl or sac loss with the negent_simplex map"));
    }
    if cfg.algorithm == LossKind::DapoKl {
        let StepSchedule::Constant { eta } = cfg.schedule else {
            return Err(Error::config("regularized runs need a constant step size"));
        };
        let limit = 1.0 / (cfg.tau * cfg.vartheta_for(mdp));
        if eta > limit * (1.0 + 1e-12) {
            return Err(Error::config(format!("step size {eta} exceeds 1/(tau * vartheta) = {limit}")));
        }
    }
    run(mdp, cfg, Objective::Regularized { tau: cfg.tau })
}

/// Dispatches to [`run_sac_mode`] when `tau > 0` or the algorithm is `sac`,
/// otherwise to [`run_dapo`].
pub fn execute(mdp: &TabularMdp, cfg: &DapoConfig) -> Result<IterationLog> {
    if cfg.tau > 0.0 || cfg.algorithm == LossKind::Sac {
        run_sac_mode(mdp, cfg)
    } else {
        run_dapo(mdp, cfg)
    }
}

fn run(mdp: &TabularMdp, cfg: &DapoConfig, objective: Objective) -> Result<IterationLog> {
    cfg.validate(mdp)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mirror = cfg.mirror_kind();
    let schedule = cfg.schedule.resolve(cfg.vartheta_for(mdp))?;
    let rho = cfg.rho.clone().unwrap_or_else(|| StateDistribution::uniform(ns));
    let tau = match objective {
        Objective::Plain => 0.0,
        Objective::Regularized { tau } => tau,
    };
    let evaluate_at = |pi: &Policy| match objective {
        Objective::Plain => evaluate(mdp, pi),
        Objective::Regularized { tau } => evaluate_regularized(mdp, pi, tau),
    };

    let (pi_star, est_star) = match objective {
        Objective::Plain => solve_optimal(mdp)?,
        Objective::Regularized { tau } => solve_regularized_optimal(mdp, tau)?,
    };
    let v_star = est_star.expected(&rho);
    let star = Iterate::from_policy(pi_star.clone());
    let ctx = ConstantsContext::new(mdp, &rho, &pi_star)?;
    let d_star = ctx.d_star.weights().to_vec();

    let mut f = cfg.function.build(ns, na, cfg.function_seed())?;
    let mut critic = Critic::new(&cfg.critic, na, cfg.critic_seed())?;
    let mut current = Iterate::from_policy(cfg.initial_policy.clone().unwrap_or_else(|| Policy::uniform(ns, na)));
    let mut d_k = visitation(mdp, &current.pi, &rho)?;
    let mut constants = EstimatedConstants::neutral();
    let mut sac_mismatch: Option<f64> = None;

    let mut records = Vec::with_capacity(cfg.iterations + 1);
    let mut policies = Vec::with_capacity(cfg.iterations + 1);
    let mut est = evaluate_at(&current.pi)?;
    records.push(IterationRecord {
        k: 0,
        eta: 0.0,
        value_gap: est.expected(&rho) - v_star,
        actor_loss: 0.0,
        actor_div: 0.0,
        critic_err: 0.0,
        kl_prev: 0.0,
        d_star: expected_divergence(mirror, &d_star, &star, &current, na),
        vartheta_hat: constants.vartheta,
        c_rho_hat: constants.c_rho,
        c_rho_full: constants.c_rho_full,
    });
    policies.push(current.pi.clone());

    for k in 0..cfg.iterations {
        // critic
        let q = est.q.clone();
        let mut qhat = q.clone();
        critic.corrupt(&mut qhat);
        let critic_err: f64 = (0..ns)
            .map(|s| {
                let r = s * na..(s + 1) * na;
                d_k.weights()[s] * qhat[r.clone()].iter().zip(&q[r]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
            .sum();

        // actor
        let eta = match cfg.algorithm {
            LossKind::Sac => 1.0 / tau,
            _ => schedule.eta(k)?,
        };
        let weights = cfg.weights.clone().unwrap_or_else(|| d_k.clone());
        let target = match cfg.algorithm {
            LossKind::DapoKl => ActorTarget::dapo_kl(&current.log_pi, &qhat, eta, &weights)?,
            LossKind::DapoKlStar => ActorTarget::dapo_klstar(&current.log_pi, &qhat, eta, &weights)?,
            LossKind::DapoL2 => ActorTarget::dapo_l2(&current.pi, &qhat, eta, &weights)?,
            LossKind::Ampo => ActorTarget::ampo(&current.log_pi, &qhat, eta, &weights)?,
            LossKind::AmpoV2 => ActorTarget::ampo_v2(&f.eval_all(), &qhat, eta, &weights)?,
            LossKind::Mampo => ActorTarget::mampo(&current.pi, &qhat, eta, &weights)?,
            LossKind::Sac => {
                let soft: Vec<f64> = qhat.iter().zip(&current.log_pi).map(|(q, l)| q - tau * l).collect();
                ActorTarget::sac(&soft, tau, &weights)?
            }
        };
        if let Objective::Regularized { tau } = objective {
            if (eta * tau - 1.0).abs() <= 1e-12 {
                let m = sac_gradient_mismatch(&f, &current.log_pi, &qhat, tau, &weights)?;
                if m > SAC_GRAD_TOL {
                    return Err(Error::Invariant(format!(
                        "iteration {k}: SAC and DAPO-KL gradients differ by {m:e} (relative)"
                    )));
                }
                sac_mismatch = Some(sac_mismatch.unwrap_or(0.0).max(m));
            }
        }
        let actor_loss = match &cfg.actor {
            ActorMode::Exact => {
                f.fit_exact(&target.exact_minimizer())?;
                target.loss_values(&f.eval_all())?
            }
            ActorMode::Sgd { steps, lr, batch } => {
                let sgd = SgdConfig { steps: *steps, lr: *lr, batch: *batch, seed: cfg.sgd_seed(k) };
                let out = sgd_minimize(&f, &target, &sgd)?;
                f = out.function;
                out.final_loss
            }
        };
        let fv = f.eval_all();
        if fv.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("non-finite dual iterate at iteration {k}")));
        }
        let actor_div = match mirror {
            MirrorKind::SquaredL2 => 0.5 * ActorTarget::dapo_l2(&current.pi, &qhat, eta, &weights)?.loss_values(&fv)?,
            _ => ActorTarget::dapo_kl(&current.log_pi, &qhat, eta, &weights)?.loss_values(&fv)?,
        };

        // projection
        let next = Iterate::project(mirror, &fv, ns, na)?;
        let kl_prev = expected_divergence(mirror, d_k.weights(), &next, &current, na);
        let (c, d_next) = ctx.transition(&d_k, &current.pi, &next.pi)?;
        constants.merge(c);
        est = evaluate_at(&next.pi)?;
        let value_gap = est.expected(&rho) - v_star;
        if !value_gap.is_finite() {
            return Err(Error::Divergence(format!("non-finite value at iteration {}", k + 1)));
        }
        records.push(IterationRecord {
            k: k + 1,
            eta,
            value_gap,
            actor_loss,
            actor_div,
            critic_err,
            kl_prev,
            d_star: expected_divergence(mirror, &d_star, &star, &next, na),
            vartheta_hat: constants.vartheta,
            c_rho_hat: constants.c_rho,
            c_rho_full: constants.c_rho_full,
        });
        policies.push(next.pi.clone());
        current = next;
        d_k = d_next;
    }
    Ok(IterationLog { records, policies, v_star, gamma: mdp.gamma(), sac_grad_mismatch: sac_mismatch })
}

/// Relative mismatch between `∇ loss_sac` and `τ ∇ loss_dapo_kl` at `η = 1/τ`.
fn sac_gradient_mismatch(
    f: &ApproxFunction,
    log_pi: &[f64],
    q_tau: &[f64],
    tau: f64,
    weights: &StateDistribution,
) -> Result<f64> {
    let soft: Vec<f64> = q_tau.iter().zip(log_pi).map(|(q, l)| q - tau * l).collect();
    let g_sac = loss_gradient(f, &ActorTarget::sac(&soft, tau, weights)?)?;
    let g_kl = loss_gradient(f, &ActorTarget::dapo_kl(log_pi, q_tau, 1.0 / tau, weights)?)?;
    let scale = g_sac.iter().fold(SAC_GRAD_FLOOR, |m, v| m.max(v.abs()));
    let diff = g_sac.iter().zip(&g_kl).map(|(a, b)| (a - tau * b).abs()).fold(0.0, f64::max);
    Ok(diff / scale)
}
