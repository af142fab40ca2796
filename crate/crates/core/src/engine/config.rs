use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{ApproxFunction, LossKind, MlpSpec};
use crate::error::{Error, Result};
use crate::mdp::{Policy, StateDistribution, TabularMdp};
use crate::mirror::MirrorKind;
use crate::rng::{rng_from_seed, split_seed, DapoRng};

/// Step sizes beyond this are clamped; the targets stay finite because they
/// are formed in log space.
pub const ETA_CAP: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StepSchedule {
    /// `η_k = eta0 · ratio^k`; `ratio = None` uses `ϑ / (ϑ − 1)`.
    Geometric {
        eta0: f64,
        ratio: Option<f64>,
    },
    Constant {
        eta: f64,
    },
}

/// Smallest admissible growth ratio for a mismatch coefficient `vartheta`.
pub fn default_ratio(vartheta: f64) -> f64 {
    vartheta / (vartheta - 1.0)
}

impl StepSchedule {
    /// Checks the schedule against the mismatch coefficient and resolves a
    /// default ratio.
    pub fn resolve(self, vartheta: f64) -> Result<StepSchedule> {
        match self {
            StepSchedule::Constant { eta } => {
                if !(eta > 0.0 && eta.is_finite()) {
                    return Err(Error::config(format!("constant step size must be positive, got {eta}")));
                }
                Ok(self)
            }
            StepSchedule::Geometric { eta0, ratio } => {
                if !(eta0 > 1.0 && eta0.is_finite()) {
                    return Err(Error::config(format!("geometric schedule needs eta0 > 1, got {eta0}")));
                }
                if !(vartheta > 1.0) {
                    return Err(Error::config(format!("geometric schedule needs vartheta > 1, got {vartheta}")));
                }
                let min = default_ratio(vartheta);
                let ratio = ratio.unwrap_or(min);
                if !(ratio.is_finite() && ratio >= min * (1.0 - 1e-12)) {
                    return Err(Error::config(format!(
                        "geometric ratio {ratio} is below vartheta/(vartheta-1) = {min}"
                    )));
                }
                Ok(StepSchedule::Geometric { eta0, ratio: Some(ratio) })
            }
        }
    }

    /// Step size at iteration `k`, capped at [`ETA_CAP`].
    pub fn eta(&self, k: usize) -> Result<f64> {
        let v = match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::Geometric { eta0, ratio } => {
                let r = ratio.ok_or_else(|| Error::config("geometric ratio not resolved"))?;
                if !(eta0 > 1.0) || !(r >= 1.0) {
                    return Err(Error::config("geometric schedule needs eta0 > 1 and ratio >= 1"));
                }
                eta0 * r.powi(k.min(i32::MAX as usize) as i32)
            }
        };
        Ok(v.min(ETA_CAP))
    }
}

/// `η_k` for a schedule whose ratio is set explicitly.
pub fn schedule_eta(s: &StepSchedule, k: usize) -> Result<f64> {
    s.eta(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CriticConfig {
    Exact,
    /// I.i.d. uniform noise per state-action pair, scaled so that
    /// `E_s ‖Q̂_s − Q_s‖_∞ = epsilon` in expectation.
    UniformNoise {
        epsilon: f64,
    },
}

impl CriticConfig {
    pub fn epsilon(&self) -> f64 {
        match self {
            CriticConfig::Exact => 0.0,
            CriticConfig::UniformNoise { epsilon } => *epsilon,
        }
    }
}

/// Half-width of the uniform noise whose sup-norm over `n_actions` entries
/// has mean `epsilon`: the max of `n` i.i.d. `U[0,1]` has mean `n / (n+1)`.
pub fn calibrated_half_width(epsilon: f64, n_actions: usize) -> f64 {
    epsilon * (n_actions as f64 + 1.0) / n_actions as f64
}

pub(crate) struct Critic {
    half_width: f64,
    rng: DapoRng,
}

impl Critic {
    pub(crate) fn new(cfg: &CriticConfig, n_actions: usize, seed: u64) -> Result<Self> {
        let eps = cfg.epsilon();
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::config(format!("critic epsilon must be nonnegative, got {eps}")));
        }
        Ok(Critic { half_width: calibrated_half_width(eps, n_actions), rng: rng_from_seed(seed) })
    }

    /// Perturbs exact Q-values in place.
    pub(crate) fn corrupt(&mut self, q: &mut [f64]) {
        if self.half_width == 0.0 {
            return;
        }
        for v in q.iter_mut() {
            *v += self.half_width * (2.0 * self.rng.random::<f64>() - 1.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FunctionConfig {
    Tabular,
    /// `dim = None` gives one-hot state-action features.
    Linear {
        dim: Option<usize>,
    },
    Mlp(MlpSpec),
}

impl FunctionConfig {
    pub fn build(&self, n_states: usize, n_actions: usize, seed: u64) -> Result<ApproxFunction> {
        match self {
            FunctionConfig::Tabular => Ok(ApproxFunction::tabular(n_states, n_actions)),
            FunctionConfig::Linear { dim: None } => Ok(ApproxFunction::linear_one_hot(n_states, n_actions)),
            FunctionConfig::Linear { dim: Some(d) } => ApproxFunction::linear_random(n_states, n_actions, *d, seed),
            FunctionConfig::Mlp(spec) => ApproxFunction::mlp(n_states, n_actions, spec.clone(), seed),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum ActorMode {
    /// Closed-form minimizer; needs a tabular function class.
    Exact,
    Sgd {
        steps: usize,
        lr: f64,
        batch: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DapoConfig {
    pub algorithm: LossKind,
    /// Mirror map used for projection; `None` picks the algorithm's natural map.
    pub mirror: Option<MirrorKind>,
    pub function: FunctionConfig,
    pub schedule: StepSchedule,
    pub critic: CriticConfig,
    pub actor: ActorMode,
    pub iterations: usize,
    /// Entropy regularization; `0` is the unregularized problem.
    pub tau: f64,
    /// Initial-state distribution; uniform when `None`.
    pub rho: Option<StateDistribution>,
    /// Mismatch coefficient for schedule checks; `|S| / (1 − γ)` when `None`.
    pub vartheta: Option<f64>,
    /// Replaces `d^(k)` as the actor's state weighting.
    pub weights: Option<StateDistribution>,
    /// Uniform when `None`.
    pub initial_policy: Option<Policy>,
    pub seed: u64,
}

impl DapoConfig {
    /// A minimal configuration: tabular function, exact critic and actor.
    pub fn new(algorithm: LossKind, schedule: StepSchedule, iterations: usize) -> Self {
        DapoConfig {
            algorithm,
            mirror: None,
            function: FunctionConfig::Tabular,
            schedule,
            critic: CriticConfig::Exact,
            actor: ActorMode::Exact,
            iterations,
            tau: 0.0,
            rho: None,
            vartheta: None,
            weights: None,
            initial_policy: None,
            seed: 0,
        }
    }

    pub fn mirror_kind(&self) -> MirrorKind {
        self.mirror.unwrap_or(natural_mirror(self.algorithm))
    }

    pub fn vartheta_for(&self, mdp: &TabularMdp) -> f64 {
        self.vartheta.unwrap_or(mdp.n_states() as f64 / (1.0 - mdp.gamma()))
    }

    pub(crate) fn function_seed(&self) -> u64 {
        split_seed(self.seed, 1)
    }

    pub(crate) fn critic_seed(&self) -> u64 {
        split_seed(self.seed, 2)
    }

    pub(crate) fn sgd_seed(&self, k: usize) -> u64 {
        split_seed(self.seed, 1000 + k as u64)
    }

    /// Validates the configuration against an MDP.
    pub fn validate(&self, mdp: &TabularMdp) -> Result<()> {
        check_compatible(self.algorithm, self.mirror_kind())?;
        if let ActorMode::Sgd { steps, lr, batch } = &self.actor {
            if *steps == 0 {
                return Err(Error::config("actor steps must be at least 1"));
            }
            if !(*lr > 0.0) {
                return Err(Error::config(format!("actor learning rate must be positive, got {lr}")));
            }
            if *batch == Some(0) {
                return Err(Error::config("minibatch size must be positive"));
            }
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(Error::config(format!("tau must be nonnegative, got {}", self.tau)));
        }
        if self.algorithm == LossKind::Sac && self.tau == 0.0 {
            return Err(Error::config("the sac algorithm needs tau > 0"));
        }
        for (name, dist) in [("rho", &self.rho), ("weights", &self.weights)] {
            if let Some(d) = dist {
                if d.len() != mdp.n_states() {
                    return Err(Error::config(format!(
                        "{name} has {} entries, the MDP has {} states",
                        d.len(),
                        mdp.n_states()
                    )));
                }
            }
        }
        if let Some(p) = &self.initial_policy {
            if p.n_states() != mdp.n_states() || p.n_actions() != mdp.n_actions() {
                return Err(Error::config("initial policy shape does not match the MDP"));
            }
            if self.mirror_kind().is_entropy() && !p.is_strictly_positive() {
                return Err(Error::config("entropy mirror maps need a strictly positive initial policy"));
            }
        }
        self.schedule.resolve(self.vartheta_for(mdp))?;
        Ok(())
    }
}

pub fn natural_mirror(algorithm: LossKind) -> MirrorKind {
    match algorithm {
        LossKind::DapoL2 => MirrorKind::SquaredL2,
        LossKind::DapoKlStar | LossKind::Ampo | LossKind::AmpoV2 | LossKind::Mampo => MirrorKind::NegEntropyOrthant,
        LossKind::DapoKl | LossKind::Sac => MirrorKind::NegEntropySimplex,
    }
}

/// Which projections each actor loss may be paired with.
pub fn check_compatible(algorithm: LossKind, mirror: MirrorKind) -> Result<()> {
    let ok = match algorithm {
        LossKind::DapoL2 => mirror == MirrorKind::SquaredL2,
        LossKind::DapoKl | LossKind::Sac => mirror == MirrorKind::NegEntropySimplex,
        LossKind::DapoKlStar | LossKind::Ampo | LossKind::AmpoV2 | LossKind::Mampo => mirror.is_entropy(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!("algorithm {algorithm} cannot be paired with mirror map {mirror}")))
    }
}
