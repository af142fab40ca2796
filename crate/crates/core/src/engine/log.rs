use serde::Serialize;
use std::fmt::Write as _;
use std::path::Path;

use super::DapoConfig;
use crate::error::Result;
use crate::mdp::{sup_ratio, visitation, Policy, StateDistribution, TabularMdp};

pub const CSV_HEADER: &str = "k,eta,value_gap,actor_loss,critic_err,kl_prev,d_star,vartheta_hat,c_rho_hat";

/// Denominator floor for the ratio diagnostics, keeping them finite.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Diagnostics for the policy `π^(k)`.
///
/// `eta`, `actor_loss`, `actor_div`, `critic_err` and `kl_prev` describe the
/// step that produced `π^(k)` from `π^(k-1)` and are zero on row 0. The
/// constant estimates are running maxima over the transitions so far.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub eta: f64,
    pub value_gap: f64,
    /// Final value of the fitted actor loss.
    pub actor_loss: f64,
    /// `E_d D_Φ(∇Φ*(f), ∇Φ*(∇Φ(π) − ηQ̂))` for the projection's mirror map.
    pub actor_div: f64,
    /// Realized `E_d ‖Q̂_s − Q_s‖_∞`.
    pub critic_err: f64,
    /// `E_{d^(k-1)} D_Φ(π^(k), π^(k-1))`.
    pub kl_prev: f64,
    /// `E_{d*} D_Φ(π*, π^(k))`.
    pub d_star: f64,
    pub vartheta_hat: f64,
    /// Policy-ratio constant over states in the support of `d^(k-1)`.
    pub c_rho_hat: f64,
    /// The same over all states.
    pub c_rho_full: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationLog {
    pub records: Vec<IterationRecord>,
    /// `π^(0), …, π^(K)`.
    #[serde(skip)]
    pub policies: Vec<Policy>,
    /// Comparator values `V*_ρ` (regularized in entropy-regularized runs).
    pub v_star: f64,
    pub gamma: f64,
    /// Largest `|∇ loss_sac − τ ∇ loss_dapo_kl|` relative error seen, when checked.
    pub sac_grad_mismatch: Option<f64>,
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

impl IterationLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.k,
                f(r.eta),
                f(r.value_gap),
                f(r.actor_loss),
                f(r.critic_err),
                f(r.kl_prev),
                f(r.d_star),
                f(r.vartheta_hat),
                f(r.c_rho_hat)
            );
        }
        out
    }

    /// Records plus the configuration and seed that produced them.
    pub fn to_json(&self, cfg: &DapoConfig) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            seed: u64,
            config: &'a DapoConfig,
            v_star: f64,
            sac_grad_mismatch: Option<f64>,
            records: &'a [IterationRecord],
        }
        serde_json::to_string_pretty(&Doc {
            seed: cfg.seed,
            config: cfg,
            v_star: self.v_star,
            sac_grad_mismatch: self.sac_grad_mismatch,
            records: &self.records,
        })
        .expect("serializable log")
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn value_gaps(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.value_gap).collect()
    }

    pub fn final_gap(&self) -> f64 {
        self.records.last().map(|r| r.value_gap).unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatedConstants {
    /// Largest of the four visitation ratios over all transitions.
    pub vartheta: f64,
    /// Policy-ratio constant restricted to `supp(d^(k))`.
    pub c_rho: f64,
    /// Policy-ratio constant over all states.
    pub c_rho_full: f64,
}

impl EstimatedConstants {
    pub(crate) fn neutral() -> Self {
        EstimatedConstants { vartheta: 1.0, c_rho: 1.0, c_rho_full: 1.0 }
    }

    pub(crate) fn merge(&mut self, other: EstimatedConstants) {
        self.vartheta = self.vartheta.max(other.vartheta);
        self.c_rho = self.c_rho.max(other.c_rho);
        self.c_rho_full = self.c_rho_full.max(other.c_rho_full);
    }
}

fn policy_ratio(num: &[f64], den: &[f64]) -> f64 {
    sup_ratio(num, den, RATIO_FLOOR)
}

/// Visitation distributions shared by all transitions of one run.
pub(crate) struct ConstantsContext<'a> {
    pub mdp: &'a TabularMdp,
    pub rho: &'a StateDistribution,
    pub pi_star: &'a Policy,
    pub d_star: StateDistribution,
}

impl<'a> ConstantsContext<'a> {
    pub fn new(mdp: &'a TabularMdp, rho: &'a StateDistribution, pi_star: &'a Policy) -> Result<Self> {
        let d_star = visitation(mdp, pi_star, rho)?;
        Ok(ConstantsContext { mdp, rho, pi_star, d_star })
    }

    /// Constants for the transition `π^(k) → π^(k+1)`, given `d^(k)_ρ`.
    pub fn transition(
        &self,
        d_k: &StateDistribution,
        pi_k: &Policy,
        pi_next: &Policy,
    ) -> Result<(EstimatedConstants, StateDistribution)> {
        let d_next = visitation(self.mdp, pi_next, self.rho)?;
        let d_next_star = visitation(self.mdp, pi_next, &self.d_star)?;
        let (ds, dk, dn, dns) = (self.d_star.weights(), d_k.weights(), d_next.weights(), d_next_star.weights());
        let vartheta = [
            sup_ratio(ds, dn, RATIO_FLOOR),
            sup_ratio(dn, dk, RATIO_FLOOR),
            sup_ratio(dns, dk, RATIO_FLOOR),
            sup_ratio(dns, ds, RATIO_FLOOR),
        ]
        .into_iter()
        .fold(1.0, f64::max);
        let mut c_rho: f64 = 0.0;
        let mut c_full: f64 = 0.0;
        for (s, &w) in dk.iter().enumerate() {
            let c = policy_ratio(self.pi_star.row(s), pi_next.row(s)).max(policy_ratio(pi_k.row(s), pi_next.row(s)));
            c_full = c_full.max(c);
            if w > 0.0 {
                c_rho = c_rho.max(c);
            }
        }
        Ok((EstimatedConstants { vartheta, c_rho, c_rho_full: c_full }, d_next))
    }
}

/// Mismatch and policy-ratio constants of a completed run `π^(0), …, π^(K)`.
pub fn estimate_constants(
    mdp: &TabularMdp,
    policies: &[Policy],
    pi_star: &Policy,
    rho: &StateDistribution,
) -> Result<EstimatedConstants> {
    let ctx = ConstantsContext::new(mdp, rho, pi_star)?;
    let mut out = EstimatedConstants::neutral();
    let Some(first) = policies.first() else {
        return Ok(out);
    };
    let mut d_k = visitation(mdp, first, rho)?;
    for pair in policies.windows(2) {
        let (c, d_next) = ctx.transition(&d_k, &pair[0], &pair[1])?;
        out.merge(c);
        d_k = d_next;
    }
    Ok(out)
}
