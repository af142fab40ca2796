//! Dual-space function classes and the actor losses fitted to them.

mod function;
mod loss;

pub use function::{Activation, ApproxFunction, FunctionSpec, MlpSpec};
pub use loss::{
    loss, loss_ampo, loss_ampo_v2, loss_dapo_kl, loss_dapo_klstar, loss_dapo_l2, loss_gradient, loss_mampo, loss_sac,
    sgd_minimize, ActorTarget, LossKind, SgdConfig, SgdOutcome, KLSTAR_MAX_LOGIT,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{Policy, StateDistribution};
    use crate::mirror::{kl_divergence, MirrorKind, MirrorMap};
    use crate::rng::{dirichlet_ones, rng_from_seed, standard_normal_vec};
    use crate::{max_abs_diff, softmax};
    use proptest::prelude::*;
    use rand::Rng;

    fn one_state() -> StateDistribution {
        StateDistribution::uniform(1)
    }

    fn table(values: &[f64], n_actions: usize) -> ApproxFunction {
        let mut f = ApproxFunction::tabular(values.len() / n_actions, n_actions);
        f.fit_exact(values).unwrap();
        f
    }

    #[test]
    fn dapo_kl_examples() {
        let d = one_state();
        let p = [0.8f64, 0.2];
        let log_p: Vec<f64> = p.iter().map(|v| v.ln()).collect();
        let t = ActorTarget::dapo_kl(&log_p, &[0.0, 0.0], 1.0, &d).unwrap();
        let v = loss(&table(&[0.0, 0.0], 2), &t).unwrap();
        let oracle = 0.5 * (0.5f64 / 0.8).ln() + 0.5 * (0.5f64 / 0.2).ln();
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.2231435513142097).abs() < 1e-12);
        assert!(loss(&table(&log_p, 2), &t).unwrap().abs() < 1e-15);
        let shifted = loss(&table(&[3.0, 3.0], 2), &t).unwrap();
        assert!((shifted - v).abs() < 1e-15);
    }

    #[test]
    fn dapo_kl_rejects_zero_targets_on_support() {
        let d = StateDistribution::new(vec![1.0, 0.0]).unwrap();
        let log_pi = [0.0, f64::NEG_INFINITY, 0.0, f64::NEG_INFINITY];
        // second state has zero weight, first has an impossible action
        assert!(matches!(ActorTarget::dapo_kl(&log_pi, &[0.0; 4], 1.0, &d), Err(crate::Error::Domain(_))));
        let pi = Policy::new(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(loss_dapo_kl(&table(&[0.0, 0.0], 2), &pi, &[0.0, 0.0], 1.0, &one_state()).is_err());
    }

    #[test]
    fn dapo_klstar_examples() {
        let d = one_state();
        let t = ActorTarget::dapo_klstar(&[2f64.ln(), 0.0], &[0.0, 0.0], 1.0, &d).unwrap();
        // Σ x log(x/m) − x + m with x = e^0 = 1: (log ½ − 1 + 2) + (0 − 1 + 1)
        let v = loss(&table(&[0.0, 0.0], 2), &t).unwrap();
        assert!((v - (1.0 - 2f64.ln())).abs() < 1e-15);
        let orthant = MirrorMap::new(MirrorKind::NegEntropyOrthant, 2).unwrap();
        assert!((v - orthant.bregman(&[1.0, 1.0], &[2.0, 1.0]).unwrap()).abs() < 1e-15);
        assert!(loss(&table(&[2f64.ln(), 0.0], 2), &t).unwrap().abs() < 1e-15);
        let t1 = ActorTarget::dapo_klstar(&[0.0, 0.0], &[0.0, 0.0], 1.0, &d).unwrap();
        assert_eq!(loss(&table(&[0.0, 0.0], 2), &t1).unwrap(), 0.0);
        assert!(matches!(loss(&table(&[301.0, 0.0], 2), &t1), Err(crate::Error::Divergence(_))));
    }

    #[test]
    fn squared_loss_examples() {
        let d = one_state();
        let pi = Policy::new(1, 2, vec![1.0, 0.0]).unwrap();
        let t = ActorTarget::dapo_l2(&pi, &[0.0, 0.0], 1.0, &d).unwrap();
        assert_eq!(loss(&table(&[0.0, 0.0], 2), &t).unwrap(), 1.0);
        assert_eq!(loss(&table(&[1.0, 0.0], 2), &t).unwrap(), 0.0);

        let d2 = StateDistribution::uniform(2);
        let pi2 = Policy::new(2, 1, vec![1.0, 1.0]).unwrap();
        // per-state losses (0 − 1)² = 1 and (√3 + ... ) chosen to give 3
        let t2 = ActorTarget::dapo_l2(&pi2, &[0.0, 0.0], 1.0, &d2).unwrap();
        let f = table(&[0.0, 1.0 + 3f64.sqrt()], 1);
        assert!((loss(&f, &t2).unwrap() - 2.0).abs() < 1e-15);

        let u = Policy::uniform(1, 2);
        let v1 = loss_ampo(&table(&[0.0, 0.0], 2), &u, &[1.0, 0.0], 1.0, &d).unwrap();
        let oracle = (-(2f64.ln()) - 1.0).powi(2) + (2f64.ln()).powi(2);
        assert!((v1 - oracle).abs() < 1e-14);
        assert!((v1 - 3.347).abs() < 1e-3);
        let fk = table(&[0.5f64.ln(), 0.5f64.ln()], 2);
        let v2 = loss_ampo_v2(&table(&[0.0, 0.0], 2), &fk, &[1.0, 0.0], 1.0, &d).unwrap();
        assert_eq!(v1, v2);

        let half = Policy::uniform(1, 2);
        let m = loss_mampo(&table(&[0.0, 0.0], 2), &half, &[1.0, 1.0], 1.0, &d).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        assert_eq!(m, loss_dapo_l2(&table(&[0.0, 0.0], 2), &half, &[1.0, 1.0], 1.0, &d).unwrap());
    }

    #[test]
    fn every_loss_vanishes_at_its_exact_minimizer() {
        let mut rng = rng_from_seed(3);
        let (s, a) = (3, 4);
        let d = StateDistribution::new(dirichlet_ones(&mut rng, s)).unwrap();
        let pi = Policy::new(s, a, (0..s).flat_map(|_| dirichlet_ones(&mut rng, a)).collect()).unwrap();
        let log_pi: Vec<f64> = pi.probs().iter().map(|p| p.ln()).collect();
        let q: Vec<f64> = standard_normal_vec(&mut rng, s * a);
        let fk = standard_normal_vec(&mut rng, s * a);
        let targets = [
            ActorTarget::dapo_kl(&log_pi, &q, 0.7, &d).unwrap(),
            ActorTarget::dapo_klstar(&log_pi, &q, 0.7, &d).unwrap(),
            ActorTarget::dapo_l2(&pi, &q, 0.7, &d).unwrap(),
            ActorTarget::ampo(&log_pi, &q, 0.7, &d).unwrap(),
            ActorTarget::ampo_v2(&fk, &q, 0.7, &d).unwrap(),
            ActorTarget::mampo(&pi, &q, 0.7, &d).unwrap(),
            ActorTarget::sac(&q, 0.4, &d).unwrap(),
        ];
        for t in &targets {
            let f = table(&t.exact_minimizer(), a);
            let l = loss(&f, t).unwrap();
            let g = loss_gradient(&f, t).unwrap();
            let g_inf = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(g_inf <= 1e-10, "{}: grad {g_inf}", t.kind);
            if t.kind != LossKind::Sac {
                assert!(l.abs() < 1e-12, "{}: {l}", t.kind);
            }
            let random = table(&standard_normal_vec(&mut rng, s * a), a);
            assert!(loss(&random, t).unwrap() >= if t.kind == LossKind::Sac { f64::NEG_INFINITY } else { 0.0 });
        }
    }

    #[test]
    fn dapo_kl_equals_dual_bregman_form() {
        let mut rng = rng_from_seed(8);
        let (s, a) = (4, 3);
        let d = StateDistribution::new(dirichlet_ones(&mut rng, s)).unwrap();
        let pi = Policy::new(s, a, (0..s).flat_map(|_| dirichlet_ones(&mut rng, a)).collect()).unwrap();
        let q = standard_normal_vec(&mut rng, s * a);
        let eta = 1.3;
        let fv = standard_normal_vec(&mut rng, s * a);
        let f = table(&fv, a);
        let map = MirrorMap::new(MirrorKind::NegEntropySimplex, a).unwrap();
        let mut dual = 0.0;
        let mut dual_grad = vec![0.0; s * a];
        for st in 0..s {
            let g = map.grad(pi.row(st)).unwrap();
            let xs: Vec<f64> = g.iter().zip(&q[st * a..(st + 1) * a]).map(|(gi, qi)| gi - eta * qi).collect();
            let fs = &fv[st * a..(st + 1) * a];
            dual += d.weights()[st] * map.dual_bregman(&xs, fs).unwrap();
            // ∂/∂f D_{Φ*}(x*, f) = −∇²Φ*(f)(x* − f) = softmax-Jacobian applied to (f − x*)
            let sig = softmax(fs);
            let diff: Vec<f64> = fs.iter().zip(&xs).map(|(x, y)| x - y).collect();
            let m = crate::dot(&sig, &diff);
            for b in 0..a {
                dual_grad[st * a + b] = d.weights()[st] * sig[b] * (diff[b] - m);
            }
        }
        let l = loss_dapo_kl(&f, &pi, &q, eta, &d).unwrap();
        assert!((l - dual).abs() < 1e-12);
        let log_pi: Vec<f64> = pi.probs().iter().map(|p| p.ln()).collect();
        let g = loss_gradient(&f, &ActorTarget::dapo_kl(&log_pi, &q, eta, &d).unwrap()).unwrap();
        assert!(max_abs_diff(&g, &dual_grad) < 1e-9);
    }

    #[test]
    fn kl_gradients_ignore_constant_shifts() {
        let mut rng = rng_from_seed(2);
        let (s, a) = (3, 5);
        let d = StateDistribution::new(dirichlet_ones(&mut rng, s)).unwrap();
        let log_pi: Vec<f64> = (0..s).flat_map(|_| dirichlet_ones(&mut rng, a)).map(|p| p.ln()).collect();
        let q = standard_normal_vec(&mut rng, s * a);
        let f = table(&standard_normal_vec(&mut rng, s * a), a);
        for t in [ActorTarget::dapo_kl(&log_pi, &q, 2.0, &d).unwrap(), ActorTarget::sac(&q, 0.5, &d).unwrap()] {
            let g = loss_gradient(&f, &t).unwrap();
            for st in 0..s {
                assert!(g[st * a..(st + 1) * a].iter().sum::<f64>().abs() < 1e-10);
            }
        }
    }

    #[test]
    fn sac_gradient_is_tau_times_dapo_kl() {
        let mut rng = rng_from_seed(5);
        for _ in 0..20 {
            let (s, a) = (3, 4);
            let d = StateDistribution::new(dirichlet_ones(&mut rng, s)).unwrap();
            let pi: Vec<f64> = (0..s).flat_map(|_| dirichlet_ones(&mut rng, a)).collect();
            let log_pi: Vec<f64> = pi.iter().map(|p| p.ln()).collect();
            let q_soft = standard_normal_vec(&mut rng, s * a);
            let tau = 0.2 + rng.random_range(0.0..1.0);
            // Q_τ = q_τ + τ log π
            let big_q: Vec<f64> = q_soft.iter().zip(&log_pi).map(|(q, l)| q + tau * l).collect();
            let f = table(&standard_normal_vec(&mut rng, s * a), a);
            let g_sac = loss_gradient(&f, &ActorTarget::sac(&q_soft, tau, &d).unwrap()).unwrap();
            let g_kl = loss_gradient(&f, &ActorTarget::dapo_kl(&log_pi, &big_q, 1.0 / tau, &d).unwrap()).unwrap();
            let scale = g_sac.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in g_sac.iter().zip(&g_kl) {
                assert!((x - tau * y).abs() <= 1e-8 * scale.max(1e-300));
            }
        }
    }

    #[test]
    fn sac_optimum_flattens_with_large_tau() {
        let q = [0.3, 0.9, 0.1];
        let t = ActorTarget::sac(&q, 1e3, &one_state()).unwrap();
        let p = softmax(&t.exact_minimizer());
        assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() <= 1e-3));
        // and the exact minimizer is stationary
        let g = loss_gradient(&table(&t.exact_minimizer(), 3), &t).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn sgd_reaches_tabular_kl_target() {
        let mut rng = rng_from_seed(12);
        let (s, a) = (3, 3);
        let d = StateDistribution::uniform(s);
        let log_pi: Vec<f64> = (0..s).flat_map(|_| dirichlet_ones(&mut rng, a)).map(|p| p.ln()).collect();
        let q = standard_normal_vec(&mut rng, s * a);
        let t = ActorTarget::dapo_kl(&log_pi, &q, 0.5, &d).unwrap();
        let cfg = SgdConfig { steps: 20_000, lr: 0.5 * s as f64, batch: None, seed: 0 };
        let out = sgd_minimize(&ApproxFunction::tabular(s, a), &t, &cfg).unwrap();
        assert!(out.final_loss <= 1e-8, "{}", out.final_loss);
        let bad = SgdConfig { steps: 0, ..cfg.clone() };
        assert!(sgd_minimize(&ApproxFunction::tabular(s, a), &t, &bad).is_err());
    }

    #[test]
    fn sgd_is_deterministic_with_minibatches() {
        let mut rng = rng_from_seed(1);
        let (s, a) = (5, 3);
        let d = StateDistribution::uniform(s);
        let pi = Policy::uniform(s, a);
        let q = standard_normal_vec(&mut rng, s * a);
        let t = ActorTarget::dapo_l2(&pi, &q, 1.0, &d).unwrap();
        let f = ApproxFunction::mlp(s, a, MlpSpec::default(), 3).unwrap();
        let cfg = SgdConfig { steps: 30, lr: 0.05, batch: Some(2), seed: 77 };
        let a1 = sgd_minimize(&f, &t, &cfg).unwrap();
        let a2 = sgd_minimize(&f, &t, &cfg).unwrap();
        assert_eq!(a1.function.theta(), a2.function.theta());
        assert!(a1.final_loss < loss(&f, &t).unwrap());
    }

    #[test]
    fn sgd_reports_divergence() {
        let d = one_state();
        let pi = Policy::uniform(1, 2);
        let t = ActorTarget::dapo_l2(&pi, &[1e200, 0.0], 1.0, &d).unwrap();
        let cfg = SgdConfig { steps: 50, lr: 10.0, batch: None, seed: 0 };
        assert!(matches!(sgd_minimize(&ApproxFunction::tabular(1, 2), &t, &cfg), Err(crate::Error::Divergence(_))));
    }

    #[test]
    fn loss_kind_keys_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.key().parse::<LossKind>().unwrap(), k);
        }
        assert!("ppo".parse::<LossKind>().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn losses_are_nonnegative(seed in any::<u64>(), a in 2usize..6) {
            let mut rng = rng_from_seed(seed);
            let d = one_state();
            let pi = Policy::new(1, a, dirichlet_ones(&mut rng, a)).unwrap();
            let q = standard_normal_vec(&mut rng, a);
            let f = table(&standard_normal_vec(&mut rng, a), a);
            for v in [
                loss_dapo_kl(&f, &pi, &q, 1.0, &d).unwrap(),
                loss_dapo_klstar(&f, &pi, &q, 1.0, &d).unwrap(),
                loss_dapo_l2(&f, &pi, &q, 1.0, &d).unwrap(),
                loss_ampo(&f, &pi, &q, 1.0, &d).unwrap(),
                loss_mampo(&f, &pi, &q, 1.0, &d).unwrap(),
            ] {
                prop_assert!(v >= -1e-12);
            }
            let p = softmax(f.theta());
            let log_pi: Vec<f64> = pi.probs().iter().map(|x| x.ln()).collect();
            let t = ActorTarget::dapo_kl(&log_pi, &q, 1.0, &d).unwrap();
            let target: Vec<f64> = t.values.iter().map(|v| v.exp()).collect();
            prop_assert!((loss(&f, &t).unwrap() - kl_divergence(&p, &target).unwrap()).abs() < 1e-12);
        }
    }
}
