use std::fs;

use dapo::approx::LossKind;
use dapo::engine::{execute, CriticConfig, DapoConfig, StepSchedule};
use dapo::experiments::{cmd_gen_mdp, cmd_verify, ExperimentConfig, VerifyOptions};
use dapo::mdp::{evaluate, gridworld, read_mdp, solve_optimal, write_mdp, Policy, StateDistribution};
use dapo::theory::{Lemma, Witness};
use dapo::Error;

#[test]
fn mdp_file_round_trip_preserves_values_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = gridworld(4, 0.2, 0.95, 3).unwrap();
    let path = dir.path().join("g.json");
    write_mdp(&mdp, &path).unwrap();
    let back = read_mdp(&path).unwrap();
    assert_eq!(back, mdp);
    let pi = Policy::uniform(16, 4);
    assert_eq!(evaluate(&back, &pi).unwrap().v, evaluate(&mdp, &pi).unwrap().v);
}

#[test]
fn generated_mdp_feeds_a_file_sourced_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("exp.toml");
    fs::write(
        &cfg_path,
        r#"
seed = 4
algorithm = "dapo_l2"
iterations = 30

[mdp]
source = "file"
path = "model.json"

[schedule]
kind = "geometric"
eta0 = 2.0
ratio = 2.0
"#,
    )
    .unwrap();
    let gen = dir.path().join("gen.toml");
    fs::write(&gen, "seed = 4\n[mdp]\nsource = \"random\"\nn_states = 6\nn_actions = 3\ngamma = 0.9\n").unwrap();
    let mdp = cmd_gen_mdp(&gen, None, &dir.path().join("model.json")).unwrap();

    let cfg = ExperimentConfig::load(&cfg_path).unwrap();
    let loaded = cfg.build_mdp().unwrap();
    assert_eq!(loaded, mdp);
    let log = execute(&loaded, &cfg.to_dapo(&loaded, 0).unwrap()).unwrap();
    assert!(log.final_gap() < 1e-8);
}

#[test]
fn optimal_policy_is_a_fixed_point_of_the_exact_update() {
    let mdp = gridworld(3, 0.1, 0.9, 0).unwrap();
    let (pi_star, _) = solve_optimal(&mdp).unwrap();
    let mut cfg = DapoConfig::new(LossKind::DapoL2, StepSchedule::Constant { eta: 1.0 }, 5);
    cfg.initial_policy = Some(pi_star.clone());
    let log = execute(&mdp, &cfg).unwrap();
    for p in &log.policies {
        assert_eq!(p, &pi_star);
    }
    assert!(log.value_gaps().iter().all(|g| g.abs() < 1e-12));
}

#[test]
fn noisy_critic_error_tracks_the_requested_level() {
    let mdp = gridworld(3, 0.1, 0.9, 1).unwrap();
    let mut cfg = DapoConfig::new(LossKind::DapoKl, StepSchedule::Constant { eta: 0.5 }, 400);
    cfg.critic = CriticConfig::UniformNoise { epsilon: 0.1 };
    cfg.rho = Some(StateDistribution::uniform(9));
    let log = execute(&mdp, &cfg).unwrap();
    let mean = log.records[1..].iter().map(|r| r.critic_err).sum::<f64>() / 400.0;
    assert!((mean - 0.1).abs() < 0.01, "{mean}");
}

#[test]
fn verify_witness_replays_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let opts = VerifyOptions { samples: Some(300), seed: 5, bregman_offset: 0.5 };
    let out = cmd_verify("pythagorean_kl", &opts, dir.path()).unwrap();
    assert!(!out.passed());
    let w = Witness::from_json(&fs::read_to_string(&out.witnesses[0]).unwrap()).unwrap();
    assert_eq!(w.lemma, Lemma::PythagoreanKl);
    let checks = w.replay().unwrap();
    assert!(checks.iter().any(|c| !c.holds));

    let clean = VerifyOptions { samples: Some(300), seed: 5, bregman_offset: 0.0 };
    assert!(cmd_verify("pythagorean_kl", &clean, dir.path()).unwrap().passed());
    assert!(matches!(cmd_verify("bogus", &clean, dir.path()), Err(Error::Config(_)) | Err(Error::Parse(_))));
}

#[test]
fn documented_example_config_is_valid() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.repetitions, 3);
    assert!(cfg.sweep.is_some() && cfg.compare.is_some());
    let mdp = cfg.build_mdp().unwrap();
    cfg.to_dapo(&mdp, 0).unwrap();
    assert_eq!(dapo::experiments::sweep_grid(&cfg).unwrap().len(), 16);
}
