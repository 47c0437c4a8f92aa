//! End-to-end training behaviour on small problems.

use std::path::Path;

use svgpvae::config::{DataSource, ExperimentConfig};
use svgpvae::models::{checkpoint, ModelKind};
use svgpvae::training::{
    build_experiment, evaluate_experiment, gradient_check_all, train, vanishing_phi, RunLog, RunStatus,
};

fn toy(kind: ModelKind, epochs: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(DataSource::ToyRegression);
    c.model.kind = kind;
    c.training.epochs = epochs;
    c
}

fn small_ball(epochs: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.model.encoder_hidden = vec![16];
    c.model.decoder_hidden = vec![16];
    c.model.inducing = 5;
    c.data.moving_ball.videos_per_epoch = 3;
    c.data.moving_ball.test_videos = 2;
    c.training.epochs = epochs;
    c.training.lr = 1e-2;
    c
}

fn run(cfg: &ExperimentConfig) -> (RunLog, Vec<u8>) {
    let mut e = build_experiment(cfg, Path::new(".")).unwrap();
    let log = train(&mut e, |_, _, _| Ok(())).unwrap();
    (log, checkpoint::to_container(&e.state).to_bytes())
}

#[test]
fn repeated_runs_are_bit_identical() {
    for cfg in [toy(ModelKind::Svgpvae, 5), small_ball(2)] {
        let (a, ca) = run(&cfg);
        let (b, cb) = run(&cfg);
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(ca, cb);
    }
}

#[test]
fn different_seeds_differ() {
    let mut c = toy(ModelKind::Svgpvae, 3);
    let (a, _) = run(&c);
    c.training.seed = 1;
    let (b, _) = run(&c);
    assert_ne!(a.to_json(), b.to_json());
}

#[test]
fn zero_epochs_keep_the_initialization() {
    let cfg = toy(ModelKind::Svgpvae, 0);
    let init = build_experiment(&cfg, Path::new(".")).unwrap().state;
    let (log, bytes) = run(&cfg);
    assert!(log.steps.is_empty());
    assert_eq!(bytes, checkpoint::to_container(&init).to_bytes());
}

#[test]
fn every_model_improves_on_toy_data() {
    for kind in [
        ModelKind::Pearce,
        ModelKind::Svgpvae,
        ModelKind::Lpt,
        ModelKind::DeepSvigp,
        ModelKind::PlainVae,
    ] {
        let (log, _) = run(&toy(kind, 120));
        assert_eq!(log.status, RunStatus::Completed, "{kind:?}");
        let mean = |r: &[svgpvae::training::EpochRecord]| r.iter().map(|e| e.mean_objective).sum::<f64>() / r.len() as f64;
        let early = mean(&log.epochs[..10]);
        let late = mean(&log.epochs[110..]);
        assert!(late > early, "{kind:?}: {early} -> {late}");
    }
}

#[test]
fn trained_toy_latents_track_the_truth() {
    let cfg = toy(ModelKind::Svgpvae, 200);
    let mut e = build_experiment(&cfg, Path::new(".")).unwrap();
    let before = evaluate_experiment(&e).unwrap().value;
    train(&mut e, |_, _, _| Ok(())).unwrap();
    let after = evaluate_experiment(&e).unwrap().value;
    assert!(after < before, "{before} -> {after}");
}

#[test]
fn divergence_aborts_with_last_good_state() {
    let mut cfg = toy(ModelKind::Svgpvae, 50);
    cfg.training.lr = 1e3;
    let mut e = build_experiment(&cfg, Path::new(".")).unwrap();
    let log = train(&mut e, |_, _, _| Ok(())).unwrap();
    assert!(matches!(log.status, RunStatus::Aborted { .. }), "{:?}", log.status);
    assert!(e.state.params.iter().all(|p| p.value.data().iter().all(|v| v.is_finite())));
}

#[test]
fn bias_vanishes_at_full_batch() {
    let mut cfg = toy(ModelKind::Svgpvae, 4);
    cfg.diagnostics.bias_tracking = true;
    let (log, _) = run(&cfg);
    assert!(log.epochs.iter().all(|e| e.bias.unwrap().abs() < 1e-10));
    cfg.training.batch_size = 10;
    let (log, _) = run(&cfg);
    assert!(log.epochs.iter().all(|e| e.bias.unwrap() > 0.0));
}

#[test]
fn first_step_gradient_check_is_recorded() {
    let mut cfg = toy(ModelKind::Svgpvae, 1);
    cfg.diagnostics.grad_check = true;
    let (log, _) = run(&cfg);
    assert!(log.grad_check.unwrap() < 1e-4);
}

#[test]
fn all_objectives_pass_gradient_checks() {
    for r in gradient_check_all(0).unwrap() {
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}

#[test]
fn encoder_gradient_vanishes_only_for_free_posterior() {
    let v = vanishing_phi(4).unwrap();
    assert!(v.lph <= 1e-12);
    assert!(v.svgpvae > 1e-8);
}

#[test]
fn geco_runs_record_lambda() {
    let mut cfg = toy(ModelKind::Svgpvae, 3);
    cfg.geco.enabled = true;
    let (log, _) = run(&cfg);
    assert!(log.steps.iter().all(|s| s.lambda.unwrap() > 0.0));
}
