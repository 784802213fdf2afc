use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mstcn::losses::{combined_loss, cross_entropy, LossConfig, SmoothingKind};
use mstcn::model::{ms_tcn_backward, ms_tcn_forward, ss_tcn_forward, ModelConfig, ModelParams};
use mstcn::tensor::{finite_diff_grad, max_relative_error, Tensor, DEFAULT_FD_EPS};

fn random_input(d: usize, t: usize, seed: u64) -> (Tensor, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Tensor::from_vec(&[d, t], (0..d * t).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let labels = (0..t).map(|i| (i / 5 + rng.gen_range(0..2)) % 4).collect();
    (x, labels)
}

fn config(stages: usize) -> ModelConfig {
    let mut cfg = ModelConfig::new(6, 4);
    cfg.stages = stages;
    cfg.layers = 3;
    cfg.filters = 8;
    cfg
}

#[test]
fn single_stage_cross_entropy_gradient() {
    let model = ModelParams::init(&config(1), 5).unwrap();
    let (x, labels) = random_input(6, 32, 5);
    let (outputs, cache) = ms_tcn_forward(&x, &model, true, 9).unwrap();
    let (_, g) = cross_entropy(&outputs[0], &labels).unwrap();
    let grads = ms_tcn_backward(&cache, &model, &[g]).unwrap();

    let mut probe = model.clone();
    for (i, (name, base)) in model.tensors().into_iter().enumerate() {
        let numeric = finite_diff_grad(
            |t| {
                *probe.stages[0].tensors_mut()[i].1 = t.clone();
                let (p, _) = ss_tcn_forward(&x, &probe.stages[0], model.config.dropout, true, 9).unwrap();
                cross_entropy(&p, &labels).unwrap().0
            },
            base,
            DEFAULT_FD_EPS,
        )
        .unwrap();
        *probe.stages[0].tensors_mut()[i].1 = base.clone();
        let err = max_relative_error(grads.tensors()[i].1, &numeric, 1e-6);
        assert!(err < 1e-4, "{name}: {err:.3e}");
    }
}

#[test]
fn later_stage_loss_reaches_the_first_stage() {
    let model = ModelParams::init(&config(2), 6).unwrap();
    let (x, labels) = random_input(6, 24, 6);
    let (outputs, cache) = ms_tcn_forward(&x, &model, true, 2).unwrap();
    let (_, g) = cross_entropy(&outputs[1], &labels).unwrap();
    let zero = outputs[0].zeros_like();
    let grads = ms_tcn_backward(&cache, &model, &[zero, g]).unwrap();
    for (name, t) in grads.stages[0].tensors() {
        assert!(t.max_abs() > 0.0, "{name} received no gradient");
    }
}

#[test]
fn passthrough_gradient_matches_finite_differences() {
    let mut cfg = config(2);
    cfg.feature_passthrough = true;
    let model = ModelParams::init(&cfg, 8).unwrap();
    let (x, labels) = random_input(6, 20, 8);
    let loss = LossConfig {
        lambda: 0.0,
        tau: 4.0,
        smoothing: SmoothingKind::None,
    };
    let (outputs, cache) = ms_tcn_forward(&x, &model, true, 3).unwrap();
    let l = combined_loss(&outputs, &labels, &loss).unwrap();
    let grads = ms_tcn_backward(&cache, &model, &l.grads).unwrap();
    let mut probe = model.clone();
    for (i, (name, base)) in model.tensors().into_iter().enumerate() {
        let numeric = finite_diff_grad(
            |t| {
                *probe.tensors_mut()[i].1 = t.clone();
                let (o, _) = ms_tcn_forward(&x, &probe, true, 3).unwrap();
                combined_loss(&o, &labels, &loss).unwrap().total
            },
            base,
            DEFAULT_FD_EPS,
        )
        .unwrap();
        *probe.tensors_mut()[i].1 = base.clone();
        let err = max_relative_error(grads.tensors()[i].1, &numeric, 1e-6);
        assert!(err < 1e-4, "{name}: {err:.3e}");
    }
}

#[test]
fn forward_is_deterministic_for_a_seed() {
    let model = ModelParams::init(&config(3), 1).unwrap();
    let (x, _) = random_input(6, 40, 1);
    let (a, _) = ms_tcn_forward(&x, &model, true, 11).unwrap();
    let (b, _) = ms_tcn_forward(&x, &model, true, 11).unwrap();
    let (c, _) = ms_tcn_forward(&x, &model, true, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    let (e1, _) = ms_tcn_forward(&x, &model, false, 11).unwrap();
    let (e2, _) = ms_tcn_forward(&x, &model, false, 99).unwrap();
    assert_eq!(e1, e2);
}
