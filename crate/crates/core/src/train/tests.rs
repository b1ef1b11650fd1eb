use super::*;
use crate::adapters::{AdapterSpec, AdapterState};
use crate::densela::{random_matrix, Matrix, RngStream};
use crate::rotations::{packed_len, RotationMode};
use crate::svd::svd;

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm()
}

/// SSVD state reproducing an in-class task exactly, for any `kk ≥ truth.k`.
fn representing_state(task: &ShiftTask, truth: &InClassTruth, portion: f64) -> AdapterState {
    let spec = AdapterSpec::ssvd(portion, RotationMode::Strict);
    let mut rng = RngStream::new(0);
    let state = AdapterState::init(spec, &task.w0, &mut rng).unwrap();
    let kk = state.ssvd_k().unwrap();
    assert!(kk >= truth.k);
    let mut params = vec![0.0; kk];
    params[..truth.k].copy_from_slice(&truth.delta_sigma);
    let mut packed = Vec::with_capacity(packed_len(kk));
    let mut src = truth.skew.packed().iter();
    for i in 0..kk {
        for j in i + 1..kk {
            packed.push(if j < truth.k { *src.next().unwrap() } else { 0.0 });
        }
    }
    params.extend(packed);
    state.with_params(&params).unwrap()
}

#[test]
fn unshifted_inclass_task_is_the_base_weight() {
    let task = make_inclass_shift(&mut RngStream::new(1), 9, 7, 3, 0.0, 0.0, 0.0).unwrap();
    assert!(rel(&task.w_tgt, &task.w0) <= 1e-8);
    assert_eq!(task.shift_kind, ShiftKind::InClassRotation);
    assert_eq!((task.output_dim(), task.input_dim()), (9, 7));
}

#[test]
fn scale_only_shift_changes_only_top_spectrum() {
    let (task, truth) =
        make_inclass_shift_with_truth(&mut RngStream::new(2), 10, 8, 3, 0.0, 0.05, 0.0).unwrap();
    let before = svd(&task.w0).unwrap().sigma;
    let after = svd(&task.w_tgt).unwrap().sigma;
    let mut expected: Vec<f64> = before.clone();
    for i in 0..truth.k {
        expected[i] += truth.delta_sigma[i];
    }
    expected.sort_by(|a, b| b.partial_cmp(a).unwrap());
    for (got, want) in after.iter().zip(&expected) {
        assert!((got - want).abs() <= 1e-10 * before[0]);
    }
    // the residual spectrum is untouched
    for i in truth.k..8 {
        assert!((after[i] - before[i]).abs() <= 1e-10 * before[0]);
    }
}

#[test]
fn inclass_tasks_are_exactly_representable() {
    let mut rng = RngStream::new(3);
    for &(m, n, k) in &[(12, 9, 3), (8, 8, 4), (6, 10, 2)] {
        let (task, truth) = make_inclass_shift_with_truth(&mut rng, m, n, k, 0.7, 0.2, 0.0).unwrap();
        let r0 = m.min(n) as f64;
        for portion in [k as f64 / r0, (k + 1) as f64 / r0, 1.0] {
            let w = representing_state(&task, &truth, portion).effective_weight().unwrap();
            assert!(rel(&w, &task.w_tgt) <= 1e-8, "{m}x{n} k={k} p={portion}");
        }
    }
}

#[test]
fn inclass_rejects_bad_arguments() {
    let mut rng = RngStream::new(4);
    assert!(make_inclass_shift(&mut rng, 5, 4, 5, 0.1, 0.1, 0.0).is_err());
    assert!(make_inclass_shift(&mut rng, 5, 4, 0, 0.1, 0.1, 0.0).is_err());
    assert!(make_inclass_shift(&mut rng, 5, 4, 2, -0.1, 0.1, 0.0).is_err());
    assert!(make_lowrank_shift(&mut rng, 5, 4, 5, 0.1, 0.0).is_err());
}

#[test]
fn lowrank_shift_properties() {
    let mut rng = RngStream::new(5);
    let flat = make_lowrank_shift(&mut rng, 7, 5, 2, 0.0, 0.0).unwrap();
    assert_eq!(flat.w_tgt, flat.w0);

    let task = make_lowrank_shift(&mut rng, 7, 5, 1, 0.5, 0.0).unwrap();
    let diff = svd(&task.w_tgt.sub(&task.w0).unwrap()).unwrap();
    assert!(diff.sigma[1] <= 1e-10);
    let ratio = task.w_tgt.sub(&task.w0).unwrap().frobenius_norm() / task.w0.frobenius_norm();
    assert!((ratio - 0.5).abs() <= 1e-12);
}

#[test]
fn lowrank_tasks_are_representable_by_lora() {
    let mut rng = RngStream::new(6);
    let (task, a, b) = make_lowrank_shift_with_factors(&mut rng, 8, 6, 2, 0.4, 0.0).unwrap();
    for r in 2..=4 {
        let state = AdapterState::init(AdapterSpec::lora(r), &task.w0, &mut rng).unwrap();
        let a_full = Matrix::from_fn(8, r, |i, j| if j < 2 { a.get(i, j) } else { 0.0 });
        let b_full = Matrix::from_fn(6, r, |i, j| if j < 2 { b.get(i, j) } else { 0.0 });
        let mut p = a_full.into_vec();
        p.extend(b_full.into_vec());
        let w = state.with_params(&p).unwrap().effective_weight().unwrap();
        assert!(rel(&w, &task.w_tgt) <= 1e-10);
    }
}

#[test]
fn dense_shift_has_requested_size() {
    let task = make_dense_shift(&mut RngStream::new(7), 6, 6, 0.3, 0.0).unwrap();
    let ratio = task.w_tgt.sub(&task.w0).unwrap().frobenius_norm() / task.w0.frobenius_norm();
    assert!((ratio - 0.3).abs() <= 1e-12);
    assert_eq!("dense".parse::<ShiftKind>().unwrap(), ShiftKind::Dense);
}

#[test]
fn noiseless_batches_follow_the_teacher() {
    let task = make_dense_shift(&mut RngStream::new(8), 5, 4, 0.3, 0.0).unwrap();
    let (x, y) = gen_batch(&task, &mut RngStream::new(9), 16);
    assert!(task.w_tgt.matmul(&x).unwrap().max_abs_diff(&y) <= 1e-12);
    let again = gen_batch(&task, &mut RngStream::new(9), 16);
    assert_eq!((x, y), again);
}

#[test]
fn noisy_batches_have_requested_spread() {
    let task = make_dense_shift(&mut RngStream::new(10), 3, 3, 0.3, 0.5).unwrap();
    let (x, y) = gen_batch(&task, &mut RngStream::new(11), 20_000);
    let resid = y.sub(&task.w_tgt.matmul(&x).unwrap()).unwrap();
    let var = resid.as_slice().iter().map(|v| v * v).sum::<f64>() / resid.len() as f64;
    assert!((var - 0.25).abs() <= 0.01, "{var}");
}

#[test]
fn batch_inputs_have_identity_covariance() {
    let task = make_dense_shift(&mut RngStream::new(12), 2, 4, 0.1, 0.0).unwrap();
    let samples = 100_000;
    let (x, _) = gen_batch(&task, &mut RngStream::new(13), samples);
    let cov = x.matmul_t(&x).unwrap().scale(1.0 / samples as f64);
    assert!(cov.max_abs_diff(&Matrix::identity(4)) <= 0.05);
}

#[test]
fn mse_examples() {
    let t = Matrix::from_rows(&[&[1.0, 2.0], &[3.0, 4.0]]);
    assert_eq!(mse_loss(&t, &t).unwrap(), 0.0);
    let p = t.map(|v| v + 1.0);
    assert_eq!(mse_loss(&p, &t).unwrap(), 1.0);
    assert!(mse_loss(&p, &Matrix::zeros(2, 3)).is_err());
    assert!(mse_grad(&p, &Matrix::zeros(3, 2)).is_err());
}

#[test]
fn mse_gradient_matches_central_differences() {
    let mut rng = RngStream::new(14);
    let pred = random_matrix(&mut rng, 3, 4, 1.0);
    let target = random_matrix(&mut rng, 3, 4, 1.0);
    let analytic = mse_grad(&pred, &target).unwrap();
    let numeric = central_difference(
        |p| mse_loss(&Matrix::from_vec(3, 4, p.to_vec())?, &target),
        pred.as_slice(),
        1e-6,
    )
    .unwrap();
    for (a, n) in analytic.as_slice().iter().zip(&numeric) {
        assert!((a - n).abs() <= 1e-8);
    }
}

#[test]
fn gradcheck_harness_flags_wrong_gradients() {
    let ok = GradCheck::compare(&[1.0, 2.0], &[1.0, 2.0 + 1e-9]);
    assert!(ok.rel_error <= 1e-9);
    let bad = GradCheck::compare(&[1.0, -2.0], &[1.0, 2.0]);
    assert!(bad.rel_error >= 1.0);
}

#[test]
fn two_layer_host_gradients() {
    let mut rng = RngStream::new(15);
    let w1 = random_matrix(&mut rng, 5, 4, 0.8);
    let w2 = random_matrix(&mut rng, 3, 5, 0.8);
    let x = random_matrix(&mut rng, 4, 6, 1.0);
    let up = random_matrix(&mut rng, 3, 6, 1.0);
    for spec in [
        AdapterSpec::lora(2),
        AdapterSpec::dora(1),
        AdapterSpec::ssvd(0.75, RotationMode::Strict),
    ] {
        let host = TwoLayerHost::init(spec, &w1, &w2, &mut rng).unwrap();
        let delta: Vec<f64> = (0..host.param_count()).map(|_| rng.uniform(0.2)).collect();
        let p: Vec<f64> = host.params().iter().zip(&delta).map(|(a, b)| a + b).collect();
        let host = host.with_params(&p).unwrap();
        let analytic = host.param_gradients(&x, &up).unwrap();
        let numeric = central_difference(
            |q| {
                let y = host.with_params(q)?.forward(&x)?;
                Ok(y.as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum())
            },
            &p,
            1e-5,
        )
        .unwrap();
        let check = GradCheck::compare(&analytic, &numeric);
        assert!(check.rel_error <= 1e-6, "{spec}: {check:?}");
    }
    assert!(TwoLayerHost::init(AdapterSpec::lora(1), &w1, &w1, &mut rng).is_err());
}

fn sgd(lr: f64, epochs: usize) -> TrainConfig {
    TrainConfig {
        optimizer: Optimizer::Sgd,
        learning_rate: lr,
        epochs,
        batch_size: 32,
        samples_per_epoch: 64,
        seed: 21,
        loss_threshold: Some(1e-6),
    }
}

#[test]
fn zero_learning_rate_keeps_initial_loss() {
    let task = make_inclass_shift(&mut RngStream::new(16), 8, 6, 2, 0.5, 0.1, 0.0).unwrap();
    let res = train_run(&task, AdapterSpec::lora(2), &sgd(0.0, 5)).unwrap();
    let (x, y) = task.held_out();
    let init = mse_loss(&task.w0.matmul(&x).unwrap(), &y).unwrap();
    assert_eq!(res.loss_curve.len(), 5);
    assert!(res.loss_curve.iter().all(|&l| l == init));
    assert_eq!(res.final_loss, init);
    assert!(!res.diverged);
}

#[test]
fn ssvd_fits_inclass_task() {
    let task = make_inclass_shift(&mut RngStream::new(17), 16, 12, 4, 0.5, 0.1, 0.0).unwrap();
    let spec = AdapterSpec::ssvd(4.0 / 12.0, RotationMode::Strict);
    let res = train_run(&task, spec, &sgd(0.05, 500)).unwrap();
    assert!(res.final_loss <= 1e-6, "{}", res.final_loss);
    assert_eq!(res.trainable_params, 10);
    assert!(res.epochs_to_threshold.is_some());
    assert_eq!(res.loss_curve.len(), 500);
    assert_eq!(*res.loss_curve.last().unwrap(), res.final_loss);
}

#[test]
fn lora_fits_lowrank_task() {
    let task = make_lowrank_shift(&mut RngStream::new(18), 16, 12, 2, 0.3, 0.0).unwrap();
    let cfg = TrainConfig {
        optimizer: Optimizer::Adam,
        learning_rate: 0.01,
        epochs: 500,
        ..sgd(0.0, 0)
    };
    let res = train_run(&task, AdapterSpec::lora(2), &cfg).unwrap();
    assert!(res.final_loss <= 1e-6, "{}", res.final_loss);
}

#[test]
fn training_is_deterministic() {
    let task = make_inclass_shift(&mut RngStream::new(19), 8, 6, 2, 0.5, 0.1, 0.0).unwrap();
    let spec = AdapterSpec::ssvd(0.5, RotationMode::Approximate);
    let a = train_run(&task, spec, &sgd(0.05, 20)).unwrap();
    let b = train_run(&task, spec, &sgd(0.05, 20)).unwrap();
    let bits = |r: &RunResult| r.loss_curve.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    let mut other = sgd(0.05, 20);
    other.seed += 1;
    let c = train_run(&task, spec, &other).unwrap();
    assert_ne!(bits(&a), bits(&c));
}

#[test]
fn divergence_is_flagged_not_fatal() {
    let task = make_dense_shift(&mut RngStream::new(20), 8, 6, 0.5, 0.0).unwrap();
    let res = train_run(&task, AdapterSpec::lora(2), &sgd(1e6, 50)).unwrap();
    assert!(res.diverged);
    assert!(res.final_loss.is_finite());
    assert!(res.loss_curve.len() < 50);
}

#[test]
fn invalid_config_is_rejected() {
    let task = make_dense_shift(&mut RngStream::new(21), 4, 4, 0.5, 0.0).unwrap();
    assert!(train_run(&task, AdapterSpec::lora(1), &sgd(-1.0, 5)).is_err());
    assert!(train_run(&task, AdapterSpec::lora(1), &sgd(0.1, 0)).is_err());
    assert!(train_run(&task, AdapterSpec::lora(5), &sgd(0.1, 5)).is_err());
}
