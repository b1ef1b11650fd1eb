use std::sync::Arc;

use super::*;
use crate::densela::{column_norms, matmul, random_matrix, Matrix, RngStream};
use crate::error::Error;
use crate::rotations::RotationMode;

fn all_specs(rank: usize) -> Vec<AdapterSpec> {
    vec![
        AdapterSpec::lora(rank),
        AdapterSpec::vera(rank, 77),
        AdapterSpec::dora(rank),
        AdapterSpec::pissa(rank),
        AdapterSpec::svft(SvftVariant::Plain),
        AdapterSpec::svft(SvftVariant::Banded { d: 1 }),
        AdapterSpec::svft(SvftVariant::Random { density: 0.3 }),
        AdapterSpec::svft(SvftVariant::TopK { count: 3 }),
        AdapterSpec::ssvd(0.5, RotationMode::Strict),
        AdapterSpec::ssvd(0.5, RotationMode::Approximate),
        AdapterSpec::ssvd(0.5, RotationMode::Unconstrained),
    ]
}

fn perturbed(state: &AdapterState, rng: &mut RngStream, scale: f64) -> AdapterState {
    let delta: Vec<f64> = (0..state.trainable_param_count())
        .map(|_| rng.uniform(scale))
        .collect();
    state.apply_update(&delta).unwrap()
}

fn rel(a: &Matrix, b: &Matrix) -> f64 {
    a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
}

#[test]
fn lora_init_is_exact_no_op() {
    let mut rng = RngStream::new(1);
    let w0 = random_matrix(&mut rng, 8, 6, 1.0);
    let s = AdapterState::init(AdapterSpec::lora(4), &w0, &mut rng).unwrap();
    assert_eq!(s.effective_weight().unwrap(), w0);
}

#[test]
fn every_method_starts_at_the_base_weight() {
    let mut rng = RngStream::new(2);
    let w0 = random_matrix(&mut rng, 8, 6, 1.0);
    for spec in all_specs(2) {
        let s = AdapterState::init(spec, &w0, &mut rng).unwrap();
        let err = rel(&s.effective_weight().unwrap(), &w0);
        assert!(err <= 1e-8, "{spec}: {err}");
        assert_eq!(s.params().len(), s.trainable_param_count(), "{spec}");
    }
}

#[test]
fn lora_outer_product() {
    let mut rng = RngStream::new(3);
    let s = AdapterState::init(AdapterSpec::lora(1), &Matrix::zeros(2, 2), &mut rng).unwrap();
    let s = s.with_params(&[1.0, 0.0, 0.0, 1.0]).unwrap();
    let expected = Matrix::from_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
    assert_eq!(s.effective_weight().unwrap(), expected);
}

#[test]
fn svft_plain_on_diagonal_weight() {
    let mut rng = RngStream::new(4);
    let w0 = Matrix::diag(&[3.0, 2.0]);
    let s = AdapterState::init(AdapterSpec::svft(SvftVariant::Plain), &w0, &mut rng).unwrap();
    let s = s.with_params(&[0.5, -0.5]).unwrap();
    let w = s.effective_weight().unwrap();
    assert!(w.max_abs_diff(&Matrix::diag(&[3.5, 1.5])) <= 1e-15);
}

#[test]
fn ssvd_strict_rotation_on_diagonal_weight() {
    let mut rng = RngStream::new(5);
    let w0 = Matrix::diag(&[3.0, 2.0]);
    let spec = AdapterSpec::ssvd(1.0, RotationMode::Strict);
    let s = AdapterState::init(spec, &w0, &mut rng).unwrap();
    // ΔΣ = [0, 0], packed K = [0.5]
    let s = s.with_params(&[0.0, 0.0, 0.5]).unwrap();
    let expected = Matrix::from_rows(&[&[1.8, -2.4], &[1.6, 1.2]]);
    assert!(s.effective_weight().unwrap().max_abs_diff(&expected) <= 1e-14);
}

#[test]
fn ssvd_wide_layer_rotates_input_side() {
    let mut rng = RngStream::new(6);
    let w0 = random_matrix(&mut rng, 4, 7, 1.0);
    let spec = AdapterSpec::ssvd(0.5, RotationMode::Strict);
    let s = perturbed(&AdapterState::init(spec, &w0, &mut rng).unwrap(), &mut rng, 0.2);
    let basis = s.basis().unwrap();
    // left singular vectors are untouched: Uᵀ W' V beyond k is diag(σ)
    let core = basis
        .left
        .t_matmul(&s.effective_weight().unwrap())
        .unwrap()
        .matmul(&basis.right)
        .unwrap();
    let k = s.ssvd_k().unwrap();
    for i in 0..4 {
        for j in 0..4 {
            if i >= k || j >= k {
                let want = if i == j { basis.sigma[i] } else { 0.0 };
                assert!((core.get(i, j) - want).abs() <= 1e-10);
            }
        }
    }
}

#[test]
fn dora_columns_follow_magnitude() {
    let mut rng = RngStream::new(7);
    let w0 = random_matrix(&mut rng, 6, 4, 1.0);
    let s = AdapterState::init(AdapterSpec::dora(2), &w0, &mut rng).unwrap();
    for _ in 0..10 {
        let mut p: Vec<f64> = (0..s.trainable_param_count()).map(|_| rng.uniform(1.0)).collect();
        let len = p.len();
        for mag in &mut p[len - 4..] {
            *mag = mag.abs() + 0.1;
        }
        let t = s.with_params(&p).unwrap();
        let norms = column_norms(&t.effective_weight().unwrap());
        for (got, want) in norms.iter().zip(&p[len - 4..]) {
            assert!((got - want).abs() <= 1e-10);
        }
    }
}

#[test]
fn vera_layers_share_frozen_factors() {
    let mut rng = RngStream::new(8);
    let w1 = random_matrix(&mut rng, 6, 5, 1.0);
    let w2 = random_matrix(&mut rng, 6, 5, 1.0);
    let a = AdapterState::init(AdapterSpec::vera(3, 99), &w1, &mut rng).unwrap();
    let b = AdapterState::init(AdapterSpec::vera(3, 99), &w2, &mut RngStream::new(0)).unwrap();
    assert_eq!(a.vera_shared().unwrap(), b.vera_shared().unwrap());
    let shared = Arc::clone(a.vera_shared().unwrap());
    let c = AdapterState::init_vera_shared(AdapterSpec::vera(3, 99), &w2, shared).unwrap();
    assert!(Arc::ptr_eq(a.vera_shared().unwrap(), c.vera_shared().unwrap()));
}

#[test]
fn forward_matches_dense_reference() {
    let mut rng = RngStream::new(9);
    let w0 = random_matrix(&mut rng, 7, 5, 1.0);
    let x = random_matrix(&mut rng, 5, 6, 1.0);
    for spec in all_specs(2) {
        let s = perturbed(&AdapterState::init(spec, &w0, &mut rng).unwrap(), &mut rng, 0.3);
        let dense = matmul(&s.effective_weight().unwrap(), &x).unwrap();
        let fast = s.forward(&x).unwrap();
        assert!(fast.max_abs_diff(&dense) <= 1e-12, "{spec}");
        assert_eq!(s.forward(&Matrix::zeros(5, 3)).unwrap(), Matrix::zeros(7, 3));
    }
    let s = AdapterState::init(AdapterSpec::lora(2), &w0, &mut rng).unwrap();
    assert!(matches!(s.forward(&Matrix::zeros(4, 1)), Err(Error::Dimension { .. })));
}

/// Central differences of `L = <upstream, forward(x)>` over the flat params.
fn fd_gradient(s: &AdapterState, x: &Matrix, up: &Matrix, h: f64) -> Vec<f64> {
    let loss = |t: &AdapterState| -> f64 {
        let y = t.forward(x).unwrap();
        y.as_slice().iter().zip(up.as_slice()).map(|(a, b)| a * b).sum()
    };
    let base = s.params();
    (0..base.len())
        .map(|i| {
            let mut p = base.clone();
            p[i] += h;
            let plus = loss(&s.with_params(&p).unwrap());
            p[i] -= 2.0 * h;
            let minus = loss(&s.with_params(&p).unwrap());
            (plus - minus) / (2.0 * h)
        })
        .collect()
}

fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0_f64, |m, x| m.max(x.abs())).max(1e-12);
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

#[test]
fn lora_and_dora_gradients_match_finite_differences() {
    let mut rng = RngStream::new(10);
    let w0 = random_matrix(&mut rng, 6, 4, 1.0);
    let x = random_matrix(&mut rng, 4, 5, 1.0);
    let up = random_matrix(&mut rng, 6, 5, 1.0);
    for spec in [AdapterSpec::lora(2), AdapterSpec::dora(2)] {
        let s = perturbed(&AdapterState::init(spec, &w0, &mut rng).unwrap(), &mut rng, 0.5);
        let g = s.param_gradients(&x, &up).unwrap();
        let err = max_rel_err(&g, &fd_gradient(&s, &x, &up, 1e-5));
        assert!(err <= 1e-6, "{spec}: {err}");
    }
}

#[test]
fn all_gradients_match_finite_differences() {
    let mut rng = RngStream::new(11);
    let w0 = random_matrix(&mut rng, 7, 5, 1.0);
    let x = random_matrix(&mut rng, 5, 4, 1.0);
    let up = random_matrix(&mut rng, 7, 4, 1.0);
    for spec in all_specs(2) {
        let s = perturbed(&AdapterState::init(spec, &w0, &mut rng).unwrap(), &mut rng, 0.2);
        let g = s.param_gradients(&x, &up).unwrap();
        let err = max_rel_err(&g, &fd_gradient(&s, &x, &up, 1e-5));
        assert!(err <= 1e-4, "{spec}: {err}");
        let zero = s.param_gradients(&x, &Matrix::zeros(7, 4)).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0), "{spec}");
    }
}

#[test]
fn apply_update_semantics() {
    let mut rng = RngStream::new(12);
    let w0 = random_matrix(&mut rng, 6, 6, 1.0);
    for spec in all_specs(2) {
        let s = perturbed(&AdapterState::init(spec, &w0, &mut rng).unwrap(), &mut rng, 0.2);
        let n = s.trainable_param_count();
        let same = s.apply_update(&vec![0.0; n]).unwrap();
        assert_eq!(same.effective_weight().unwrap(), s.effective_weight().unwrap());
        let delta: Vec<f64> = (0..n).map(|_| rng.uniform(1.0)).collect();
        let neg: Vec<f64> = delta.iter().map(|d| -d).collect();
        let back = s.apply_update(&delta).unwrap().apply_update(&neg).unwrap();
        for (a, b) in back.params().iter().zip(s.params()) {
            assert!((a - b).abs() <= 1e-15 * 4.0);
        }
        assert_eq!(back.frozen_digest(), s.frozen_digest());
        assert!(s.apply_update(&vec![0.0; n + 1]).is_err());
    }
}

#[test]
fn banded_svft_stays_inside_band() {
    let mut rng = RngStream::new(13);
    let w0 = random_matrix(&mut rng, 8, 6, 1.0);
    let s = AdapterState::init(AdapterSpec::svft(SvftVariant::Banded { d: 1 }), &w0, &mut rng)
        .unwrap();
    let s = perturbed(&s, &mut rng, 1.0);
    let basis = s.basis().unwrap();
    // recover M = Uᵀ W' V − Σ
    let core = basis
        .left
        .t_matmul(&s.effective_weight().unwrap())
        .unwrap()
        .matmul(&basis.right)
        .unwrap();
    for i in 0..6_usize {
        for j in 0..6 {
            if i.abs_diff(j) > 1 {
                assert!(core.get(i, j).abs() <= 1e-12);
            }
        }
    }
    assert!(s.svft_support().unwrap().iter().all(|(i, j)| i.abs_diff(*j) <= 1));
}

#[test]
fn merged_weight_reproduces_adapter_forward() {
    let mut rng = RngStream::new(14);
    let w0 = random_matrix(&mut rng, 6, 5, 1.0);
    for spec in [AdapterSpec::lora(2), AdapterSpec::ssvd(0.6, RotationMode::Approximate)] {
        let s = perturbed(&AdapterState::init(spec, &w0, &mut rng).unwrap(), &mut rng, 0.3);
        let merged = s.merge().unwrap();
        for _ in 0..50 {
            let x = random_matrix(&mut rng, 5, 1, 1.0);
            let d = merged.matmul(&x).unwrap().max_abs_diff(&s.forward(&x).unwrap());
            assert!(d <= 1e-10);
        }
    }
}

#[test]
fn rank_beyond_layer_is_rejected() {
    let mut rng = RngStream::new(15);
    let w0 = random_matrix(&mut rng, 4, 3, 1.0);
    assert!(AdapterState::init(AdapterSpec::pissa(4), &w0, &mut rng).is_err());
    let mut bad = w0.clone();
    bad.set(0, 0, f64::NAN);
    assert!(AdapterState::init(AdapterSpec::lora(1), &bad, &mut rng).is_err());
}

#[test]
fn checkpoint_round_trip_for_every_method() {
    let mut rng = RngStream::new(16);
    let w0 = random_matrix(&mut rng, 6, 5, 1.0);
    let x = random_matrix(&mut rng, 5, 3, 1.0);
    for spec in all_specs(2) {
        let s = perturbed(&AdapterState::init(spec, &w0, &mut rng).unwrap(), &mut rng, 0.3);
        let bytes = s.save_state();
        let back = AdapterState::load_state(&bytes).unwrap();
        assert_eq!(back.save_state(), bytes, "{spec}");
        assert_eq!(back.forward(&x).unwrap(), s.forward(&x).unwrap(), "{spec}");
        assert_eq!(back.frozen_hashes(), s.frozen_hashes());
    }
}

#[test]
fn checkpoint_rejects_tampering() {
    let mut rng = RngStream::new(17);
    let w0 = random_matrix(&mut rng, 6, 5, 1.0);
    let s = AdapterState::init(AdapterSpec::lora(2), &w0, &mut rng).unwrap();
    let text = String::from_utf8(s.save_state()).unwrap();

    let dims = text.replacen("dims 6 5", "dims 7 5", 1);
    assert!(matches!(
        AdapterState::load_state(dims.as_bytes()),
        Err(Error::Dimension { .. })
    ));
    let version = text.replacen("version 1", "version 2", 1);
    assert!(matches!(
        AdapterState::load_state(version.as_bytes()),
        Err(Error::Version { found: 2, .. })
    ));
    let truncated = &text[..text.len() / 2];
    assert!(AdapterState::load_state(truncated.as_bytes()).is_err());

    // flip one frozen value: hash check must catch it
    let marker = "tensor w0\n6 5\n";
    let at = text.find(marker).unwrap() + marker.len();
    let mut tampered = text.clone();
    let end = tampered[at..].find(' ').unwrap() + at;
    tampered.replace_range(at..end, "123.0");
    let err = AdapterState::load_state(tampered.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("hash mismatch"), "{err}");
}
