mod common;

use common::{fd_noise_gradient, random_split, random_tensor, ref_cross_entropy, ref_forward, Arr};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use splitnoise::tensor_core::{
    cross_entropy, cross_entropy_with_grad, forward, grad_wrt_noise, softmax, Tensor,
};

fn max_abs_diff(a: &[f32], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 - y).abs())
        .fold(0.0, f64::max)
}

#[test]
fn forward_matches_naive_f64_reference_on_random_networks() {
    for seed in 0..40 {
        let split = random_split(seed);
        let net = split.network();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let x = random_tensor(net.input_shape(), 1.0, &mut rng);
        let ours = net.forward(&x).unwrap();
        let reference = ref_forward(net.layers(), &Arr::from_tensor(&x));
        assert_eq!(ours.shape(), &reference.shape[..], "seed {seed}");
        assert!(
            max_abs_diff(ours.data(), &reference.data) < 1e-4,
            "seed {seed}"
        );
    }
}

#[test]
fn forward_matches_reference_on_lenet() {
    let net = common::lenet();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let x = random_tensor(net.input_shape(), 0.5, &mut rng).map(|v| v.abs().min(1.0));
        let ours = net.forward(&x).unwrap();
        let reference = ref_forward(net.layers(), &Arr::from_tensor(&x));
        assert!(max_abs_diff(ours.data(), &reference.data) < 1e-3);
    }
}

#[test]
fn edge_then_cloud_equals_full_forward() {
    for seed in 0..20 {
        let split = random_split(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(split.network().input_shape(), 1.0, &mut rng);
        let a = split.run_edge(&x).unwrap();
        assert_eq!(a.shape(), split.activation_shape());
        let composed = split.run_cloud(&a).unwrap();
        let direct = forward(split.network().layers(), &x).unwrap();
        assert_eq!(composed.data(), direct.data());
    }
}

#[test]
fn noise_gradient_matches_f64_central_differences() {
    let mut checked = 0;
    for seed in 100..120 {
        let split = random_split(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_tensor(split.network().input_shape(), 1.0, &mut rng);
        let a = split.run_edge(&x).unwrap();
        let n = random_tensor(a.shape(), 0.3, &mut rng);
        let label = seed as usize % split.network().classes();
        let g = grad_wrt_noise(split.cloud_layers(), &a, &n, |l| {
            cross_entropy_with_grad(l, label)
        })
        .unwrap();
        let fd = fd_noise_gradient(split.cloud_layers(), &a, &n, label, 1e-3);
        let scale = fd
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
            .max(1e-6);
        for (ours, reference) in g.grad.data().iter().zip(&fd) {
            if let Some(r) = reference {
                assert!(
                    (*ours as f64 - r).abs() / scale < 1e-3,
                    "seed {seed}: {ours} vs {r}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 200, "only {checked} differentiable elements");
}

#[test]
fn noise_gradient_reports_loss_and_logits() {
    let split = random_split(7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random_tensor(split.network().input_shape(), 1.0, &mut rng);
    let a = split.run_edge(&x).unwrap();
    let n = random_tensor(a.shape(), 0.1, &mut rng);
    let g = grad_wrt_noise(split.cloud_layers(), &a, &n, |l| {
        cross_entropy_with_grad(l, 0)
    })
    .unwrap();
    let expected = split.run_cloud(&a.add(&n).unwrap()).unwrap();
    assert_eq!(g.logits.data(), expected.data());
    assert!((g.loss - cross_entropy(&expected, 0).unwrap()).abs() < 1e-9);
    assert_eq!(g.grad.shape(), a.shape());
}

#[test]
fn noise_gradient_rejects_mismatched_noise() {
    let split = random_split(3);
    let a = Tensor::zeros(split.activation_shape());
    let n = Tensor::zeros(&[a.len() + 1]);
    assert!(
        grad_wrt_noise(split.cloud_layers(), &a, &n, |l| cross_entropy_with_grad(
            l, 0
        ))
        .is_err()
    );
}

#[test]
fn cross_entropy_survives_extreme_logits() {
    let logits = Tensor::from_vec(vec![1000.0, -1000.0, 0.0]);
    let ce = cross_entropy(&logits, 1).unwrap();
    assert!((ce - 2000.0).abs() < 1e-3);
    let p = softmax(&logits);
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(cross_entropy(&logits, 3).is_err());
}

proptest! {
    #[test]
    fn cross_entropy_matches_log_sum_exp(values in prop::collection::vec(-30.0f32..30.0, 2..10), pick in 0usize..10) {
        let label = pick % values.len();
        let ours = cross_entropy(&Tensor::from_vec(values.clone()), label).unwrap();
        let reference = ref_cross_entropy(&values.iter().map(|&v| v as f64).collect::<Vec<_>>(), label);
        prop_assert!((ours - reference).abs() < 1e-4 * (1.0 + reference.abs()));
    }

    #[test]
    fn add_then_sub_round_trips(values in prop::collection::vec(-1e3f32..1e3, 1..64), shift in -10.0f32..10.0) {
        let a = Tensor::from_vec(values);
        let b = a.map(|v| v * 0.5 + shift);
        let back = a.add(&b).unwrap().sub(&b).unwrap();
        for (x, y) in back.data().iter().zip(a.data()) {
            prop_assert!((x - y).abs() <= 1e-3);
        }
    }

    #[test]
    fn reshape_preserves_data(rows in 1usize..6, cols in 1usize..6) {
        let t = Tensor::new(vec![rows, cols], (0..rows * cols).map(|v| v as f32).collect()).unwrap();
        let r = t.clone().reshape(&[rows * cols]).unwrap();
        prop_assert_eq!(r.data(), t.data());
        prop_assert!(t.clone().reshape(&[rows * cols + 1]).is_err());
    }
}
