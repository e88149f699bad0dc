mod common;

use std::fs;

use hyfi::encoder::init_parameters;
use hyfi::hypergraph::{load_unlabeled, save_dataset};
use hyfi::training::{adamw_step, train, OptimizerConfig, OptimizerState};
use hyfi::{Activation, AugmentationKind, FeatureMatrix, Hypergraph, LabelVector, TrainConfig};
use ndarray::Array2;
use proptest::prelude::*;

fn small_config(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig {
        epochs: 15,
        hidden_dim: 8,
        proj_dim: 8,
        ..TrainConfig::default()
    };
    cfg.reseed(seed);
    cfg
}

fn bits(r: &hyfi::TrainResult) -> (Vec<u64>, Vec<u64>) {
    let losses = r.history.iter().map(|e| e.loss_total.to_bits()).collect();
    let params = r
        .params
        .tensors()
        .into_iter()
        .flat_map(|(_, t)| t.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        .collect();
    (losses, params)
}

/// Two planted communities with a few bridging hyperedges.
fn communities() -> (Hypergraph, FeatureMatrix) {
    let n = 40;
    let mut edges = Vec::new();
    for c in 0..2 {
        for k in 0..10 {
            let base = c * 20;
            edges.push((0..4).map(|t| base + (k * 3 + t * 5) % 20).collect::<Vec<_>>());
        }
    }
    edges.push(vec![0, 20]);
    edges.push(vec![5, 27]);
    let edges = edges
        .into_iter()
        .map(|mut e| {
            e.sort_unstable();
            e.dedup();
            e
        })
        .collect();
    let x = Array2::from_shape_fn((n, 6), |(i, j)| {
        let community = i / 20;
        let bump = if j % 2 == community { 0.8 } else { 0.1 };
        (bump + 0.05 * ((i * 7 + j * 3) % 5) as f64).min(1.0)
    });
    (Hypergraph::new(n, edges).unwrap(), FeatureMatrix::new(x).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn same_seed_is_bitwise_reproducible(
        (h, x) in common::graph_with_features(15, 10, 4),
        seed in any::<u64>(),
        kind in prop::sample::select(AugmentationKind::ALL.to_vec()),
    ) {
        let mut cfg = small_config(seed);
        cfg.epochs = 5;
        cfg.augmentation.kind = kind;
        let a = train(&h, &x, &cfg);
        let b = train(&h, &x, &cfg);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(bits(&a), bits(&b)),
            (Err(a), Err(b)) => prop_assert_eq!(a.to_string(), b.to_string()),
            _ => prop_assert!(false, "runs disagree on failure"),
        }
    }
}

#[test]
fn different_seeds_give_different_runs() {
    let (h, x) = communities();
    let a = train(&h, &x, &small_config(1)).unwrap();
    let b = train(&h, &x, &small_config(2)).unwrap();
    assert_ne!(bits(&a), bits(&b));
}

#[test]
fn loss_decreases_in_trend() {
    let (h, x) = communities();
    let mut cfg = small_config(3);
    cfg.epochs = 120;
    cfg.hidden_dim = 16;
    cfg.proj_dim = 16;
    cfg.optimizer.learning_rate = 5e-3;
    let r = train(&h, &x, &cfg).unwrap();
    let totals: Vec<f64> = r.history.iter().map(|e| e.loss_total).collect();
    assert!(totals.iter().all(|&l| l > 0.0));
    let first: f64 = totals[..10].iter().sum::<f64>() / 10.0;
    let last: f64 = totals[totals.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(last < first, "first {first}, last {last}");
}

#[test]
fn labels_file_does_not_affect_training() {
    let (h, x) = communities();
    let with = tempfile::tempdir().unwrap();
    let labels = LabelVector::new((0..h.num_nodes()).map(|i| i / 20).collect());
    save_dataset(with.path(), &h, &x, Some(&labels)).unwrap();
    let without = tempfile::tempdir().unwrap();
    save_dataset(without.path(), &h, &x, None).unwrap();
    assert!(!without.path().join("labels.txt").exists());

    let cfg = small_config(4);
    let (h1, x1) = load_unlabeled(with.path()).unwrap();
    let (h2, x2) = load_unlabeled(without.path()).unwrap();
    let a = train(&h1, &x1, &cfg).unwrap();
    let b = train(&h2, &x2, &cfg).unwrap();
    assert_eq!(bits(&a), bits(&b));

    // Scrambling the labels leaves the same result too.
    fs::write(with.path().join("labels.txt"), "0\n".repeat(h.num_nodes())).unwrap();
    let (h3, x3) = load_unlabeled(with.path()).unwrap();
    assert_eq!(bits(&train(&h3, &x3, &cfg).unwrap()), bits(&a));
}

#[test]
fn zero_gradient_without_decay_is_a_fixed_point() {
    let mut params = init_parameters(&[3, 4], 4, Activation::Prelu, 9).unwrap();
    let before = params.clone();
    let grads = params.zeros_like();
    let mut state = OptimizerState::new(&params);
    let cfg = OptimizerConfig {
        weight_decay: 0.0,
        ..OptimizerConfig::default()
    };
    for _ in 0..5 {
        adamw_step(&mut params, &grads, &mut state, &cfg);
    }
    assert_eq!(params, before);
    assert_eq!(state.step_count(), 5);
}

#[test]
fn decoupled_decay_scales_parameters() {
    let mut params = init_parameters(&[3, 4], 4, Activation::Prelu, 9).unwrap();
    let before = params.clone();
    let grads = params.zeros_like();
    let mut state = OptimizerState::new(&params);
    let cfg = OptimizerConfig {
        learning_rate: 0.01,
        weight_decay: 0.1,
        ..OptimizerConfig::default()
    };
    adamw_step(&mut params, &grads, &mut state, &cfg);
    for ((_, a), (_, b)) in params.tensors().into_iter().zip(before.tensors()) {
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y * (1.0 - 0.001)).abs() < 1e-15);
        }
    }
}
