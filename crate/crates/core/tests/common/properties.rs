//! Randomised checks shared by the per-module suites and the acceptance run.
//! Each pairs a strategy with a check returning a `TestCaseResult`.

use hyfi::augmentation::{make_views, perturb_features};
use hyfi::encoder::{encoder_forward, init_parameters, EncoderParameters};
use hyfi::hypergraph::{overlap_matrix, shared_neighbors};
use hyfi::loss::{contrastive_loss, weak_weights, ContrastOutput, ContrastSettings};
use hyfi::training::{loss_and_gradient, Neighbourhoods};
use hyfi::{
    Activation, AugmentationKind, AugmentationSpec, FeatureMatrix, Hypergraph, Level, LossConfig, ModelParameters,
    NoiseView,
};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseResult, TestRng, TestRunner};

use super::oracles;

/// Run `check` on `cases` draws from `strategy` with a fixed RNG.
pub fn run_fixed<S: Strategy>(
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> TestCaseResult,
) -> Result<(), String> {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let rng = TestRng::deterministic_rng(config.rng_algorithm);
    TestRunner::new_with_rng(config, rng)
        .run(&strategy, check)
        .map_err(|e| e.to_string())
}

pub fn check_overlap(h: Hypergraph) -> TestCaseResult {
    for level in [Level::Node, Level::Hyperedge] {
        let c = overlap_matrix(&h, level);
        let dense = oracles::dense_counts(&h, level);
        prop_assert_eq!(&c.to_dense(), &dense);
        prop_assert_eq!(c.to_dense(), c.to_dense().t().to_owned());
        for i in 0..c.size() {
            for j in 0..c.size() {
                prop_assert_eq!(c.get(i, j), dense[[i, j]]);
            }
            let nbrs = shared_neighbors(c, i).unwrap();
            let want: Vec<(usize, u32)> = (0..c.size())
                .filter(|&j| j != i && dense[[i, j]] > 0)
                .map(|j| (j, dense[[i, j]]))
                .collect();
            prop_assert_eq!(nbrs, want);
        }
    }
    Ok(())
}

pub fn check_weak_weights(h: Hypergraph) -> TestCaseResult {
    for level in [Level::Node, Level::Hyperedge] {
        let dense = oracles::dense_counts(&h, level);
        let w = weak_weights(overlap_matrix(&h, level)).unwrap();
        for i in 0..dense.nrows() {
            for j in 0..dense.ncols() {
                let want = if i != j && dense[[i, j]] > 0 {
                    let c = dense[[i, j]] as f64;
                    c * c / dense[[i, i]] as f64
                } else {
                    0.0
                };
                prop_assert_eq!(w.get(i, j), want);
            }
        }
    }
    Ok(())
}

pub fn activation() -> impl Strategy<Value = Activation> {
    prop_oneof![
        Just(Activation::Relu),
        Just(Activation::Prelu),
        Just(Activation::Elu),
        Just(Activation::Identity)
    ]
}

fn randomize_biases(p: &mut EncoderParameters, seed: u64) {
    let mut k = seed;
    for l in &mut p.layers {
        for b in l.edge_bias.iter_mut().chain(l.node_bias.iter_mut()) {
            k = k.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *b = ((k >> 33) as f64 / (1u64 << 31) as f64) - 0.5;
        }
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCase {
    pub h: Hypergraph,
    pub x: FeatureMatrix,
    pub params: EncoderParameters,
}

pub fn forward_case() -> impl Strategy<Value = ForwardCase> {
    (
        super::graph_with_features(20, 20, 4),
        activation(),
        1usize..=2,
        any::<u64>(),
    )
        .prop_map(|((h, x), a, layers, seed)| {
            let dims: Vec<usize> = std::iter::once(4).chain(std::iter::repeat_n(3, layers)).collect();
            let mut params = init_parameters(&dims, 2, a, seed).unwrap().encoder;
            randomize_biases(&mut params, seed);
            ForwardCase { h, x, params }
        })
}

pub fn check_forward(c: ForwardCase) -> TestCaseResult {
    let (p, q) = encoder_forward(&c.h, &c.x, &c.params).unwrap();
    let (dp, dq) = oracles::dense_forward(&c.h, c.x.values(), &c.params);
    prop_assert_eq!(p.dim(), (c.h.num_nodes(), 3));
    prop_assert_eq!(q.dim(), (c.h.num_hyperedges(), 3));
    let (ep, eq) = (
        super::relative_error(p.iter(), dp.iter()),
        super::relative_error(q.iter(), dq.iter()),
    );
    prop_assert!(ep < 1e-10 && eq < 1e-10, "relative errors {} and {}", ep, eq);
    Ok(())
}

/// Nonzero biases keep every projected row away from the origin, so the
/// cosine similarities stay differentiable.
pub fn jitter_biases(p: &mut ModelParameters, seed: u64) {
    let names: Vec<String> = p.tensors().into_iter().map(|(n, _)| n).collect();
    let mut k = seed | 1;
    for (name, mut t) in names.iter().zip(p.tensors_mut()) {
        if name.contains("bias") {
            for v in t.iter_mut() {
                k ^= k << 13;
                k ^= k >> 7;
                k ^= k << 17;
                *v = 0.2 + 0.6 * ((k >> 11) as f64 / (1u64 << 53) as f64);
            }
        }
    }
}

pub fn augmentation_kind() -> impl Strategy<Value = AugmentationKind> {
    prop::sample::select(AugmentationKind::ALL.to_vec())
}

pub fn loss_config() -> impl Strategy<Value = LossConfig> {
    (
        0.3f64..1.5,
        0.3f64..1.5,
        0.0f64..2.0,
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(tn, te, alpha, weak, pos, weight, edge)| LossConfig {
            tau_node: tn,
            tau_edge: te,
            alpha,
            use_weak_positive: weak || !pos,
            use_positive: pos,
            use_weak_weight: weight,
            use_edge_loss: edge,
        })
}

#[derive(Debug)]
pub struct GradientCase {
    pub h: Hypergraph,
    pub x: FeatureMatrix,
    pub views: Vec<NoiseView>,
    pub params: ModelParameters,
    pub cfg: LossConfig,
}

pub fn gradient_case(activation: Activation) -> impl Strategy<Value = GradientCase> {
    (
        super::graph_with_features(12, 8, 3),
        1usize..=2,
        2usize..=5,
        2usize..=5,
        1usize..=3,
        augmentation_kind(),
        loss_config(),
        any::<u64>(),
    )
        .prop_map(move |((h, x), layers, hidden, proj, m, kind, cfg, seed)| {
            let dims: Vec<usize> = std::iter::once(x.dim())
                .chain(std::iter::repeat_n(hidden, layers))
                .collect();
            let mut params = init_parameters(&dims, proj, activation, seed).unwrap();
            jitter_biases(&mut params, seed);
            let spec = AugmentationSpec {
                kind,
                num_views: m,
                seed,
                ..AugmentationSpec::default()
            };
            let views = make_views(&h, &x, &spec).unwrap();
            GradientCase {
                h,
                x,
                views,
                params,
                cfg,
            }
        })
}

pub fn gradient_error(c: &GradientCase) -> Result<f64, TestCaseError> {
    let nb = Neighbourhoods::new(&c.h).unwrap();
    let result = loss_and_gradient(&c.h, &c.x, &c.views, &c.params, &nb, &c.cfg);
    let (_, grads) = result.map_err(|e| TestCaseError::fail(e.to_string()))?;
    let analytic = oracles::flatten(&grads);
    let numeric = oracles::finite_difference(&c.h, &c.x, &c.views, &c.params, &c.cfg);
    Ok(super::relative_error(analytic.iter(), numeric.iter()))
}

pub fn check_gradient(c: GradientCase) -> TestCaseResult {
    let err = gradient_error(&c)?;
    prop_assert!(err < 1e-5, "relative error {}", err);
    Ok(())
}

pub fn contrast_settings() -> impl Strategy<Value = ContrastSettings> {
    (0.2f64..2.0, any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(tau, weak, weight, positive)| {
        ContrastSettings {
            tau,
            use_positive: positive,
            use_weak_positive: weak || !positive,
            use_weak_weight: weight,
            tolerate_zero_view_rows: false,
        }
    })
}

#[derive(Debug, Clone)]
pub struct LossCase {
    pub h: Hypergraph,
    pub z: Array2<f64>,
    pub views: Vec<Array2<f64>>,
    pub s: ContrastSettings,
}

impl LossCase {
    pub fn rows_nonzero(&self) -> bool {
        let ok = |m: &Array2<f64>| m.rows().into_iter().all(|r| r.dot(&r) > 1e-6);
        ok(&self.z) && self.views.iter().all(ok)
    }
}

pub fn loss_case() -> impl Strategy<Value = LossCase> {
    (super::hypergraph(20, 15), 1usize..=5, 1usize..=3, contrast_settings()).prop_flat_map(|(h, d, m, s)| {
        let n = h.num_nodes();
        (
            Just(h),
            super::matrix(n, d, -1.0, 1.0),
            prop::collection::vec(super::matrix(n, d, -1.0, 1.0), m),
            Just(s),
        )
            .prop_map(|(h, z, views, s)| LossCase { h, z, views, s })
    })
}

pub fn node_loss(h: &Hypergraph, z: &Array2<f64>, views: &[Array2<f64>], s: &ContrastSettings) -> ContrastOutput {
    let w = weak_weights(overlap_matrix(h, Level::Node)).unwrap();
    let refs: Vec<&Array2<f64>> = views.iter().collect();
    contrastive_loss(z, &refs, &w, s, false).unwrap()
}

pub fn check_loss_oracle(c: LossCase) -> TestCaseResult {
    prop_assume!(c.rows_nonzero());
    let out = node_loss(&c.h, &c.z, &c.views, &c.s);
    let want = oracles::brute_force_loss(&c.h, &c.z, &c.views, &c.s);
    for (a, b) in out.per_anchor.iter().zip(&want) {
        prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
    }
    let err = super::relative_error(out.per_anchor.iter(), want.iter());
    prop_assert!(err < 1e-10, "relative error {}", err);
    prop_assert!((out.total - want.iter().sum::<f64>()).abs() < 1e-9);
    prop_assert!(out.per_anchor.iter().all(|&l| l >= 0.0));
    Ok(())
}

/// An anchor with positive mass has zero loss exactly when it has no
/// negatives.
pub fn check_zero_iff_no_negatives(c: LossCase) -> TestCaseResult {
    prop_assume!(c.rows_nonzero());
    let out = node_loss(&c.h, &c.z, &c.views, &c.s);
    let counts = oracles::dense_counts(&c.h, Level::Node);
    let n = c.z.nrows();
    for i in 0..n {
        let overlapping = (0..n).filter(|&j| j != i && counts[[i, j]] > 0).count();
        let has_positive_mass = c.s.use_positive || overlapping > 0;
        if !has_positive_mass {
            continue;
        }
        let negatives = if c.s.use_weak_positive {
            n - 1 - overlapping
        } else {
            n - 1
        };
        prop_assert_eq!(out.per_anchor[i] == 0.0, negatives == 0, "anchor {}", i);
    }
    Ok(())
}

pub fn scaled_loss_case() -> impl Strategy<Value = (LossCase, Vec<f64>)> {
    (loss_case(), prop::collection::vec(0.1f64..10.0, 20))
}

pub fn check_loss_scaling((c, scale): (LossCase, Vec<f64>)) -> TestCaseResult {
    prop_assume!(c.rows_nonzero());
    let base = node_loss(&c.h, &c.z, &c.views, &c.s);
    let factors = Array1::from_iter((0..c.z.nrows()).map(|i| scale[i])).insert_axis(Axis(1));
    let scaled = &c.z * &factors;
    let scaled_views: Vec<Array2<f64>> = c.views.iter().map(|v| v / &factors).collect();
    let out = node_loss(&c.h, &scaled, &scaled_views, &c.s);
    for (a, b) in out.per_anchor.iter().zip(&base.per_anchor) {
        prop_assert!((a - b).abs() < 1e-10);
    }
    Ok(())
}

pub fn permuted_loss_case() -> impl Strategy<Value = (LossCase, Vec<usize>)> {
    loss_case().prop_flat_map(|c| {
        let n = c.h.num_nodes();
        (Just(c), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

pub fn check_loss_permutation((c, perm): (LossCase, Vec<usize>)) -> TestCaseResult {
    prop_assume!(c.rows_nonzero());
    let edges: Vec<usize> = (0..c.h.num_hyperedges()).collect();
    let hp = c.h.permuted(&perm, &edges).unwrap();
    let permute = |a: &Array2<f64>| {
        let mut out = Array2::zeros(a.raw_dim());
        for (i, &p) in perm.iter().enumerate() {
            out.row_mut(p).assign(&a.row(i));
        }
        out
    };
    let base = node_loss(&c.h, &c.z, &c.views, &c.s);
    let pv: Vec<Array2<f64>> = c.views.iter().map(permute).collect();
    let out = node_loss(&hp, &permute(&c.z), &pv, &c.s);
    for (i, &p) in perm.iter().enumerate() {
        prop_assert!((base.per_anchor[i] - out.per_anchor[p]).abs() < 1e-10);
    }
    Ok(())
}

pub fn noise_kind() -> impl Strategy<Value = AugmentationKind> {
    prop::sample::select(vec![
        AugmentationKind::Gaussian,
        AugmentationKind::Uniform,
        AugmentationKind::Bernoulli,
    ])
}

pub fn noise_spec(kind: AugmentationKind, seed: u64) -> AugmentationSpec {
    AugmentationSpec {
        kind,
        seed,
        sigma: 0.3,
        ..AugmentationSpec::default()
    }
}

pub fn perturbation_case() -> impl Strategy<Value = (FeatureMatrix, AugmentationKind, u64, usize)> {
    (
        super::graph_with_features(20, 5, 6),
        noise_kind(),
        any::<u64>(),
        0usize..4,
    )
        .prop_map(|((_, x), kind, seed, view)| (x, kind, seed, view))
}

pub fn check_perturbation_range(
    (x, kind, seed, view): (FeatureMatrix, AugmentationKind, u64, usize),
) -> TestCaseResult {
    let out = perturb_features(&x, &noise_spec(kind, seed), view).unwrap();
    prop_assert_eq!(out.values().dim(), x.values().dim());
    prop_assert!(out.in_unit_interval());
    Ok(())
}

pub fn check_perturbation_determinism(
    (x, kind, seed, view): (FeatureMatrix, AugmentationKind, u64, usize),
) -> TestCaseResult {
    let s = noise_spec(kind, seed);
    let bits = |m: &FeatureMatrix| m.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    let a = perturb_features(&x, &s, view).unwrap();
    let b = perturb_features(&x, &s, view).unwrap();
    prop_assert_eq!(bits(&a), bits(&b));
    if kind != AugmentationKind::Bernoulli {
        let c = perturb_features(&x, &s, view + 1).unwrap();
        prop_assert_ne!(a, c);
    }
    Ok(())
}
