//! Stochastic views of the input.
//!
//! Feature-noise kinds push every entry towards the opposite end of the
//! `[0, 1]` range and leave the topology untouched. Structural kinds drop
//! incidences, nodes or hyperedges and leave the features untouched.

use std::sync::atomic::{AtomicBool, Ordering};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{HyfiError, Result};
use crate::hypergraph::{FeatureMatrix, Hypergraph};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AugmentationKind {
    Gaussian,
    Uniform,
    Bernoulli,
    DropIncidence,
    DropNode,
    DropHyperedge,
}

impl AugmentationKind {
    pub const ALL: [AugmentationKind; 6] = [
        AugmentationKind::Gaussian,
        AugmentationKind::Uniform,
        AugmentationKind::Bernoulli,
        AugmentationKind::DropIncidence,
        AugmentationKind::DropNode,
        AugmentationKind::DropHyperedge,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AugmentationKind::Gaussian => "gaussian",
            AugmentationKind::Uniform => "uniform",
            AugmentationKind::Bernoulli => "bernoulli",
            AugmentationKind::DropIncidence => "drop-incidence",
            AugmentationKind::DropNode => "drop-node",
            AugmentationKind::DropHyperedge => "drop-hyperedge",
        }
    }

    pub fn is_structural(self) -> bool {
        matches!(
            self,
            AugmentationKind::DropIncidence | AugmentationKind::DropNode | AugmentationKind::DropHyperedge
        )
    }
}

impl std::fmt::Display for AugmentationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for AugmentationKind {
    type Err = HyfiError;

    fn from_str(s: &str) -> Result<Self> {
        AugmentationKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| HyfiError::Config(format!("unknown augmentation kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationSpec {
    pub kind: AugmentationKind,
    /// Noise scale for the gaussian and uniform kinds.
    pub sigma: f64,
    /// Per-entry flip probability for the bernoulli kind.
    pub flip_prob: f64,
    /// Drop probability for the structural kinds.
    pub drop_rate: f64,
    pub num_views: usize,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            kind: AugmentationKind::Gaussian,
            sigma: 0.2,
            flip_prob: 0.2,
            drop_rate: 0.2,
            num_views: 2,
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_views == 0 {
            return Err(HyfiError::Config("num_views must be at least 1".into()));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(HyfiError::Config(format!(
                "sigma must be finite and non-negative, got {}",
                self.sigma
            )));
        }
        for (name, p) in [("flip_prob", self.flip_prob), ("drop_rate", self.drop_rate)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(HyfiError::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        Ok(())
    }

    /// The same spec reseeded for one training epoch.
    pub fn for_epoch(&self, epoch: usize) -> Self {
        Self {
            seed: rng::derive_indexed(self.seed, "epoch", epoch as u64),
            ..self.clone()
        }
    }
}

/// One stochastic view. `None` fields mean the origin object is reused
/// unchanged.
#[derive(Debug, Clone)]
pub struct NoiseView {
    pub kind: AugmentationKind,
    features: Option<FeatureMatrix>,
    hypergraph: Option<Hypergraph>,
}

impl NoiseView {
    pub fn features<'a>(&'a self, origin: &'a FeatureMatrix) -> &'a FeatureMatrix {
        self.features.as_ref().unwrap_or(origin)
    }

    pub fn hypergraph<'a>(&'a self, origin: &'a Hypergraph) -> &'a Hypergraph {
        self.hypergraph.as_ref().unwrap_or(origin)
    }
}

static OUT_OF_RANGE_WARNED: AtomicBool = AtomicBool::new(false);

/// Feature-noise view number `view_index` of `x`.
///
/// Entry `x` moves to `x + s * |eps|` where the sign `s` is `+1` when
/// `floor(x + 0.5)` is even and `-1` otherwise, then the result is clamped
/// to `[0, 1]`. For the bernoulli kind, an entry flips to `1 - round(x)`
/// with probability `flip_prob`.
pub fn perturb_features(x: &FeatureMatrix, spec: &AugmentationSpec, view_index: usize) -> Result<FeatureMatrix> {
    spec.validate()?;
    if spec.kind.is_structural() {
        return Err(HyfiError::Config(format!(
            "{} is a structural augmentation, not a feature perturbation",
            spec.kind
        )));
    }
    if !x.in_unit_interval() && !OUT_OF_RANGE_WARNED.swap(true, Ordering::Relaxed) {
        log::warn!("feature values outside [0, 1]; the noise sign uses floor(x + 0.5) parity");
    }
    let mut rng = rng::stream(spec.seed, view_index as u64);
    let src = x.values();
    let mut out = src.clone();
    for o in out.iter_mut() {
        let v = *o;
        let rounded = (v + 0.5).floor();
        let moved = match spec.kind {
            AugmentationKind::Gaussian => {
                let eps: f64 = StandardNormal.sample(&mut rng);
                v + sign_of(rounded) * (spec.sigma * eps).abs()
            }
            AugmentationKind::Uniform => {
                let eps: f64 = rng.random::<f64>() * spec.sigma;
                v + sign_of(rounded) * eps
            }
            AugmentationKind::Bernoulli => {
                if rng.random::<f64>() < spec.flip_prob {
                    1.0 - rounded
                } else {
                    v
                }
            }
            _ => unreachable!("structural kinds rejected above"),
        };
        *o = moved.clamp(0.0, 1.0);
    }
    FeatureMatrix::new(out)
}

fn sign_of(rounded: f64) -> f64 {
    if rounded as i64 & 1 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Structural view number `view_index` of `h`. Node and hyperedge counts are
/// preserved; dropped elements simply lose their incidences.
pub fn drop_augment(h: &Hypergraph, spec: &AugmentationSpec, view_index: usize) -> Result<Hypergraph> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, view_index as u64);
    let p = spec.drop_rate;
    let edges: Vec<Vec<usize>> = match spec.kind {
        AugmentationKind::DropIncidence => h
            .hyperedges()
            .iter()
            .map(|e| e.iter().copied().filter(|_| !rng.random_bool(p)).collect())
            .collect(),
        AugmentationKind::DropNode => {
            let dropped: Vec<bool> = (0..h.num_nodes()).map(|_| rng.random_bool(p)).collect();
            h.hyperedges()
                .iter()
                .map(|e| e.iter().copied().filter(|&i| !dropped[i]).collect())
                .collect()
        }
        AugmentationKind::DropHyperedge => h
            .hyperedges()
            .iter()
            .map(|e| if rng.random_bool(p) { Vec::new() } else { e.clone() })
            .collect(),
        kind => {
            return Err(HyfiError::Config(format!(
                "{kind} is a feature perturbation, not a structural augmentation"
            )))
        }
    };
    Hypergraph::with_empty_edges(h.num_nodes(), edges)
}

/// All `spec.num_views` views for one step.
pub fn make_views(h: &Hypergraph, x: &FeatureMatrix, spec: &AugmentationSpec) -> Result<Vec<NoiseView>> {
    (0..spec.num_views)
        .map(|m| {
            Ok(if spec.kind.is_structural() {
                NoiseView {
                    kind: spec.kind,
                    features: None,
                    hypergraph: Some(drop_augment(h, spec, m)?),
                }
            } else {
                NoiseView {
                    kind: spec.kind,
                    features: Some(perturb_features(x, spec, m)?),
                    hypergraph: None,
                }
            })
        })
        .collect()
}
