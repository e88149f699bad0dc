//! Hypergraph contrastive learning with feature-noise views and weak
//! positive pairs.
//!
//! The pipeline is: load a [`Hypergraph`] with node features, build noisy
//! views with [`augmentation`], encode them with the two-phase message
//! passing [`encoder`], train with the weak-positive contrastive [`loss`]
//! (see [`training`]), and score frozen embeddings with a linear probe in
//! [`evaluation`].

pub mod augmentation;
pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod hypergraph;
pub mod loss;
pub mod rng;
pub mod training;

pub use augmentation::{AugmentationKind, AugmentationSpec, NoiseView};
pub use encoder::{Activation, ModelParameters};
pub use error::{HyfiError, Result};
pub use evaluation::{CommonalityCurve, EvalReport, ProbeConfig, SplitSpec};
pub use experiment::{Representation, RunConfig};
pub use hypergraph::{FeatureMatrix, Hypergraph, LabelVector, Level, OverlapMatrix};
pub use loss::{LossConfig, WeakWeights};
pub use training::{EpochRecord, TrainConfig, TrainResult};
