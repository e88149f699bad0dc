//! End-to-end runs: train, embed, evaluate, and ablation grids.

use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augmentation::AugmentationKind;
use crate::encoder::{embed_view, ModelParameters};
use crate::error::{HyfiError, Result};
use crate::evaluation::{linear_evaluate, EvalReport, ProbeConfig, SplitSpec};
use crate::hypergraph::{FeatureMatrix, Hypergraph, LabelVector};
use crate::rng;
use crate::training::{train, TrainConfig, TrainResult};

/// Which origin-view representation the probe sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Representation {
    /// Encoder node output `P`.
    Encoder,
    /// Node projection head output `Z`.
    Projection,
}

impl std::str::FromStr for Representation {
    type Err = HyfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder" => Ok(Representation::Encoder),
            "projection" => Ok(Representation::Projection),
            _ => Err(HyfiError::Config(format!("unknown representation {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub probe: ProbeConfig,
    pub representation: Representation,
    pub max_c: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut cfg = Self {
            train: TrainConfig::default(),
            split: SplitSpec::default(),
            probe: ProbeConfig::default(),
            representation: Representation::Encoder,
            max_c: 10,
        };
        cfg.reseed(0);
        cfg
    }
}

impl RunConfig {
    /// Set the master seed and every stream derived from it.
    pub fn reseed(&mut self, seed: u64) {
        self.train.reseed(seed);
        self.split.seed = rng::derive_seed(seed, "splits");
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.split.validate()?;
        if self.max_c == 0 {
            return Err(HyfiError::Config("max_c must be at least 1".into()));
        }
        Ok(())
    }
}

/// Origin-view node embeddings of a trained model.
pub fn embed(
    h: &Hypergraph,
    x: &FeatureMatrix,
    params: &ModelParameters,
    representation: Representation,
) -> Result<Array2<f64>> {
    let v = embed_view(h, x, params)?;
    Ok(match representation {
        Representation::Encoder => v.node_embed,
        Representation::Projection => v.node_proj,
    })
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub trained: TrainResult,
    pub report: EvalReport,
    pub train_seconds: f64,
    pub eval_seconds: f64,
}

/// Train without labels, then probe the frozen embeddings.
pub fn run_pipeline(h: &Hypergraph, x: &FeatureMatrix, y: &LabelVector, cfg: &RunConfig) -> Result<PipelineResult> {
    cfg.validate()?;
    let start = Instant::now();
    let trained = train(h, x, &cfg.train)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let embeddings = embed(h, x, &trained.params, cfg.representation)?;
    let report = linear_evaluate(&embeddings, y, &cfg.split, &cfg.probe)?;
    Ok(PipelineResult {
        trained,
        report,
        train_seconds,
        eval_seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AblationGrid {
    /// Loss-term switches.
    Loss,
    /// Every augmentation kind.
    Augmentation,
    /// Number of noise views.
    Views,
}

impl std::str::FromStr for AblationGrid {
    type Err = HyfiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(AblationGrid::Loss),
            "augmentation" => Ok(AblationGrid::Augmentation),
            "views" => Ok(AblationGrid::Views),
            _ => Err(HyfiError::Config(format!("unknown ablation grid {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationCell {
    pub name: String,
    pub config: RunConfig,
}

pub const VIEW_COUNTS: [usize; 4] = [1, 2, 4, 8];

/// The cells of `grid`, each a modified copy of `base`.
pub fn ablation_cells(grid: AblationGrid, base: &RunConfig) -> Vec<AblationCell> {
    let cell = |name: &str, edit: &dyn Fn(&mut RunConfig)| {
        let mut config = base.clone();
        edit(&mut config);
        AblationCell {
            name: name.to_string(),
            config,
        }
    };
    match grid {
        AblationGrid::Loss => vec![
            cell("full", &|_| {}),
            cell("no-weak-positive", &|c| c.train.loss.use_weak_positive = false),
            cell("no-positive", &|c| c.train.loss.use_positive = false),
            cell("no-weak-weight", &|c| c.train.loss.use_weak_weight = false),
            cell("no-edge-loss", &|c| c.train.loss.use_edge_loss = false),
        ],
        AblationGrid::Augmentation => AugmentationKind::ALL
            .iter()
            .map(|&k| cell(k.name(), &|c| c.train.augmentation.kind = k))
            .collect(),
        AblationGrid::Views => VIEW_COUNTS
            .iter()
            .map(|&m| cell(&format!("views-{m}"), &|c| c.train.augmentation.num_views = m))
            .collect(),
    }
}
