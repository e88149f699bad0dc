//! Command-line overrides layered on top of a JSON configuration file.

use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use hyfi::{Activation, AugmentationKind, Representation, RunConfig};

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArgs {
    /// JSON configuration file; command-line flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for initialisation, augmentation and splits.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of training epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// AdamW learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// AdamW decoupled weight decay.
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Width of every encoder layer.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    /// Width of the projection heads.
    #[arg(long)]
    pub proj_dim: Option<usize>,
    /// Number of encoder layers.
    #[arg(long)]
    pub layers: Option<usize>,
    /// Encoder activation: relu, prelu, elu or identity.
    #[arg(long)]
    pub activation: Option<Activation>,
    /// Node-level temperature.
    #[arg(long)]
    pub tau_node: Option<f64>,
    /// Hyperedge-level temperature.
    #[arg(long)]
    pub tau_edge: Option<f64>,
    /// Weight of the hyperedge-level loss.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Noise scale of the gaussian and uniform views.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Flip probability of the bernoulli views.
    #[arg(long)]
    pub flip_prob: Option<f64>,
    /// Drop probability of the structural views.
    #[arg(long)]
    pub drop_rate: Option<f64>,
    /// Number of noise views per epoch.
    #[arg(long)]
    pub views: Option<usize>,
    /// View generator: gaussian, uniform, bernoulli, drop-incidence, drop-node or drop-hyperedge.
    #[arg(long)]
    pub augmentation: Option<AugmentationKind>,
    /// Treat overlapping elements as negatives instead of weak positives.
    #[arg(long)]
    pub no_weak_positive: bool,
    /// Drop the same-index positive term.
    #[arg(long)]
    pub no_positive: bool,
    /// Give every weak positive weight 1.
    #[arg(long)]
    pub no_weak_weight: bool,
    /// Train with the node-level loss only.
    #[arg(long)]
    pub no_edge_loss: bool,
    #[command(flatten)]
    pub eval: EvalArgs,
}

/// Options that only affect the linear probe.
#[derive(Args, Debug, Clone, Default)]
pub struct EvalArgs {
    /// Number of random train/validation/test splits.
    #[arg(long)]
    pub splits: Option<usize>,
    /// Probe initialisations per split.
    #[arg(long)]
    pub inits: Option<usize>,
    /// Which embeddings the probe sees.
    #[arg(long)]
    pub representation: Option<Representation>,
    /// Seed for the evaluation splits; defaults to the training seed.
    #[arg(long)]
    pub eval_seed: Option<u64>,
}

pub fn read_config(path: &PathBuf) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| hyfi::HyfiError::io(path, e))?;
    serde_json::from_str(&text).with_context(|| format!("invalid configuration {}", path.display()))
}

impl ConfigArgs {
    /// Defaults, then the config file, then flags. Derived seeds are always
    /// recomputed from the master seed.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_config(path)?,
            None => RunConfig::default(),
        };
        let t = &mut cfg.train;
        set(&mut t.epochs, self.epochs);
        set(&mut t.optimizer.learning_rate, self.lr);
        set(&mut t.optimizer.weight_decay, self.weight_decay);
        set(&mut t.hidden_dim, self.hidden_dim);
        set(&mut t.proj_dim, self.proj_dim);
        set(&mut t.layers, self.layers);
        set(&mut t.activation, self.activation);
        set(&mut t.loss.tau_node, self.tau_node);
        set(&mut t.loss.tau_edge, self.tau_edge);
        set(&mut t.loss.alpha, self.alpha);
        set(&mut t.augmentation.sigma, self.sigma);
        set(&mut t.augmentation.flip_prob, self.flip_prob);
        set(&mut t.augmentation.drop_rate, self.drop_rate);
        set(&mut t.augmentation.num_views, self.views);
        set(&mut t.augmentation.kind, self.augmentation);
        t.loss.use_weak_positive &= !self.no_weak_positive;
        t.loss.use_positive &= !self.no_positive;
        t.loss.use_weak_weight &= !self.no_weak_weight;
        t.loss.use_edge_loss &= !self.no_edge_loss;
        let seed = self.seed.unwrap_or(cfg.train.seed);
        cfg.reseed(seed);
        self.eval.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

impl EvalArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.split.num_splits, self.splits);
        set(&mut cfg.split.num_inits, self.inits);
        set(&mut cfg.representation, self.representation);
        if let Some(seed) = self.eval_seed {
            cfg.split.seed = hyfi::rng::derive_seed(seed, "splits");
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}
