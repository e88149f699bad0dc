//! Self-supervised training loop and the decoupled-weight-decay Adam optimiser.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::augmentation::{make_views, AugmentationSpec, NoiseView};
use crate::encoder::{self, init_parameters, Activation, ModelParameters};
use crate::error::{HyfiError, Result};
use crate::hypergraph::{FeatureMatrix, Hypergraph, Level};
use crate::loss::{contrastive_loss, weak_weights, ContrastSettings, LossConfig, WeakWeights};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate.is_finite()
            && self.learning_rate > 0.0
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(HyfiError::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub hidden_dim: usize,
    pub proj_dim: usize,
    pub layers: usize,
    pub activation: Activation,
    pub optimizer: OptimizerConfig,
    pub loss: LossConfig,
    pub augmentation: AugmentationSpec,
    /// Master seed. Parameter initialisation and augmentation draw from
    /// streams derived from it.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let seed = 0;
        Self {
            epochs: 300,
            hidden_dim: 256,
            proj_dim: 256,
            layers: 1,
            activation: Activation::Prelu,
            optimizer: OptimizerConfig::default(),
            loss: LossConfig::default(),
            augmentation: AugmentationSpec {
                seed: rng::derive_seed(seed, "augmentation"),
                ..AugmentationSpec::default()
            },
            seed,
        }
    }
}

impl TrainConfig {
    /// Set the master seed and every seed derived from it.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        self.augmentation.seed = rng::derive_seed(seed, "augmentation");
    }

    pub fn init_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "init")
    }

    pub fn dims(&self, input_dim: usize) -> Vec<usize> {
        std::iter::once(input_dim)
            .chain(std::iter::repeat_n(self.hidden_dim, self.layers))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(HyfiError::Config("epochs must be at least 1".into()));
        }
        if self.hidden_dim == 0 || self.proj_dim == 0 || self.layers == 0 {
            return Err(HyfiError::Config(
                "hidden_dim, proj_dim and layers must be positive".into(),
            ));
        }
        self.optimizer.validate()?;
        self.loss.validate()?;
        self.augmentation.validate()
    }
}

/// Loss values of one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_node: f64,
    pub loss_edge: f64,
    pub loss_total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub params: ModelParameters,
    pub history: Vec<EpochRecord>,
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(params: &ModelParameters) -> Self {
        let sizes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self {
            step: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One AdamW update:
/// `p <- p - lr * m_hat / (sqrt(v_hat) + eps) - lr * wd * p`.
pub fn adamw_step(
    params: &mut ModelParameters,
    grads: &ModelParameters,
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let grads = grads.tensors();
    for (((mut p, (_, g)), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(state.first.iter_mut())
        .zip(state.second.iter_mut())
    {
        for (((p, &g), m), v) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= cfg.learning_rate * (m_hat / (v_hat.sqrt() + cfg.eps) + cfg.weight_decay * *p);
        }
    }
}

/// Weak-positive weights of both levels, computed once per hypergraph.
pub struct Neighbourhoods {
    pub node: WeakWeights,
    pub edge: WeakWeights,
}

impl Neighbourhoods {
    pub fn new(h: &Hypergraph) -> Result<Self> {
        Ok(Self {
            node: weak_weights(h.overlap(Level::Node))?,
            edge: weak_weights(h.overlap(Level::Hyperedge))?,
        })
    }
}

/// Loss components at the current parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub node: f64,
    pub edge: f64,
    pub total: f64,
}

struct ForwardView {
    trace: encoder::EncoderTrace,
    node_proj: Array2<f64>,
    node_head: encoder::HeadTrace,
    edge_proj: Array2<f64>,
    edge_head: encoder::HeadTrace,
}

fn forward_view(h: &Hypergraph, x: &FeatureMatrix, params: &ModelParameters) -> Result<ForwardView> {
    let trace = encoder::forward_trace(h, x.values().view(), &params.encoder)?;
    let (node_proj, node_head) = params.projection.node.forward_trace(trace.node_embed())?;
    let (edge_proj, edge_head) = params.projection.edge.forward_trace(trace.edge_embed())?;
    Ok(ForwardView {
        trace,
        node_proj,
        node_head,
        edge_proj,
        edge_head,
    })
}

fn backward_view(
    h: &Hypergraph,
    x: &FeatureMatrix,
    params: &ModelParameters,
    fv: &ForwardView,
    d_node_proj: &Array2<f64>,
    d_edge_proj: Option<&Array2<f64>>,
    grads: &mut ModelParameters,
) {
    let d_node = params.projection.node.backward(
        fv.trace.node_embed(),
        &fv.node_head,
        d_node_proj,
        &mut grads.projection.node,
    );
    let d_edge = d_edge_proj.map(|d| {
        params
            .projection
            .edge
            .backward(fv.trace.edge_embed(), &fv.edge_head, d, &mut grads.projection.edge)
    });
    encoder::backward(
        h,
        x.values().view(),
        &params.encoder,
        &fv.trace,
        d_node,
        d_edge.as_ref(),
        &mut grads.encoder,
    );
}

/// Loss and its exact gradient with respect to every parameter, for fixed
/// noise views.
pub fn loss_and_gradient(
    h: &Hypergraph,
    x: &FeatureMatrix,
    views: &[NoiseView],
    params: &ModelParameters,
    neighbourhoods: &Neighbourhoods,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, ModelParameters)> {
    evaluate_objective(h, x, views, params, neighbourhoods, cfg, true).map(|(l, g)| (l, g.expect("gradient requested")))
}

/// Loss only, for fixed noise views.
pub fn loss_value(
    h: &Hypergraph,
    x: &FeatureMatrix,
    views: &[NoiseView],
    params: &ModelParameters,
    neighbourhoods: &Neighbourhoods,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    evaluate_objective(h, x, views, params, neighbourhoods, cfg, false).map(|(l, _)| l)
}

fn evaluate_objective(
    h: &Hypergraph,
    x: &FeatureMatrix,
    views: &[NoiseView],
    params: &ModelParameters,
    neighbourhoods: &Neighbourhoods,
    cfg: &LossConfig,
    with_grad: bool,
) -> Result<(LossBreakdown, Option<ModelParameters>)> {
    cfg.validate()?;
    if views.is_empty() {
        return Err(HyfiError::Config("at least one noise view is required".into()));
    }
    let structural = views.iter().any(|v| v.kind.is_structural());
    let origin = forward_view(h, x, params)?;
    let encoded = views
        .iter()
        .map(|v| forward_view(v.hypergraph(h), v.features(x), params))
        .collect::<Result<Vec<_>>>()?;

    let mut node_settings = ContrastSettings::node(cfg);
    node_settings.tolerate_zero_view_rows = structural;
    let node_views: Vec<&Array2<f64>> = encoded.iter().map(|e| &e.node_proj).collect();
    let node = contrastive_loss(
        &origin.node_proj,
        &node_views,
        &neighbourhoods.node,
        &node_settings,
        with_grad,
    )?;

    let alpha = cfg.edge_weight();
    let edge = if cfg.use_edge_loss {
        let mut edge_settings = ContrastSettings::edge(cfg);
        edge_settings.tolerate_zero_view_rows = structural;
        let edge_views: Vec<&Array2<f64>> = encoded.iter().map(|e| &e.edge_proj).collect();
        Some(contrastive_loss(
            &origin.edge_proj,
            &edge_views,
            &neighbourhoods.edge,
            &edge_settings,
            with_grad,
        )?)
    } else {
        None
    };
    let edge_total = edge.as_ref().map_or(0.0, |e| e.total);
    let breakdown = LossBreakdown {
        node: node.total,
        edge: edge_total,
        total: node.total + alpha * edge_total,
    };
    if !with_grad {
        return Ok((breakdown, None));
    }

    let mut grads = params.zeros_like();
    let scaled = |g: &Array2<f64>| g * alpha;
    let edge_origin = edge
        .as_ref()
        .map(|e| scaled(e.grad_origin.as_ref().expect("gradient requested")));
    backward_view(
        h,
        x,
        params,
        &origin,
        node.grad_origin.as_ref().expect("gradient requested"),
        edge_origin.as_ref(),
        &mut grads,
    );
    for (m, (view, fv)) in views.iter().zip(&encoded).enumerate() {
        let edge_view = edge.as_ref().map(|e| scaled(&e.grad_views[m]));
        backward_view(
            view.hypergraph(h),
            view.features(x),
            params,
            fv,
            &node.grad_views[m],
            edge_view.as_ref(),
            &mut grads,
        );
    }
    Ok((breakdown, Some(grads)))
}

/// Train from a fresh initialisation. Labels are never consulted.
pub fn train(h: &Hypergraph, x: &FeatureMatrix, cfg: &TrainConfig) -> Result<TrainResult> {
    train_with_callback(h, x, cfg, |_, _| {})
}

/// Like [`train`], calling `on_epoch` after every update with the epoch's
/// losses and the updated parameters.
pub fn train_with_callback(
    h: &Hypergraph,
    x: &FeatureMatrix,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &ModelParameters),
) -> Result<TrainResult> {
    cfg.validate()?;
    if x.num_rows() != h.num_nodes() {
        return Err(HyfiError::RowCountMismatch {
            what: "features",
            expected: h.num_nodes(),
            found: x.num_rows(),
        });
    }
    let mut params = init_parameters(&cfg.dims(x.dim()), cfg.proj_dim, cfg.activation, cfg.init_seed())?;
    let neighbourhoods = Neighbourhoods::new(h)?;
    if !cfg.loss.use_positive {
        for w in [&neighbourhoods.node, &neighbourhoods.edge] {
            let alone = (0..w.size()).filter(|&i| w.num_neighbors(i) == 0).count();
            if alone > 0 {
                log::warn!(
                    "{alone} {} anchors overlap nothing and add no loss without the positive term",
                    w.level().name()
                );
            }
        }
    }
    let mut state = OptimizerState::new(&params);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let diverged = |source| HyfiError::Diverged {
            epoch,
            source: Box::new(source),
        };
        let views = make_views(h, x, &cfg.augmentation.for_epoch(epoch))?;
        let (loss, grads) =
            loss_and_gradient(h, x, &views, &params, &neighbourhoods, &cfg.loss).map_err(|e| match e {
                HyfiError::NonFinite(_) | HyfiError::ZeroNorm { .. } => diverged(e),
                other => other,
            })?;
        if !loss.total.is_finite() || !grads.is_finite() {
            return Err(diverged(HyfiError::NonFinite("loss or gradient".into())));
        }
        adamw_step(&mut params, &grads, &mut state, &cfg.optimizer);
        if !params.is_finite() {
            return Err(diverged(HyfiError::NonFinite("parameters".into())));
        }
        let record = EpochRecord {
            epoch,
            loss_node: loss.node,
            loss_edge: loss.edge,
            loss_total: loss.total,
        };
        log::debug!(
            "epoch {epoch}: node {:.4} edge {:.4} total {:.4}",
            loss.node,
            loss.edge,
            loss.total
        );
        on_epoch(&record, &params);
        history.push(record);
    }
    Ok(TrainResult { params, history })
}
