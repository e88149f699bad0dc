//! Two-phase hypergraph message passing and the projection heads.
//!
//! Each layer first aggregates node states into hyperedge states and then
//! hyperedge states back into node states:
//!
//! ```text
//! Q = act(D_E^-1 H^T D_V^-1/2 P Θ_E + b_E)
//! P' = act(D_V^-1/2 H Q Θ_V + b_V)
//! ```
//!
//! Inverse powers of zero degrees are taken as zero, so isolated nodes and
//! empty hyperedges receive their bias only.

use ndarray::{Array1, Array2, ArrayView2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HyfiError, Result};
use crate::hypergraph::{FeatureMatrix, Hypergraph};
use crate::rng;

pub const PRELU_INIT_SLOPE: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Relu,
    Prelu,
    Elu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Prelu => "prelu",
            Activation::Elu => "elu",
            Activation::Identity => "identity",
        }
    }

    fn apply(self, x: f64, slope: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Prelu => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Activation::Elu => elu(x),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the input, evaluated at the pre-activation.
    fn derivative(self, x: f64, slope: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Prelu => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Activation::Elu => elu_derivative(x),
            Activation::Identity => 1.0,
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Activation {
    type Err = HyfiError;

    fn from_str(s: &str) -> Result<Self> {
        [
            Activation::Relu,
            Activation::Prelu,
            Activation::Elu,
            Activation::Identity,
        ]
        .into_iter()
        .find(|a| a.name() == s)
        .ok_or_else(|| HyfiError::Config(format!("unknown activation {s:?}")))
    }
}

pub(crate) fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

pub(crate) fn elu_derivative(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        x.exp()
    }
}

/// Parameters of one message-passing layer.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub edge_weight: Array2<f64>,
    pub edge_bias: Array1<f64>,
    pub node_weight: Array2<f64>,
    pub node_bias: Array1<f64>,
    /// Negative-side slope, used only by [`Activation::Prelu`].
    pub slope: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParameters {
    pub layers: Vec<EncoderLayer>,
    pub activation: Activation,
}

/// Two affine maps with an ELU between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHead {
    pub weight1: Array2<f64>,
    pub bias1: Array1<f64>,
    pub weight2: Array2<f64>,
    pub bias2: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParameters {
    pub node: ProjectionHead,
    pub edge: ProjectionHead,
}

/// Everything that is trained.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub encoder: EncoderParameters,
    pub projection: ProjectionParameters,
}

/// Encoder outputs for one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewEmbeddings {
    pub node_embed: Array2<f64>,
    pub edge_embed: Array2<f64>,
    pub node_proj: Array2<f64>,
    pub edge_proj: Array2<f64>,
}

impl EncoderParameters {
    pub fn input_dim(&self) -> usize {
        self.layers[0].edge_weight.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").node_weight.ncols()
    }

    pub fn edge_output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").edge_weight.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(HyfiError::Dimension("encoder has no layers".into()));
        }
        let mut width = self.input_dim();
        for (k, l) in self.layers.iter().enumerate() {
            let edge_out = l.edge_weight.ncols();
            let node_out = l.node_weight.ncols();
            let ok = l.edge_weight.nrows() == width
                && l.edge_bias.len() == edge_out
                && l.node_weight.nrows() == edge_out
                && l.node_bias.len() == node_out
                && l.slope.len() == 1;
            if !ok {
                return Err(HyfiError::Dimension(format!("encoder layer {k} shapes do not chain")));
            }
            width = node_out;
        }
        Ok(())
    }
}

impl ModelParameters {
    /// Every tensor with a stable name, in a fixed order.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, f64>)> {
        let mut out = Vec::new();
        for (k, l) in self.encoder.layers.iter().enumerate() {
            out.push((format!("encoder.{k}.edge_weight"), l.edge_weight.view().into_dyn()));
            out.push((format!("encoder.{k}.edge_bias"), l.edge_bias.view().into_dyn()));
            out.push((format!("encoder.{k}.node_weight"), l.node_weight.view().into_dyn()));
            out.push((format!("encoder.{k}.node_bias"), l.node_bias.view().into_dyn()));
            out.push((format!("encoder.{k}.slope"), l.slope.view().into_dyn()));
        }
        for (name, head) in [("node", &self.projection.node), ("edge", &self.projection.edge)] {
            out.push((format!("head.{name}.weight1"), head.weight1.view().into_dyn()));
            out.push((format!("head.{name}.bias1"), head.bias1.view().into_dyn()));
            out.push((format!("head.{name}.weight2"), head.weight2.view().into_dyn()));
            out.push((format!("head.{name}.bias2"), head.bias2.view().into_dyn()));
        }
        out
    }

    /// Mutable views in the same order as [`ModelParameters::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, f64>> {
        let mut out = Vec::new();
        for l in self.encoder.layers.iter_mut() {
            out.push(l.edge_weight.view_mut().into_dyn());
            out.push(l.edge_bias.view_mut().into_dyn());
            out.push(l.node_weight.view_mut().into_dyn());
            out.push(l.node_bias.view_mut().into_dyn());
            out.push(l.slope.view_mut().into_dyn());
        }
        for head in [&mut self.projection.node, &mut self.projection.edge] {
            out.push(head.weight1.view_mut().into_dyn());
            out.push(head.bias1.view_mut().into_dyn());
            out.push(head.weight2.view_mut().into_dyn());
            out.push(head.bias2.view_mut().into_dyn());
        }
        out
    }

    /// A same-shaped set of zeros, used to accumulate gradients.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for mut t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

fn glorot(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

fn head(rng: &mut impl Rng, input: usize, dim: usize) -> ProjectionHead {
    ProjectionHead {
        weight1: glorot(rng, input, dim),
        bias1: Array1::zeros(dim),
        weight2: glorot(rng, dim, dim),
        bias2: Array1::zeros(dim),
    }
}

/// Glorot-uniform weights and zero biases. `dims` lists the input width
/// followed by the width of every layer; each layer uses the same width for
/// its hyperedge and node channels.
pub fn init_parameters(dims: &[usize], proj_dim: usize, activation: Activation, seed: u64) -> Result<ModelParameters> {
    if dims.len() < 2 {
        return Err(HyfiError::Config(
            "dims must list the input width and at least one layer width".into(),
        ));
    }
    if dims.contains(&0) || proj_dim == 0 {
        return Err(HyfiError::Config("dimensions must be positive".into()));
    }
    let mut rng = rng::stream(seed, 0);
    let layers = dims
        .windows(2)
        .map(|w| EncoderLayer {
            edge_weight: glorot(&mut rng, w[0], w[1]),
            edge_bias: Array1::zeros(w[1]),
            node_weight: glorot(&mut rng, w[1], w[1]),
            node_bias: Array1::zeros(w[1]),
            slope: Array1::from_elem(1, PRELU_INIT_SLOPE),
        })
        .collect();
    let out = *dims.last().expect("checked length");
    let node = head(&mut rng, out, proj_dim);
    let edge = head(&mut rng, out, proj_dim);
    Ok(ModelParameters {
        encoder: EncoderParameters { layers, activation },
        projection: ProjectionParameters { node, edge },
    })
}

/// Degree normalisers of one hypergraph.
pub(crate) struct Degrees {
    node_inv_sqrt: Vec<f64>,
    edge_inv: Vec<f64>,
    edge_ones: Vec<f64>,
}

impl Degrees {
    pub(crate) fn new(h: &Hypergraph) -> Self {
        let inv = |d: usize, f: fn(f64) -> f64| if d == 0 { 0.0 } else { f(d as f64) };
        Self {
            node_inv_sqrt: h
                .node_degrees()
                .into_iter()
                .map(|d| inv(d, |v| 1.0 / v.sqrt()))
                .collect(),
            edge_inv: h.hyperedge_degrees().into_iter().map(|d| inv(d, |v| 1.0 / v)).collect(),
            edge_ones: vec![1.0; h.num_hyperedges()],
        }
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
pub(crate) struct LayerTrace {
    edge_pre: Array2<f64>,
    edge_out: Array2<f64>,
    node_pre: Array2<f64>,
    node_out: Array2<f64>,
}

pub(crate) struct EncoderTrace {
    layers: Vec<LayerTrace>,
    sparse_input: Option<SparseRows>,
}

/// Row-compressed copy of a mostly-zero input matrix.
struct SparseRows {
    ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    ncols: usize,
}

impl SparseRows {
    const MAX_DENSITY: f64 = 0.05;

    fn from_dense(x: ArrayView2<f64>) -> Option<Self> {
        let nnz = x.iter().filter(|&&v| v != 0.0).count();
        if nnz as f64 > Self::MAX_DENSITY * x.len() as f64 {
            return None;
        }
        let mut ptr = Vec::with_capacity(x.nrows() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        ptr.push(0);
        for row in x.rows() {
            for (k, &v) in row.iter().enumerate() {
                if v != 0.0 {
                    cols.push(k);
                    vals.push(v);
                }
            }
            ptr.push(cols.len());
        }
        Some(Self {
            ptr,
            cols,
            vals,
            ncols: x.ncols(),
        })
    }

    fn entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.ptr[i]..self.ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    /// `X W`.
    fn dot(&self, w: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.ptr.len() - 1, w.ncols()));
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            for (k, v) in self.entries(i) {
                row.scaled_add(v, &w.row(k));
            }
        }
        out
    }

    /// `X^T D`.
    fn t_dot(&self, d: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.ncols, d.ncols()));
        for (i, drow) in d.rows().into_iter().enumerate() {
            for (k, v) in self.entries(i) {
                out.row_mut(k).scaled_add(v, &drow);
            }
        }
        out
    }
}

impl EncoderTrace {
    pub(crate) fn node_embed(&self) -> &Array2<f64> {
        &self.layers.last().expect("at least one layer").node_out
    }

    pub(crate) fn edge_embed(&self) -> &Array2<f64> {
        &self.layers.last().expect("at least one layer").edge_out
    }
}

fn add_bias(mut a: Array2<f64>, b: &Array1<f64>) -> Array2<f64> {
    a += &b.view().insert_axis(Axis(0));
    a
}

fn activate(pre: &Array2<f64>, act: Activation, slope: f64) -> Array2<f64> {
    pre.mapv(|v| act.apply(v, slope))
}

fn check_finite(a: &Array2<f64>, what: &str) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(HyfiError::NonFinite(what.to_string()))
    }
}

pub(crate) fn forward_trace(h: &Hypergraph, x: ArrayView2<f64>, params: &EncoderParameters) -> Result<EncoderTrace> {
    params.validate()?;
    if x.nrows() != h.num_nodes() {
        return Err(HyfiError::RowCountMismatch {
            what: "features",
            expected: h.num_nodes(),
            found: x.nrows(),
        });
    }
    if x.ncols() != params.input_dim() {
        return Err(HyfiError::Dimension(format!(
            "features have {} columns but the encoder expects {}",
            x.ncols(),
            params.input_dim()
        )));
    }
    let deg = Degrees::new(h);
    let act = params.activation;
    let sparse_input = SparseRows::from_dense(x);
    let mut layers: Vec<LayerTrace> = Vec::with_capacity(params.layers.len());
    for layer in &params.layers {
        let slope = layer.slope[0];
        let mixed = match (layers.last(), &sparse_input) {
            (Some(prev), _) => prev.node_out.dot(&layer.edge_weight),
            (None, Some(sp)) => sp.dot(&layer.edge_weight),
            (None, None) => x.dot(&layer.edge_weight),
        };
        let edge_pre = add_bias(
            h.gather_to_edges(mixed.view(), &deg.node_inv_sqrt, &deg.edge_inv),
            &layer.edge_bias,
        );
        let edge_out = activate(&edge_pre, act, slope);
        let mixed = edge_out.dot(&layer.node_weight);
        let node_pre = add_bias(
            h.gather_to_nodes(mixed.view(), &deg.edge_ones, &deg.node_inv_sqrt),
            &layer.node_bias,
        );
        let node_out = activate(&node_pre, act, slope);
        layers.push(LayerTrace {
            edge_pre,
            edge_out,
            node_pre,
            node_out,
        });
    }
    let trace = EncoderTrace { layers, sparse_input };
    check_finite(trace.node_embed(), "encoder node output")?;
    check_finite(trace.edge_embed(), "encoder hyperedge output")?;
    Ok(trace)
}

/// Node and hyperedge embeddings `(P, Q)` of the last layer.
pub fn encoder_forward(
    h: &Hypergraph,
    x: &FeatureMatrix,
    params: &EncoderParameters,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut trace = forward_trace(h, x.values().view(), params)?;
    let last = trace.layers.pop().expect("at least one layer");
    Ok((last.node_out, last.edge_out))
}

/// Multiply `grad` elementwise by the activation derivative at `pre` and
/// return the slope gradient contribution.
fn through_activation(grad: &mut Array2<f64>, pre: &Array2<f64>, act: Activation, slope: f64) -> f64 {
    let mut slope_grad = 0.0;
    for (g, &p) in grad.iter_mut().zip(pre.iter()) {
        if act == Activation::Prelu && p <= 0.0 {
            slope_grad += *g * p;
        }
        *g *= act.derivative(p, slope);
    }
    slope_grad
}

/// Accumulate parameter gradients of a scalar objective into `grads`, given
/// its gradients with respect to the final node and hyperedge embeddings.
pub(crate) fn backward(
    h: &Hypergraph,
    x: ArrayView2<f64>,
    params: &EncoderParameters,
    trace: &EncoderTrace,
    d_node: Array2<f64>,
    d_edge: Option<&Array2<f64>>,
    grads: &mut EncoderParameters,
) {
    let deg = Degrees::new(h);
    let act = params.activation;
    let mut d_out = d_node;
    for k in (0..params.layers.len()).rev() {
        let layer = &params.layers[k];
        let t = &trace.layers[k];
        let g = &mut grads.layers[k];
        let slope = layer.slope[0];

        let mut d_node_pre = d_out;
        g.slope[0] += through_activation(&mut d_node_pre, &t.node_pre, act, slope);
        g.node_bias += &d_node_pre.sum_axis(Axis(0));
        let d_mixed = h.gather_to_edges(d_node_pre.view(), &deg.node_inv_sqrt, &deg.edge_ones);
        g.node_weight += &t.edge_out.t().dot(&d_mixed);
        let mut d_edge_pre = d_mixed.dot(&layer.node_weight.t());
        if k + 1 == params.layers.len() {
            if let Some(de) = d_edge {
                d_edge_pre += de;
            }
        }
        g.slope[0] += through_activation(&mut d_edge_pre, &t.edge_pre, act, slope);
        g.edge_bias += &d_edge_pre.sum_axis(Axis(0));
        let d_mixed = h.gather_to_nodes(d_edge_pre.view(), &deg.edge_inv, &deg.node_inv_sqrt);
        if k > 0 {
            g.edge_weight += &trace.layers[k - 1].node_out.t().dot(&d_mixed);
        } else if let Some(sp) = &trace.sparse_input {
            g.edge_weight += &sp.t_dot(&d_mixed);
        } else {
            g.edge_weight += &x.t().dot(&d_mixed);
        }
        if k == 0 {
            break;
        }
        d_out = d_mixed.dot(&layer.edge_weight.t());
    }
}

pub(crate) struct HeadTrace {
    pre: Array2<f64>,
    hidden: Array2<f64>,
}

impl ProjectionHead {
    fn check(&self, input: usize) -> Result<()> {
        let d = self.weight1.ncols();
        let ok = self.weight1.nrows() == input
            && self.bias1.len() == d
            && self.weight2.nrows() == d
            && self.bias2.len() == self.weight2.ncols();
        if ok {
            Ok(())
        } else {
            Err(HyfiError::Dimension(format!(
                "projection head does not accept {input}-dimensional embeddings"
            )))
        }
    }

    pub(crate) fn forward_trace(&self, x: &Array2<f64>) -> Result<(Array2<f64>, HeadTrace)> {
        self.check(x.ncols())?;
        let pre = add_bias(x.dot(&self.weight1), &self.bias1);
        let hidden = pre.mapv(elu);
        let out = add_bias(hidden.dot(&self.weight2), &self.bias2);
        check_finite(&out, "projection output")?;
        Ok((out, HeadTrace { pre, hidden }))
    }

    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward_trace(x)?.0)
    }

    /// Accumulate gradients into `grad` and return the input gradient.
    pub(crate) fn backward(
        &self,
        x: &Array2<f64>,
        trace: &HeadTrace,
        d_out: &Array2<f64>,
        grad: &mut ProjectionHead,
    ) -> Array2<f64> {
        grad.bias2 += &d_out.sum_axis(Axis(0));
        grad.weight2 += &trace.hidden.t().dot(d_out);
        let mut d_pre = d_out.dot(&self.weight2.t());
        d_pre.zip_mut_with(&trace.pre, |g, &p| *g *= elu_derivative(p));
        grad.bias1 += &d_pre.sum_axis(Axis(0));
        grad.weight1 += &x.t().dot(&d_pre);
        d_pre.dot(&self.weight1.t())
    }
}

/// Apply the node head to `p` and the hyperedge head to `q`.
pub fn project(p: &Array2<f64>, q: &Array2<f64>, heads: &ProjectionParameters) -> Result<(Array2<f64>, Array2<f64>)> {
    Ok((heads.node.forward(p)?, heads.edge.forward(q)?))
}

/// Encode one view and project it.
pub fn embed_view(h: &Hypergraph, x: &FeatureMatrix, params: &ModelParameters) -> Result<ViewEmbeddings> {
    let (node_embed, edge_embed) = encoder_forward(h, x, &params.encoder)?;
    let (node_proj, edge_proj) = project(&node_embed, &edge_embed, &params.projection)?;
    Ok(ViewEmbeddings {
        node_embed,
        edge_embed,
        node_proj,
        edge_proj,
    })
}
