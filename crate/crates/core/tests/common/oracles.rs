//! Dense, direct evaluations used as references for the sparse code paths.

use hyfi::encoder::EncoderParameters;
use hyfi::loss::ContrastSettings;
use hyfi::training::{loss_value, Neighbourhoods};
use hyfi::{Activation, FeatureMatrix, Hypergraph, Level, LossConfig, ModelParameters, NoiseView};
use ndarray::{Array2, ArrayView1, Axis};

pub fn dense_counts(h: &Hypergraph, level: Level) -> Array2<u32> {
    let inc = h.incidence_dense();
    let prod = match level {
        Level::Node => inc.dot(&inc.t()),
        Level::Hyperedge => inc.t().dot(&inc),
    };
    prod.mapv(|v| v as u32)
}

pub fn act(a: Activation, slope: f64, x: f64) -> f64 {
    match a {
        Activation::Relu => x.max(0.0),
        Activation::Prelu => {
            if x > 0.0 {
                x
            } else {
                slope * x
            }
        }
        Activation::Elu => {
            if x > 0.0 {
                x
            } else {
                x.exp() - 1.0
            }
        }
        Activation::Identity => x,
    }
}

/// Layer equations evaluated with dense incidence and degree matrices.
pub fn dense_forward(h: &Hypergraph, x: &Array2<f64>, p: &EncoderParameters) -> (Array2<f64>, Array2<f64>) {
    let inc = h.incidence_dense();
    let d = super::dense_degrees(&inc);
    let mut node = x.clone();
    let mut edge = Array2::zeros((0, 0));
    for l in &p.layers {
        let s = l.slope[0];
        let pre = d
            .de_inv
            .dot(&inc.t())
            .dot(&d.dv_inv_sqrt)
            .dot(&node)
            .dot(&l.edge_weight)
            + &l.edge_bias.view().insert_axis(Axis(0));
        edge = pre.mapv(|v| act(p.activation, s, v));
        let pre = d.dv_inv_sqrt.dot(&inc).dot(&edge).dot(&l.node_weight) + &l.node_bias.view().insert_axis(Axis(0));
        node = pre.mapv(|v| act(p.activation, s, v));
    }
    (node, edge)
}

/// Per-anchor node loss from the definition, summing over all pairs with
/// no stabilising shift.
pub fn brute_force_loss(h: &Hypergraph, origin: &Array2<f64>, views: &[Array2<f64>], s: &ContrastSettings) -> Vec<f64> {
    let n = origin.nrows();
    let inc = h.incidence_dense();
    let counts = inc.dot(&inc.t());
    let sim = |a: ArrayView1<f64>, b: ArrayView1<f64>| (super::cosine(a, b) / s.tau).exp();
    (0..n)
        .map(|i| {
            let mut pos = 0.0;
            if s.use_positive {
                for v in views {
                    pos += sim(origin.row(i), v.row(i));
                }
            }
            let mut weak = 0.0;
            let mut neg = 0.0;
            for j in 0..n {
                if j == i {
                    continue;
                }
                let e = sim(origin.row(i), origin.row(j));
                let neighbour = counts[[i, j]] > 0.0;
                if neighbour && s.use_weak_positive {
                    let w = if s.use_weak_weight {
                        counts[[i, j]] * counts[[i, j]] / counts[[i, i]]
                    } else {
                        1.0
                    };
                    weak += w * e;
                } else {
                    neg += e;
                }
            }
            if pos + weak == 0.0 {
                0.0
            } else {
                -((pos + weak) / (pos + weak + neg)).ln()
            }
        })
        .collect()
}

pub const FD_STEP: f64 = 1e-5;

pub fn flatten(p: &ModelParameters) -> Vec<f64> {
    p.tensors()
        .into_iter()
        .flat_map(|(_, t)| t.iter().copied().collect::<Vec<_>>())
        .collect()
}

fn set_scalar(p: &mut ModelParameters, mut k: usize, value: f64) {
    for mut t in p.tensors_mut() {
        if k < t.len() {
            *t.iter_mut().nth(k).unwrap() = value;
            return;
        }
        k -= t.len();
    }
    panic!("index out of range");
}

/// Central differences of the total loss for every parameter scalar.
pub fn finite_difference(
    h: &Hypergraph,
    x: &FeatureMatrix,
    views: &[NoiseView],
    params: &ModelParameters,
    cfg: &LossConfig,
) -> Vec<f64> {
    let nb = Neighbourhoods::new(h).unwrap();
    let base = flatten(params);
    let mut probe = params.clone();
    base.iter()
        .enumerate()
        .map(|(k, &v)| {
            set_scalar(&mut probe, k, v + FD_STEP);
            let up = loss_value(h, x, views, &probe, &nb, cfg).unwrap().total;
            set_scalar(&mut probe, k, v - FD_STEP);
            let down = loss_value(h, x, views, &probe, &nb, cfg).unwrap().total;
            set_scalar(&mut probe, k, v);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}
