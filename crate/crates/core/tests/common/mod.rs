#![allow(dead_code)]

use hyfi::{FeatureMatrix, Hypergraph};
use ndarray::{Array1, Array2, Axis};
use proptest::prelude::*;

pub mod oracles;
pub mod properties;

/// Random hypergraph with up to `max_nodes` nodes and `max_edges`
/// non-empty hyperedges.
pub fn hypergraph(max_nodes: usize, max_edges: usize) -> impl Strategy<Value = Hypergraph> {
    (2..=max_nodes, 1..=max_edges)
        .prop_flat_map(|(n, m)| {
            prop::collection::vec(prop::collection::btree_set(0..n, 1..=n.min(6)), m).prop_map(move |edges| (n, edges))
        })
        .prop_map(|(n, edges)| {
            Hypergraph::new(n, edges.into_iter().map(|e| e.into_iter().collect()).collect())
                .expect("generated hypergraph is valid")
        })
}

pub fn matrix(rows: usize, cols: usize, lo: f64, hi: f64) -> impl Strategy<Value = Array2<f64>> {
    prop::collection::vec(lo..hi, rows * cols).prop_map(move |v| Array2::from_shape_vec((rows, cols), v).unwrap())
}

/// A hypergraph together with features in `[0, 1]`.
pub fn graph_with_features(
    max_nodes: usize,
    max_edges: usize,
    dim: usize,
) -> impl Strategy<Value = (Hypergraph, FeatureMatrix)> {
    hypergraph(max_nodes, max_edges).prop_flat_map(move |h| {
        let n = h.num_nodes();
        matrix(n, dim, 0.0, 1.0).prop_map(move |x| (h.clone(), FeatureMatrix::new(x).unwrap()))
    })
}

fn inverse_power(d: &Array1<f64>, p: f64) -> Array2<f64> {
    Array2::from_diag(&d.mapv(|v| if v == 0.0 { 0.0 } else { v.powf(p) }))
}

/// Degree matrices computed from a dense incidence matrix.
pub struct DenseDegrees {
    pub dv_inv_sqrt: Array2<f64>,
    pub de_inv: Array2<f64>,
}

pub fn dense_degrees(inc: &Array2<f64>) -> DenseDegrees {
    DenseDegrees {
        dv_inv_sqrt: inverse_power(&inc.sum_axis(Axis(1)), -0.5),
        de_inv: inverse_power(&inc.sum_axis(Axis(0)), -1.0),
    }
}

/// Dense cosine similarity.
pub fn cosine(a: ndarray::ArrayView1<f64>, b: ndarray::ArrayView1<f64>) -> f64 {
    a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt())
}

/// Relative error of two equally shaped arrays, measured in the Frobenius
/// norm.
pub fn relative_error<'a>(a: impl IntoIterator<Item = &'a f64>, b: impl IntoIterator<Item = &'a f64>) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.into_iter().zip(b) {
        diff += (x - y).powi(2);
        na += x * x;
        nb += y * y;
    }
    let scale = na.sqrt().max(nb.sqrt());
    if scale == 0.0 {
        diff.sqrt()
    } else {
        diff.sqrt() / scale
    }
}
