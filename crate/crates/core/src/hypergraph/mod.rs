//! Hypergraph topology, node features and labels.

pub mod io;
mod overlap;

use std::sync::OnceLock;

use ndarray::{Array2, ArrayView2};

use crate::error::{HyfiError, Result};

pub use io::{load_features, load_hypergraph, load_labels, load_unlabeled, save_dataset};
pub use overlap::{overlap_matrix, shared_neighbors, Level, OverlapMatrix};

/// An immutable hypergraph with sorted member lists and cached overlaps.
#[derive(Debug, Clone)]
pub struct Hypergraph {
    num_nodes: usize,
    edges: Vec<Vec<usize>>,
    memberships: Vec<Vec<usize>>,
    node_overlap: OnceLock<OverlapMatrix>,
    edge_overlap: OnceLock<OverlapMatrix>,
}

impl Hypergraph {
    /// Build a hypergraph, rejecting empty hyperedges, duplicate members and
    /// out-of-range node ids. Members are stored in ascending order.
    pub fn new(num_nodes: usize, edges: Vec<Vec<usize>>) -> Result<Self> {
        Self::build(num_nodes, edges, false)
    }

    /// Like [`Hypergraph::new`] but empty hyperedges are kept. Structural
    /// augmentations produce these.
    pub fn with_empty_edges(num_nodes: usize, edges: Vec<Vec<usize>>) -> Result<Self> {
        Self::build(num_nodes, edges, true)
    }

    fn build(num_nodes: usize, mut edges: Vec<Vec<usize>>, allow_empty: bool) -> Result<Self> {
        let mut memberships = vec![Vec::new(); num_nodes];
        for (j, members) in edges.iter_mut().enumerate() {
            if members.is_empty() && !allow_empty {
                return Err(HyfiError::EmptyHyperedge { hyperedge: j });
            }
            members.sort_unstable();
            for w in members.windows(2) {
                if w[0] == w[1] {
                    return Err(HyfiError::DuplicateMember {
                        hyperedge: j,
                        node: w[0],
                    });
                }
            }
            if let Some(&last) = members.last() {
                if last >= num_nodes {
                    return Err(HyfiError::NodeOutOfRange {
                        hyperedge: j,
                        node: last,
                        num_nodes,
                    });
                }
            }
            for &i in members.iter() {
                memberships[i].push(j);
            }
        }
        Ok(Self {
            num_nodes,
            edges,
            memberships,
            node_overlap: OnceLock::new(),
            edge_overlap: OnceLock::new(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_hyperedges(&self) -> usize {
        self.edges.len()
    }

    pub fn num_incidences(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Members of hyperedge `j`, ascending.
    pub fn hyperedge(&self, j: usize) -> &[usize] {
        &self.edges[j]
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.edges
    }

    /// Hyperedges containing node `i`, ascending.
    pub fn memberships(&self, i: usize) -> &[usize] {
        &self.memberships[i]
    }

    pub fn node_degree(&self, i: usize) -> usize {
        self.memberships[i].len()
    }

    pub fn hyperedge_degree(&self, j: usize) -> usize {
        self.edges[j].len()
    }

    pub fn node_degrees(&self) -> Vec<usize> {
        self.memberships.iter().map(Vec::len).collect()
    }

    pub fn hyperedge_degrees(&self) -> Vec<usize> {
        self.edges.iter().map(Vec::len).collect()
    }

    pub fn has_empty_hyperedge(&self) -> bool {
        self.edges.iter().any(Vec::is_empty)
    }

    /// Number of nodes that belong to no hyperedge.
    pub fn num_isolated_nodes(&self) -> usize {
        self.memberships.iter().filter(|m| m.is_empty()).count()
    }

    /// Overlap counts at `level`, computed on first use.
    pub fn overlap(&self, level: Level) -> &OverlapMatrix {
        match level {
            Level::Node => self
                .node_overlap
                .get_or_init(|| OverlapMatrix::compute(self, Level::Node)),
            Level::Hyperedge => self
                .edge_overlap
                .get_or_init(|| OverlapMatrix::compute(self, Level::Hyperedge)),
        }
    }

    /// Dense incidence matrix. Intended for small graphs and tests.
    pub fn incidence_dense(&self) -> Array2<f64> {
        let mut h = Array2::zeros((self.num_nodes, self.edges.len()));
        for (j, members) in self.edges.iter().enumerate() {
            for &i in members {
                h[[i, j]] = 1.0;
            }
        }
        h
    }

    /// Relabel nodes and hyperedges: node `i` becomes `node_perm[i]` and
    /// hyperedge `j` becomes `edge_perm[j]`.
    pub fn permuted(&self, node_perm: &[usize], edge_perm: &[usize]) -> Result<Self> {
        check_permutation(node_perm, self.num_nodes, "node")?;
        check_permutation(edge_perm, self.edges.len(), "hyperedge")?;
        let mut edges = vec![Vec::new(); self.edges.len()];
        for (j, members) in self.edges.iter().enumerate() {
            edges[edge_perm[j]] = members.iter().map(|&i| node_perm[i]).collect();
        }
        Self::build(self.num_nodes, edges, true)
    }

    /// `out[j] = edge_scale[j] * sum_{i in e_j} node_scale[i] * src[i]`.
    pub(crate) fn gather_to_edges(&self, src: ArrayView2<f64>, node_scale: &[f64], edge_scale: &[f64]) -> Array2<f64> {
        let mut out = Array2::zeros((self.edges.len(), src.ncols()));
        for (j, members) in self.edges.iter().enumerate() {
            let mut row = out.row_mut(j);
            for &i in members {
                row.scaled_add(node_scale[i], &src.row(i));
            }
            row *= edge_scale[j];
        }
        out
    }

    /// `out[i] = node_scale[i] * sum_{j ∋ i} edge_scale[j] * src[j]`.
    pub(crate) fn gather_to_nodes(&self, src: ArrayView2<f64>, edge_scale: &[f64], node_scale: &[f64]) -> Array2<f64> {
        let mut out = Array2::zeros((self.num_nodes, src.ncols()));
        for (i, edges) in self.memberships.iter().enumerate() {
            let mut row = out.row_mut(i);
            for &j in edges {
                row.scaled_add(edge_scale[j], &src.row(j));
            }
            row *= node_scale[i];
        }
        out
    }
}

fn check_permutation(perm: &[usize], size: usize, what: &'static str) -> Result<()> {
    if perm.len() != size {
        return Err(HyfiError::Dimension(format!(
            "{what} permutation has length {} but there are {size} {what}s",
            perm.len()
        )));
    }
    let mut seen = vec![false; size];
    for &p in perm {
        if p >= size || seen[p] {
            return Err(HyfiError::Dimension(format!("{what} permutation is not a bijection")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// Node features, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    values: Array2<f64>,
}

impl FeatureMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(HyfiError::NonFinite("feature matrix".into()));
        }
        let values = if values.is_standard_layout() {
            values
        } else {
            values.as_standard_layout().into_owned()
        };
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn num_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn in_unit_interval(&self) -> bool {
        self.values.iter().all(|&v| (0.0..=1.0).contains(&v))
    }
}

/// Integer class labels, one per node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>) -> Self {
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Self { labels, num_classes }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }
}
