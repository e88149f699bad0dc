use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Hypergraph;
use crate::error::{HyfiError, Result};

/// Which element type an overlap matrix (or a loss) ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Node,
    Hyperedge,
}

impl Level {
    pub fn name(self) -> &'static str {
        match self {
            Level::Node => "node",
            Level::Hyperedge => "hyperedge",
        }
    }
}

/// Sparse symmetric count matrix. At node level entry `(i, j)` is the
/// number of hyperedges containing both nodes; at hyperedge level it is the
/// number of nodes two hyperedges share. Only nonzero entries are stored,
/// diagonal included.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapMatrix {
    level: Level,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    counts: Vec<u32>,
}

/// Overlap counts of `h` at `level`. Cached on the hypergraph.
pub fn overlap_matrix(h: &Hypergraph, level: Level) -> &OverlapMatrix {
    h.overlap(level)
}

/// `(j, C[i][j])` for every `j != i` with a positive count, ascending in `j`.
pub fn shared_neighbors(c: &OverlapMatrix, i: usize) -> Result<Vec<(usize, u32)>> {
    if i >= c.size() {
        return Err(HyfiError::IdOutOfRange {
            what: c.level.name(),
            id: i,
            size: c.size(),
        });
    }
    Ok(c.row(i).filter(|&(j, _)| j != i).collect())
}

impl OverlapMatrix {
    pub(crate) fn compute(h: &Hypergraph, level: Level) -> Self {
        let (size, outer, inner): (usize, &[Vec<usize>], &[Vec<usize>]) = match level {
            Level::Node => (h.num_nodes(), &h.memberships, &h.edges),
            Level::Hyperedge => (h.num_hyperedges(), &h.edges, &h.memberships),
        };
        let mut acc = vec![0u32; size];
        let mut touched = Vec::new();
        let mut row_ptr = Vec::with_capacity(size + 1);
        let mut cols = Vec::new();
        let mut counts = Vec::new();
        row_ptr.push(0);
        for a in 0..size {
            for &mid in &outer[a] {
                for &b in &inner[mid] {
                    if acc[b] == 0 {
                        touched.push(b);
                    }
                    acc[b] += 1;
                }
            }
            touched.sort_unstable();
            for &b in &touched {
                cols.push(b);
                counts.push(acc[b]);
                acc[b] = 0;
            }
            touched.clear();
            row_ptr.push(cols.len());
        }
        Self {
            level,
            row_ptr,
            cols,
            counts,
        }
    }

    /// Build from a dense square count matrix. Zero entries are dropped.
    pub fn from_dense(level: Level, dense: &Array2<u32>) -> Result<Self> {
        if dense.nrows() != dense.ncols() {
            return Err(HyfiError::Dimension(format!(
                "overlap matrix must be square, got {}x{}",
                dense.nrows(),
                dense.ncols()
            )));
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut counts = Vec::new();
        for row in dense.rows() {
            for (j, &c) in row.iter().enumerate() {
                if c > 0 {
                    cols.push(j);
                    counts.push(c);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(Self {
            level,
            row_ptr,
            cols,
            counts,
        })
    }

    pub fn level(&self) -> Level {
        self.level
    }

    /// Number of rows (elements at this level).
    pub fn size(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// Number of stored nonzero entries, diagonal included.
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    /// Entry `(i, j)`; zero when not stored.
    pub fn get(&self, i: usize, j: usize) -> u32 {
        let (cols, counts) = self.row_slices(i);
        match cols.binary_search(&j) {
            Ok(k) => counts[k],
            Err(_) => 0,
        }
    }

    pub fn diagonal(&self, i: usize) -> u32 {
        self.get(i, i)
    }

    /// Nonzero entries of row `i` as `(column, count)`, ascending.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, u32)> + '_ {
        let (cols, counts) = self.row_slices(i);
        cols.iter().copied().zip(counts.iter().copied())
    }

    pub(crate) fn row_slices(&self, i: usize) -> (&[usize], &[u32]) {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.cols[span.clone()], &self.counts[span])
    }

    /// Every unordered off-diagonal pair `(i, j, count)` with `i < j` and a
    /// positive count.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
        (0..self.size()).flat_map(move |i| self.row(i).filter(move |&(j, _)| j > i).map(move |(j, c)| (i, j, c)))
    }

    pub fn to_dense(&self) -> Array2<u32> {
        let n = self.size();
        let mut out = Array2::zeros((n, n));
        for i in 0..n {
            for (j, c) in self.row(i) {
                out[[i, j]] = c;
            }
        }
        out
    }
}
