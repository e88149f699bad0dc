//! Contrastive objective with weak positives.
//!
//! For anchor `i` with embedding `z_i`, positives are the same element in
//! every noise view, weak positives are the elements `j` that overlap with
//! `i` (weighted by `w_ij`), and every other element of the origin view is a
//! negative:
//!
//! ```text
//! L_i = -log((pos_i + weak_i) / (pos_i + weak_i + neg_i))
//! ```
//!
//! Similarities are cosine similarities divided by a temperature. Sums are
//! evaluated with the row maximum factored out, and `L_i` is computed as
//! `log1p(neg / (pos + weak))`.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{HyfiError, Result};
use crate::hypergraph::{Level, OverlapMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub tau_node: f64,
    pub tau_edge: f64,
    pub alpha: f64,
    pub use_weak_positive: bool,
    pub use_positive: bool,
    pub use_weak_weight: bool,
    pub use_edge_loss: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            tau_node: 0.5,
            tau_edge: 0.5,
            alpha: 1.0,
            use_weak_positive: true,
            use_positive: true,
            use_weak_weight: true,
            use_edge_loss: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, t) in [("tau_node", self.tau_node), ("tau_edge", self.tau_edge)] {
            if !(t.is_finite() && t > 0.0) {
                return Err(HyfiError::Config(format!("{name} must be positive, got {t}")));
            }
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(HyfiError::Config(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        if !self.use_positive && !self.use_weak_positive {
            return Err(HyfiError::Config(
                "at least one of the positive and weak-positive terms must be enabled".into(),
            ));
        }
        Ok(())
    }

    /// Effective edge-loss weight.
    pub fn edge_weight(&self) -> f64 {
        if self.use_edge_loss {
            self.alpha
        } else {
            0.0
        }
    }
}

/// Off-diagonal weak-positive weights `w_ij = C_ij^2 / C_ii` in row-sparse
/// form. Rows are not symmetric in general.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakWeights {
    level: Level,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

/// Weak-positive weights of every overlapping pair.
pub fn weak_weights(c: &OverlapMatrix) -> Result<WeakWeights> {
    let mut row_ptr = vec![0];
    let mut cols = Vec::new();
    let mut weights = Vec::new();
    for i in 0..c.size() {
        let diag = c.diagonal(i);
        let before = cols.len();
        for (j, cij) in c.row(i) {
            if j == i {
                continue;
            }
            if diag == 0 {
                let neighbors = c.row(i).filter(|&(j, _)| j != i).count();
                return Err(HyfiError::CorruptOverlap { element: i, neighbors });
            }
            let cij = f64::from(cij);
            cols.push(j);
            weights.push(cij * cij / f64::from(diag));
        }
        debug_assert!(cols.len() >= before);
        row_ptr.push(cols.len());
    }
    Ok(WeakWeights {
        level: c.level(),
        row_ptr,
        cols,
        weights,
    })
}

impl WeakWeights {
    pub fn level(&self) -> Level {
        self.level
    }

    pub fn size(&self) -> usize {
        self.row_ptr.len() - 1
    }

    /// `(j, w_ij)` for every weak positive of `i`, ascending in `j`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    /// `w_ij`, zero when `j` is not a weak positive of `i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&j) {
            Ok(k) => self.weights[span][k],
            Err(_) => 0.0,
        }
    }

    pub fn num_neighbors(&self, i: usize) -> usize {
        self.row_ptr[i + 1] - self.row_ptr[i]
    }
}

/// Term selection for one contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContrastSettings {
    pub tau: f64,
    pub use_positive: bool,
    pub use_weak_positive: bool,
    pub use_weak_weight: bool,
    /// Treat all-zero rows of the noise views as having similarity zero
    /// instead of failing. Structural views produce such rows for elements
    /// that lost all their incidences.
    pub tolerate_zero_view_rows: bool,
}

impl ContrastSettings {
    pub fn node(cfg: &LossConfig) -> Self {
        Self::with_tau(cfg, cfg.tau_node)
    }

    pub fn edge(cfg: &LossConfig) -> Self {
        Self::with_tau(cfg, cfg.tau_edge)
    }

    fn with_tau(cfg: &LossConfig, tau: f64) -> Self {
        Self {
            tau,
            use_positive: cfg.use_positive,
            use_weak_positive: cfg.use_weak_positive,
            use_weak_weight: cfg.use_weak_weight,
            tolerate_zero_view_rows: false,
        }
    }
}

/// Loss value, per-anchor terms and (optionally) gradients with respect to
/// the origin embeddings and every view.
#[derive(Debug, Clone)]
pub struct ContrastOutput {
    pub total: f64,
    pub per_anchor: Vec<f64>,
    /// Anchors without any positive or weak-positive mass; they add zero.
    pub skipped_anchors: usize,
    pub grad_origin: Option<Array2<f64>>,
    pub grad_views: Vec<Array2<f64>>,
}

struct Normalized {
    unit: Array2<f64>,
    norms: Array1<f64>,
}

fn normalize(z: ArrayView2<f64>, what: &'static str, tolerate_zero: bool) -> Result<Normalized> {
    let norms = z.map_axis(Axis(1), |r| r.dot(&r).sqrt());
    let mut unit = z.to_owned();
    for (i, (mut row, &n)) in unit.rows_mut().into_iter().zip(norms.iter()).enumerate() {
        if !n.is_finite() {
            return Err(HyfiError::NonFinite(what.to_string()));
        }
        if n == 0.0 {
            if tolerate_zero {
                continue;
            }
            return Err(HyfiError::ZeroNorm { what, row: i });
        }
        row /= n;
    }
    Ok(Normalized { unit, norms })
}

/// Gradient through `u = z / |z|`.
fn normalize_backward(n: &Normalized, d_unit: &Array2<f64>) -> Array2<f64> {
    let mut out = d_unit.clone();
    for ((mut g, u), &r) in out.rows_mut().into_iter().zip(n.unit.rows()).zip(n.norms.iter()) {
        if r == 0.0 {
            g.fill(0.0);
            continue;
        }
        let proj = u.dot(&g);
        g.scaled_add(-proj, &u);
        g /= r;
    }
    out
}

/// The loss at one level. `views` holds the projected embeddings of every
/// noise view; `origin` the projection of the unperturbed input.
pub fn contrastive_loss(
    origin: &Array2<f64>,
    views: &[&Array2<f64>],
    weak: &WeakWeights,
    settings: &ContrastSettings,
    with_grad: bool,
) -> Result<ContrastOutput> {
    let n = origin.nrows();
    if weak.size() != n {
        return Err(HyfiError::RowCountMismatch {
            what: "embeddings",
            expected: weak.size(),
            found: n,
        });
    }
    for v in views {
        if v.dim() != origin.dim() {
            return Err(HyfiError::Dimension(format!(
                "view embeddings are {:?} but origin embeddings are {:?}",
                v.dim(),
                origin.dim()
            )));
        }
    }
    if !settings.use_positive && !settings.use_weak_positive {
        return Err(HyfiError::Config(
            "at least one of the positive and weak-positive terms must be enabled".into(),
        ));
    }
    let tau = settings.tau;
    let base = normalize(origin.view(), "origin embeddings", false)?;
    let view_units = views
        .iter()
        .map(|v| normalize(v.view(), "view embeddings", settings.tolerate_zero_view_rows))
        .collect::<Result<Vec<_>>>()?;
    let sim = base.unit.dot(&base.unit.t());
    let pos_sim: Vec<Array1<f64>> = view_units
        .iter()
        .map(|v| (&base.unit * &v.unit).sum_axis(Axis(1)))
        .collect();

    let mut per_anchor = Vec::with_capacity(n);
    let mut g_sim = if with_grad {
        Array2::zeros((n, n))
    } else {
        Array2::zeros((0, 0))
    };
    let mut g_pos = vec![Array1::<f64>::zeros(n); if with_grad { views.len() } else { 0 }];
    // Coefficient per column: 0 = excluded, > 0 = weak-positive weight, < 0 = negative.
    let mut coef = vec![-1.0f64; n];
    let mut expo = vec![0.0f64; n];
    let mut skipped_anchors = 0;
    for i in 0..n {
        coef[i] = 0.0;
        if settings.use_weak_positive {
            for (j, w) in weak.row(i) {
                coef[j] = if settings.use_weak_weight { w } else { 1.0 };
            }
        }
        let row = sim.row(i);
        let mut shift = f64::NEG_INFINITY;
        for j in 0..n {
            if coef[j] != 0.0 {
                shift = shift.max(row[j] / tau);
            }
        }
        if settings.use_positive {
            for p in &pos_sim {
                shift = shift.max(p[i] / tau);
            }
        }
        let mut attract = 0.0;
        let mut repel = 0.0;
        if settings.use_positive {
            for p in &pos_sim {
                attract += (p[i] / tau - shift).exp();
            }
        }
        for j in 0..n {
            let c = coef[j];
            if c == 0.0 {
                continue;
            }
            let e = (row[j] / tau - shift).exp();
            expo[j] = e;
            if c > 0.0 {
                attract += c * e;
            } else {
                repel += e;
            }
        }
        if attract > 0.0 {
            per_anchor.push((repel / attract).ln_1p());
        } else {
            // Only reachable without the positive term, for an element that
            // overlaps nothing: the ratio is undefined and the anchor is left out.
            per_anchor.push(0.0);
            skipped_anchors += 1;
        }

        if with_grad && attract > 0.0 {
            let inv_all = 1.0 / (attract + repel);
            let inv_attract = 1.0 / attract;
            let mut g_row = g_sim.row_mut(i);
            for j in 0..n {
                let c = coef[j];
                if c == 0.0 {
                    continue;
                }
                let e = expo[j] / tau;
                g_row[j] = if c > 0.0 {
                    c * e * (inv_all - inv_attract)
                } else {
                    e * inv_all
                };
            }
            if settings.use_positive {
                for (m, p) in pos_sim.iter().enumerate() {
                    let e = (p[i] / tau - shift).exp() / tau;
                    g_pos[m][i] = e * (inv_all - inv_attract);
                }
            }
        }

        coef[i] = -1.0;
        if settings.use_weak_positive {
            for (j, _) in weak.row(i) {
                coef[j] = -1.0;
            }
        }
    }
    let total = per_anchor.iter().sum();

    if !with_grad {
        return Ok(ContrastOutput {
            total,
            per_anchor,
            skipped_anchors,
            grad_origin: None,
            grad_views: Vec::new(),
        });
    }

    let sym = &g_sim + &g_sim.t();
    let mut d_base = sym.dot(&base.unit);
    let mut grad_views = Vec::with_capacity(views.len());
    for (v, g) in view_units.iter().zip(&g_pos) {
        let g_col = g.view().insert_axis(Axis(1));
        d_base += &(&v.unit * &g_col);
        let d_view = &base.unit * &g_col;
        grad_views.push(normalize_backward(v, &d_view));
    }
    Ok(ContrastOutput {
        total,
        per_anchor,
        skipped_anchors,
        grad_origin: Some(normalize_backward(&base, &d_base)),
        grad_views,
    })
}

/// Node-level loss; returns the total and the per-anchor terms.
pub fn node_contrastive_loss(
    z: &Array2<f64>,
    views: &[&Array2<f64>],
    weak: &WeakWeights,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    let out = contrastive_loss(z, views, weak, &ContrastSettings::node(cfg), false)?;
    Ok((out.total, out.per_anchor))
}

/// Hyperedge-level loss; returns the total and the per-anchor terms.
pub fn edge_contrastive_loss(
    y: &Array2<f64>,
    views: &[&Array2<f64>],
    weak: &WeakWeights,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    cfg.validate()?;
    let out = contrastive_loss(y, views, weak, &ContrastSettings::edge(cfg), false)?;
    Ok((out.total, out.per_anchor))
}

/// `L_node + alpha * L_edge`, with the edge term dropped when disabled.
pub fn total_loss(node: f64, edge: f64, cfg: &LossConfig) -> f64 {
    if cfg.use_edge_loss {
        node + cfg.alpha * edge
    } else {
        node
    }
}
