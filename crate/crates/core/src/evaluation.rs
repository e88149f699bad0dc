//! Linear-probe node classification and the overlap/similarity analysis.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HyfiError, Result};
use crate::hypergraph::{FeatureMatrix, Hypergraph, LabelVector, Level};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub valid_frac: f64,
    pub num_splits: usize,
    pub num_inits: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.1,
            valid_frac: 0.1,
            num_splits: 20,
            num_inits: 5,
            seed: rng::derive_seed(0, "splits"),
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.train_frac > 0.0
            && self.valid_frac > 0.0
            && self.train_frac + self.valid_frac < 1.0
            && self.num_splits > 0
            && self.num_inits > 0;
        if ok {
            Ok(())
        } else {
            Err(HyfiError::Config(format!("invalid split settings {self:?}")))
        }
    }

    /// Part sizes for `n` nodes: train and validation take the floor of
    /// their fraction, test takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = (self.train_frac * n as f64).floor() as usize;
        let valid = (self.valid_frac * n as f64).floor() as usize;
        (train, valid, n.saturating_sub(train + valid))
    }
}

/// One train/validation/test partition, each part ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// `spec.num_splits` independent uniform partitions of `0..n`.
pub fn make_splits(n: usize, spec: &SplitSpec) -> Result<Vec<Split>> {
    spec.validate()?;
    let (a, b, c) = spec.sizes(n);
    if n < 10 || a == 0 || b == 0 || c == 0 {
        return Err(HyfiError::Config(format!(
            "{n} nodes are too few for non-empty train/validation/test parts"
        )));
    }
    Ok((0..spec.num_splits)
        .map(|s| {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::stream(spec.seed, s as u64));
            let part = |range: std::ops::Range<usize>| {
                let mut v = perm[range].to_vec();
                v.sort_unstable();
                v
            };
            Split {
                train: part(0..a),
                valid: part(a..a + b),
                test: part(a + b..n),
            }
        })
        .collect())
}

/// What to do when a training part misses a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MissingClassPolicy {
    /// Warn and evaluate the split anyway.
    Keep,
    /// Warn and leave the split out of the report.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub missing_class: MissingClassPolicy,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            weight_decay: 1e-4,
            epochs: 500,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            missing_class: MissingClassPolicy::Keep,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunAccuracy {
    pub split: usize,
    pub init: usize,
    pub accuracy: f64,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub runs: Vec<RunAccuracy>,
    pub mean: f64,
    /// Population standard deviation over runs.
    pub std: f64,
    pub skipped_splits: Vec<usize>,
    pub fingerprint: String,
}

impl EvalReport {
    fn from_runs(runs: Vec<RunAccuracy>, skipped_splits: Vec<usize>, fingerprint: String) -> Self {
        let mut accs: Vec<f64> = runs.iter().map(|r| r.accuracy).collect();
        accs.sort_by(f64::total_cmp);
        let (mean, std) = mean_std(&accs);
        Self {
            runs,
            mean,
            std,
            skipped_splits,
            fingerprint,
        }
    }
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn fingerprint(embeddings: ArrayView2<f64>, spec: &SplitSpec, probe: &ProbeConfig) -> String {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(spec).expect("split spec serialises"));
    h.update(serde_json::to_vec(probe).expect("probe config serialises"));
    h.update((embeddings.nrows() as u64).to_le_bytes());
    h.update((embeddings.ncols() as u64).to_le_bytes());
    for v in embeddings.iter() {
        h.update(v.to_le_bytes());
    }
    hex(&h.finalize())
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn gather(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn predict(x: &Array2<f64>, w: &Array2<f64>, b: &Array1<f64>) -> Vec<usize> {
    let logits = x.dot(w) + &b.view().insert_axis(Axis(0));
    logits
        .rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (k, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = k;
                }
            }
            best
        })
        .collect()
}

fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

struct Probe<'a> {
    cfg: &'a ProbeConfig,
    x_train: Array2<f64>,
    y_train: Vec<usize>,
    x_valid: Array2<f64>,
    y_valid: Vec<usize>,
    classes: usize,
}

impl Probe<'_> {
    /// Fit from a Glorot-uniform start and return the weights with the best
    /// validation accuracy (earliest epoch on ties) and that epoch.
    fn fit(&self, seed: u64) -> (Array2<f64>, Array1<f64>, usize) {
        let dim = self.x_train.ncols();
        let bound = (6.0 / (dim + self.classes) as f64).sqrt();
        let mut rng = rng::stream(seed, 0);
        let mut w = Array2::from_shape_simple_fn((dim, self.classes), || rng.random_range(-bound..=bound));
        let mut b = Array1::zeros(self.classes);
        let mut mw = Array2::<f64>::zeros(w.raw_dim());
        let mut vw = Array2::<f64>::zeros(w.raw_dim());
        let mut mb = Array1::<f64>::zeros(self.classes);
        let mut vb = Array1::<f64>::zeros(self.classes);
        let k = self.x_train.nrows() as f64;
        let cfg = self.cfg;

        let mut best = (w.clone(), b.clone(), 0usize);
        let mut best_acc = f64::NEG_INFINITY;
        for epoch in 1..=cfg.epochs {
            let mut g = self.x_train.dot(&w) + &b.view().insert_axis(Axis(0));
            for (mut row, &y) in g.rows_mut().into_iter().zip(&self.y_train) {
                let max = row.fold(f64::NEG_INFINITY, |a, &v| a.max(v));
                row.mapv_inplace(|v| (v - max).exp());
                let sum = row.sum();
                row /= sum;
                row[y] -= 1.0;
            }
            g /= k;
            let gw = self.x_train.t().dot(&g);
            let gb = g.sum_axis(Axis(0));
            let t = epoch as i32;
            let c1 = 1.0 - cfg.beta1.powi(t);
            let c2 = 1.0 - cfg.beta2.powi(t);
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                *p -= cfg.learning_rate * ((*m / c1) / ((*v / c2).sqrt() + cfg.eps) + cfg.weight_decay * *p);
            };
            ndarray::Zip::from(&mut w)
                .and(&gw)
                .and(&mut mw)
                .and(&mut vw)
                .for_each(|p, &g, m, v| update(p, g, m, v));
            ndarray::Zip::from(&mut b)
                .and(&gb)
                .and(&mut mb)
                .and(&mut vb)
                .for_each(|p, &g, m, v| update(p, g, m, v));

            let acc = accuracy(&predict(&self.x_valid, &w, &b), &self.y_valid);
            if acc > best_acc {
                best_acc = acc;
                best = (w.clone(), b.clone(), epoch);
            }
        }
        best
    }
}

/// Fit a softmax-regression probe on frozen embeddings for every split and
/// initialisation and score the validation-selected model on the test part.
pub fn linear_evaluate(
    embeddings: &Array2<f64>,
    labels: &LabelVector,
    spec: &SplitSpec,
    probe: &ProbeConfig,
) -> Result<EvalReport> {
    if embeddings.nrows() != labels.len() {
        return Err(HyfiError::RowCountMismatch {
            what: "embeddings",
            expected: labels.len(),
            found: embeddings.nrows(),
        });
    }
    if embeddings.iter().any(|v| !v.is_finite()) {
        return Err(HyfiError::NonFinite("embeddings".into()));
    }
    if probe.epochs == 0 {
        return Err(HyfiError::Config("probe epochs must be at least 1".into()));
    }
    let splits = make_splits(labels.len(), spec)?;
    let y = labels.labels();
    let classes = labels.num_classes();
    let x = embeddings.view();
    let mut runs = Vec::new();
    let mut skipped = Vec::new();
    for (s, split) in splits.iter().enumerate() {
        let mut present = vec![false; classes];
        for &i in &split.train {
            present[y[i]] = true;
        }
        let missing = present.iter().filter(|p| !**p).count();
        if missing > 0 {
            log::warn!("split {s}: {missing} of {classes} classes absent from the training part");
            if probe.missing_class == MissingClassPolicy::Skip {
                skipped.push(s);
                continue;
            }
        }
        let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<_>>();
        let p = Probe {
            cfg: probe,
            x_train: gather(x, &split.train),
            y_train: pick(&split.train),
            x_valid: gather(x, &split.valid),
            y_valid: pick(&split.valid),
            classes,
        };
        let split_seed = rng::derive_indexed(spec.seed, "probe", s as u64);
        let fits: Vec<_> = (0..spec.num_inits)
            .map(|i| p.fit(rng::derive_indexed(split_seed, "init", i as u64)))
            .collect();
        // Test labels are read only here, after every model is fixed.
        let x_test = gather(x, &split.test);
        let y_test = pick(&split.test);
        for (i, (w, b, best_epoch)) in fits.into_iter().enumerate() {
            runs.push(RunAccuracy {
                split: s,
                init: i,
                accuracy: accuracy(&predict(&x_test, &w, &b), &y_test),
                best_epoch,
            });
        }
    }
    if runs.is_empty() {
        return Err(HyfiError::Config(
            "every split misses a class in its training part".into(),
        ));
    }
    Ok(EvalReport::from_runs(runs, skipped, fingerprint(x, spec, probe)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommonalityPoint {
    pub c: u32,
    pub mean_cosine: f64,
    pub pair_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonalityCurve {
    pub points: Vec<CommonalityPoint>,
    /// Nodes left out because their feature row is all zeros.
    pub zero_norm_nodes: usize,
}

impl CommonalityCurve {
    pub fn at(&self, c: u32) -> Option<&CommonalityPoint> {
        self.points.iter().find(|p| p.c == c)
    }
}

/// Mean raw-feature cosine similarity of node pairs, grouped by the exact
/// number of hyperedges they share, for shared counts `1..=max_c`.
pub fn commonality_curve(h: &Hypergraph, x: &FeatureMatrix, max_c: u32) -> Result<CommonalityCurve> {
    if x.num_rows() != h.num_nodes() {
        return Err(HyfiError::RowCountMismatch {
            what: "features",
            expected: h.num_nodes(),
            found: x.num_rows(),
        });
    }
    let v = x.values();
    let norms: Vec<f64> = v.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let zero_norm_nodes = norms.iter().filter(|&&n| n == 0.0).count();
    let mut acc: BTreeMap<u32, (f64, u64)> = BTreeMap::new();
    for (i, j, c) in h.overlap(Level::Node).pairs() {
        if c > max_c || norms[i] == 0.0 || norms[j] == 0.0 {
            continue;
        }
        let cos = v.row(i).dot(&v.row(j)) / (norms[i] * norms[j]);
        let e = acc.entry(c).or_insert((0.0, 0));
        e.0 += cos;
        e.1 += 1;
    }
    Ok(CommonalityCurve {
        points: acc
            .into_iter()
            .map(|(c, (sum, count))| CommonalityPoint {
                c,
                mean_cosine: sum / count as f64,
                pair_count: count,
            })
            .collect(),
        zero_norm_nodes,
    })
}
