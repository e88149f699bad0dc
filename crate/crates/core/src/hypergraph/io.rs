//! Reading and writing the on-disk dataset layout.
//!
//! A dataset directory holds `hyperedges.txt` (one hyperedge per line as
//! space-separated node ids), `features.csv` (one comma-separated row per
//! node) and `labels.txt` (one integer class per line).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{FeatureMatrix, Hypergraph, LabelVector};
use crate::error::{HyfiError, Result};

pub const HYPEREDGES_FILE: &str = "hyperedges.txt";
pub const FEATURES_FILE: &str = "features.csv";
pub const LABELS_FILE: &str = "labels.txt";

/// Load hypergraph, features and labels from `dir`.
pub fn load_hypergraph(dir: &Path) -> Result<(Hypergraph, FeatureMatrix, LabelVector)> {
    let (h, x) = load_unlabeled(dir)?;
    let y = load_labels(&dir.join(LABELS_FILE), h.num_nodes())?;
    Ok((h, x, y))
}

/// Load hypergraph and features only. Training never needs labels.
pub fn load_unlabeled(dir: &Path) -> Result<(Hypergraph, FeatureMatrix)> {
    let x = load_features(&dir.join(FEATURES_FILE))?;
    let h = load_hyperedges(&dir.join(HYPEREDGES_FILE), x.num_rows())?;
    Ok((h, x))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| HyfiError::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> HyfiError {
    HyfiError::Parse {
        path: PathBuf::from(path),
        line,
        message: message.into(),
    }
}

fn load_hyperedges(path: &Path, num_nodes: usize) -> Result<Hypergraph> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let members = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|_| parse_error(path, k + 1, format!("invalid node id {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if members.is_empty() {
            return Err(parse_error(path, k + 1, "empty hyperedge line"));
        }
        edges.push(members);
    }
    Hypergraph::new(num_nodes, edges)
}

/// Load a feature matrix from a CSV file without header.
pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let text = read(path)?;
    let mut values = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (k, line) in text.lines().enumerate() {
        let before = values.len();
        for tok in line.split(',') {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| parse_error(path, k + 1, format!("invalid feature value {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_error(path, k + 1, "non-finite feature value"));
            }
            values.push(v);
        }
        let width = values.len() - before;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(parse_error(path, k + 1, format!("expected {d} columns, found {width}")))
            }
            _ => {}
        }
        rows += 1;
    }
    let dim = dim.ok_or_else(|| parse_error(path, 0, "no feature rows"))?;
    let values = Array2::from_shape_vec((rows, dim), values).map_err(|e| HyfiError::Dimension(e.to_string()))?;
    FeatureMatrix::new(values)
}

/// Load labels, requiring exactly `num_nodes` rows.
pub fn load_labels(path: &Path, num_nodes: usize) -> Result<LabelVector> {
    let text = read(path)?;
    let labels = text
        .lines()
        .enumerate()
        .map(|(k, line)| {
            line.trim()
                .parse::<usize>()
                .map_err(|_| parse_error(path, k + 1, format!("invalid label {line:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if labels.len() != num_nodes {
        return Err(HyfiError::RowCountMismatch {
            what: "labels",
            expected: num_nodes,
            found: labels.len(),
        });
    }
    Ok(LabelVector::new(labels))
}

/// Write a dataset in canonical form: members ascending, hyperedges in
/// their stored order, shortest round-trip float formatting.
pub fn save_dataset(dir: &Path, h: &Hypergraph, x: &FeatureMatrix, y: Option<&LabelVector>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HyfiError::io(dir, e))?;
    let write = |name: &str, text: String| {
        let path = dir.join(name);
        fs::write(&path, text).map_err(|e| HyfiError::io(path, e))
    };

    let mut text = String::new();
    for members in h.hyperedges() {
        let line: Vec<String> = members.iter().map(usize::to_string).collect();
        text.push_str(&line.join(" "));
        text.push('\n');
    }
    write(HYPEREDGES_FILE, text)?;

    let mut text = String::new();
    for row in x.values().rows() {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                text.push(',');
            }
            write!(text, "{v}").expect("writing to a String cannot fail");
        }
        text.push('\n');
    }
    write(FEATURES_FILE, text)?;

    if let Some(y) = y {
        let mut text = String::new();
        for l in y.labels() {
            writeln!(text, "{l}").expect("writing to a String cannot fail");
        }
        write(LABELS_FILE, text)?;
    }
    Ok(())
}
