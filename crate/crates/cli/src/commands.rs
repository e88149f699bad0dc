use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use hyfi::checkpoint::{load_checkpoint, save_checkpoint};
use hyfi::evaluation::{commonality_curve, linear_evaluate};
use hyfi::experiment::{ablation_cells, embed as embed_nodes, run_pipeline, AblationGrid};
use hyfi::hypergraph::{load_hypergraph, load_unlabeled};
use hyfi::training::train_with_callback;
use hyfi::{EpochRecord, EvalReport, Representation, RunConfig};
use ndarray::Array2;
use serde_json::json;

use crate::manifest::{write_json, RunManifest};
use crate::options::{ConfigArgs, EvalArgs};

const CHECKPOINT_FILE: &str = "model.ckpt";

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_text(path: &Path, text: String) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn loss_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,loss_node,loss_edge,loss_total\n");
    for r in history {
        writeln!(s, "{},{},{},{}", r.epoch, r.loss_node, r.loss_edge, r.loss_total).unwrap();
    }
    s
}

fn write_report(out: &Path, report: &EvalReport, cfg: &RunConfig) -> Result<()> {
    let mut s = String::from("split,init,accuracy\n");
    for r in &report.runs {
        writeln!(s, "{},{},{}", r.split, r.init, r.accuracy).unwrap();
    }
    write_text(&out.join("eval.csv"), s)?;
    write_json(
        &out.join("eval_summary.json"),
        &json!({
            "mean": report.mean,
            "std": report.std,
            "runs": report.runs.len(),
            "skipped_splits": report.skipped_splits,
            "representation": cfg.representation,
            "fingerprint": report.fingerprint,
        }),
    )
}

fn checkpoint_metadata(cfg: &RunConfig, epochs_done: usize) -> serde_json::Value {
    json!({ "config": cfg, "epochs_completed": epochs_done })
}

pub fn train(data: &Path, out: &Path, checkpoint_every: Option<usize>, args: &ConfigArgs) -> Result<()> {
    let cfg = args.resolve()?;
    let (h, x) = load_unlabeled(data)?;
    create_dir(out)?;
    let mut manifest = RunManifest::new("train", data, &cfg)?;
    manifest.write(out)?;
    log::info!(
        "training on {} nodes, {} hyperedges, {} features for {} epochs",
        h.num_nodes(),
        h.num_hyperedges(),
        x.dim(),
        cfg.train.epochs
    );

    let snapshots = out.join("checkpoints");
    let mut snapshot_error = None;
    let result = train_with_callback(&h, &x, &cfg.train, |rec, params| {
        let done = rec.epoch + 1;
        if done % 10 == 0 || done == cfg.train.epochs {
            log::info!("epoch {done}: loss {:.4}", rec.loss_total);
        }
        if checkpoint_every.is_some_and(|n| n > 0 && done % n == 0) {
            let write = fs::create_dir_all(&snapshots)
                .map_err(anyhow::Error::from)
                .and_then(|_| {
                    let path = snapshots.join(format!("epoch-{done:05}.ckpt"));
                    save_checkpoint(&path, params, &checkpoint_metadata(&cfg, done)).map_err(Into::into)
                });
            if let Err(e) = write {
                snapshot_error.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = snapshot_error {
        return Err(e.context("writing periodic checkpoint"));
    }
    write_text(&out.join("loss.csv"), loss_csv(&result.history))?;
    save_checkpoint(
        &out.join(CHECKPOINT_FILE),
        &result.params,
        &checkpoint_metadata(&cfg, cfg.train.epochs),
    )?;
    manifest.finish(out)?;
    println!("wrote {}", out.join(CHECKPOINT_FILE).display());
    Ok(())
}

/// The run configuration stored in a checkpoint, if any.
fn stored_config(meta: &serde_json::Value) -> RunConfig {
    meta.get("config")
        .and_then(|c| serde_json::from_value(c.clone()).ok())
        .unwrap_or_default()
}

pub fn evaluate(data: &Path, checkpoint: &Path, out: &Path, args: &EvalArgs) -> Result<()> {
    let (h, x, y) = load_hypergraph(data)?;
    let (params, meta) = load_checkpoint(checkpoint)?;
    let mut cfg = stored_config(&meta);
    args.apply(&mut cfg);
    create_dir(out)?;
    let embeddings = embed_nodes(&h, &x, &params, cfg.representation)?;
    let report = linear_evaluate(&embeddings, &y, &cfg.split, &cfg.probe)?;
    write_report(out, &report, &cfg)?;
    println!(
        "accuracy {:.2} ± {:.2} over {} runs",
        100.0 * report.mean,
        100.0 * report.std,
        report.runs.len()
    );
    Ok(())
}

pub fn analyze(data: &Path, out: &Path, max_c: u32) -> Result<()> {
    let (h, x) = load_unlabeled(data)?;
    create_dir(out)?;
    let curve = commonality_curve(&h, &x, max_c)?;
    if curve.zero_norm_nodes > 0 {
        log::warn!("{} nodes with all-zero features were excluded", curve.zero_norm_nodes);
    }
    let mut s = String::from("c,mean_cosine,pair_count\n");
    for p in &curve.points {
        writeln!(s, "{},{},{}", p.c, p.mean_cosine, p.pair_count).unwrap();
        println!(
            "c={:<3} mean cosine {:.4} over {} pairs",
            p.c, p.mean_cosine, p.pair_count
        );
    }
    write_text(&out.join("commonality.csv"), s)
}

pub fn ablate(data: &Path, out: &Path, grid: AblationGrid, args: &ConfigArgs) -> Result<()> {
    let base = args.resolve()?;
    let (h, x, y) = load_hypergraph(data)?;
    create_dir(out)?;
    let mut manifest = RunManifest::new("ablate", data, &base)?;
    manifest.write(out)?;
    let mut rows = Vec::new();
    for cell in ablation_cells(grid, &base) {
        log::info!("cell {}", cell.name);
        let dir = out.join(&cell.name);
        create_dir(&dir)?;
        write_json(&dir.join("config.json"), &cell.config)?;
        let r = run_pipeline(&h, &x, &y, &cell.config).with_context(|| format!("ablation cell {}", cell.name))?;
        write_text(&dir.join("loss.csv"), loss_csv(&r.trained.history))?;
        write_report(&dir, &r.report, &cell.config)?;
        println!(
            "{:<16} {:.2} ± {:.2}",
            cell.name,
            100.0 * r.report.mean,
            100.0 * r.report.std
        );
        rows.push((cell.name, r.report.mean, r.report.std));
    }
    rows.sort_by(|a, b| b.1.total_cmp(&a.1));
    let mut s = String::from("rank,cell,mean,std\n");
    for (k, (name, mean, std)) in rows.iter().enumerate() {
        writeln!(s, "{},{},{},{}", k + 1, name, mean, std).unwrap();
    }
    write_text(&out.join("ablation.csv"), s)?;
    manifest.finish(out)
}

fn embeddings_csv(e: &Array2<f64>) -> String {
    let mut s = String::new();
    for row in e.rows() {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn embed(data: &Path, checkpoint: &Path, out: &Path, representation: Option<Representation>) -> Result<()> {
    let (h, x) = load_unlabeled(data)?;
    let (params, meta) = load_checkpoint(checkpoint)?;
    let representation = representation.unwrap_or(stored_config(&meta).representation);
    let e = embed_nodes(&h, &x, &params, representation)?;
    create_dir(out)?;
    write_text(&out.join("embeddings.csv"), embeddings_csv(&e))?;
    println!("wrote {} x {} embeddings", e.nrows(), e.ncols());
    Ok(())
}
