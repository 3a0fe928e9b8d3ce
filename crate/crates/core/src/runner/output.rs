//! Artifact files.
//!
//! Dictionaries are plain text: a `rows cols` line followed by one line per
//! row with space-separated values.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::{save_image, ImageGray};
use crate::metrics::MetricRecord;
use crate::sparse_coding::Dictionary;

use super::{GridCell, NodeRecord, RawConfig, RunManifest};

pub const METRICS_HEADER: &str = "iteration,node,mse,l2_error,psnr,ssim,dict_divergence";

/// 17 significant digits; `inf`/`-inf`/`nan` for non-finite values.
pub fn format_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{v:.16e}")
    }
}

pub fn metrics_csv(records: &[MetricRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},all,{},{},{},{},{}",
            r.iteration,
            format_float(r.mse),
            format_float(r.l2_error),
            format_float(r.psnr),
            format_float(r.ssim),
            format_float(r.dict_divergence)
        );
    }
    out
}

fn node_csv(records: &[NodeRecord]) -> String {
    let mut out = String::from("iteration,node,data_mse,clean_mse\n");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.iteration,
            r.node,
            format_float(r.data_mse),
            format_float(r.clean_mse)
        );
    }
    out
}

fn dictionary_text(d: &Dictionary) -> String {
    let m = d.matrix();
    let mut out = format!("{} {}\n", m.nrows(), m.ncols());
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| format_float(*v)).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Reads a matrix written by [`emit_outputs`].
pub fn read_dictionary(path: &Path) -> Result<nalgebra::DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let bad = |what: &str| Error::MalformedHeader(format!("{}: {what}", path.display()));
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("empty file"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad dimensions")))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad("expected 'rows cols'"));
    };
    let values: Vec<f64> = lines
        .flat_map(str::split_whitespace)
        .map(|t| t.parse().map_err(|_| bad("bad value")))
        .collect::<Result<_>>()?;
    if values.len() != rows * cols {
        return Err(bad("value count does not match dimensions"));
    }
    Ok(nalgebra::DMatrix::from_row_slice(rows, cols, &values))
}

fn write(dir: &Path, name: &str, contents: &str, inventory: &mut Vec<String>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    inventory.push(name.to_string());
    Ok(())
}

fn write_image(dir: &Path, name: &str, img: &ImageGray, inventory: &mut Vec<String>) -> Result<()> {
    save_image(img, dir.join(name))?;
    inventory.push(name.to_string());
    Ok(())
}

/// Writes every artifact of `manifest` into `dir` and records the inventory.
pub fn emit_outputs(manifest: &mut RunManifest, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut inventory = Vec::new();
    write(
        dir,
        "metrics.csv",
        &metrics_csv(&manifest.records),
        &mut inventory,
    )?;
    write(
        dir,
        "node_metrics.csv",
        &node_csv(&manifest.node_records),
        &mut inventory,
    )?;

    let mut timing = String::from("iteration,seconds\n");
    for (i, s) in manifest.iteration_seconds.iter().enumerate() {
        let _ = writeln!(timing, "{i},{}", format_float(*s));
    }
    write(dir, "timing.csv", &timing, &mut inventory)?;

    if let Some(noisy) = &manifest.noisy {
        write_image(dir, "noisy.pgm", noisy, &mut inventory)?;
    }
    if let Some(clean) = &manifest.clean {
        write_image(dir, "clean.pgm", clean, &mut inventory)?;
    }
    if let Some(rec) = &manifest.recovered {
        write_image(dir, "recovered.pgm", rec, &mut inventory)?;
        if let Some(clean) = &manifest.clean {
            let diff: Vec<f64> = rec
                .pixels()
                .iter()
                .zip(clean.pixels())
                .map(|(a, b)| (a - b).abs())
                .collect();
            let diff = ImageGray::from_clipped(rec.height(), rec.width(), diff)?;
            write_image(dir, "difference.pgm", &diff, &mut inventory)?;
        }
    }
    for (i, d) in manifest.dictionaries.iter().enumerate() {
        write(
            dir,
            &format!("dictionary_node{i}.txt"),
            &dictionary_text(d),
            &mut inventory,
        )?;
    }

    let mut text = String::new();
    for (k, v) in &manifest.config.resolved {
        let _ = writeln!(text, "{k} = {v}");
    }
    let _ = writeln!(text, "rows = {}", manifest.records.len());
    let _ = writeln!(text, "wall_seconds = {:.3}", manifest.wall_seconds);
    inventory.push("manifest.txt".into());
    let _ = writeln!(text, "outputs = {}", inventory.join(","));
    let path = dir.join("manifest.txt");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    manifest.outputs = inventory;
    Ok(())
}

pub(super) fn write_grid_summary(cells: &[GridCell], raw: &RawConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let keys: Vec<&str> = raw.sweeps().iter().map(|(k, _)| k.as_str()).collect();
    let mut text = String::from("cell");
    for k in &keys {
        let _ = write!(text, ",{k}");
    }
    text.push_str(",mse,psnr,ssim,dict_divergence,train_seconds\n");
    for cell in cells {
        let last = cell
            .manifest
            .records
            .last()
            .expect("at least the baseline row");
        let _ = write!(text, "{}", cell.label);
        for k in &keys {
            let _ = write!(
                text,
                ",{}",
                cell.manifest.config.resolved.get(*k).map_or("", |v| v)
            );
        }
        let train: f64 = cell.manifest.iteration_seconds.iter().sum();
        let _ = writeln!(
            text,
            ",{},{},{},{},{}",
            format_float(last.mse),
            format_float(last.psnr),
            format_float(last.ssim),
            format_float(last.dict_divergence),
            format_float(train)
        );
    }
    let path = out.join("grid.csv");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
