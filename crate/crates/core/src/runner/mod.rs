//! Experiment orchestration: data preparation, simulated training, metrics
//! and artifact emission.

pub mod config;
mod output;
pub mod synthetic;

use std::path::Path;
use std::time::Instant;

use thiserror::Error;

use crate::consensus::{build_topology, build_weights, Network};
use crate::error::Error;
use crate::imaging::{
    add_awgn, assemble_image, concat_columns, downscale, extract_patches, load_image, noise_field,
    split_columns, ImageGray, PatchMatrix,
};
use crate::ksvd::{run_ksvd_observed, IterationTrace, NodeModel};
use crate::metrics::{self, MetricRecord};
use crate::sparse_coding::Dictionary;

pub use config::{ConfigError, DataSource, ExperimentConfig, RawConfig};
pub use output::{emit_outputs, format_float, metrics_csv, read_dictionary, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Runtime(#[from] Error),
}

impl RunnerError {
    /// Process exit code: 1 for configuration errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunnerError::Config(_) => 1,
            RunnerError::Runtime(_) => 2,
        }
    }
}

/// Per-node quality at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NodeRecord {
    pub iteration: usize,
    pub node: usize,
    /// MSE of `D_i X_i` against the node's (noisy) training columns.
    pub data_mse: f64,
    /// MSE against the clean columns.
    pub clean_mse: f64,
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    /// One row per iteration, `0..=t_d`.
    pub records: Vec<MetricRecord>,
    pub node_records: Vec<NodeRecord>,
    pub trace: Vec<IterationTrace>,
    /// Training time of each iteration (excluding metric evaluation).
    pub iteration_seconds: Vec<f64>,
    pub wall_seconds: f64,
    pub clean: Option<ImageGray>,
    pub noisy: Option<ImageGray>,
    pub recovered: Option<ImageGray>,
    pub dictionaries: Vec<Dictionary>,
    /// Files written by [`emit_outputs`], relative to the output directory.
    pub outputs: Vec<String>,
}

struct Prepared {
    clean_image: Option<ImageGray>,
    noisy_image: Option<ImageGray>,
    clean: PatchMatrix,
    noisy: PatchMatrix,
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared, Error> {
    match &cfg.source {
        DataSource::Image(path) => {
            let clean = downscale(&load_image(path)?, cfg.alpha)?;
            let noisy = add_awgn(&clean, &cfg.noise);
            Ok(Prepared {
                clean: extract_patches(&clean, cfg.patch_side)?,
                noisy: extract_patches(&noisy, cfg.patch_side)?,
                clean_image: Some(clean),
                noisy_image: Some(noisy),
            })
        }
        DataSource::Synthetic { m, atoms, q, k } => {
            let data = synthetic::generate(*m, *atoms, *q, *k, cfg.seed)?;
            let field = noise_field(m * q, &cfg.noise);
            let mut noisy = data.signals.clone();
            noisy.data.iter_mut().zip(field).for_each(|(v, n)| *v += n);
            Ok(Prepared {
                clean: data.signals,
                noisy,
                clean_image: None,
                noisy_image: None,
            })
        }
    }
}

/// Runs one experiment end to end (nothing is written to disk).
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunManifest, RunnerError> {
    let started = Instant::now();
    let prepared = prepare(cfg)?;
    let parts = split_columns(&prepared.noisy, cfg.nodes)?;
    let clean_parts = split_columns(&prepared.clean, cfg.nodes)?;
    let topology = build_topology(cfg.topology, cfg.nodes, cfg.failures.clone())?;
    let weights = build_weights(&topology, cfg.weights)?;
    let mut net = Network::new(topology, weights)?;

    // synthetic signals are unbounded; use their own peak for PSNR
    let peak = match prepared.clean_image {
        Some(_) => 1.0,
        None => prepared.clean.data.amax(),
    };
    let mut records = Vec::new();
    let mut node_records = Vec::new();
    let mut recovered = None;
    let mut iteration_seconds = Vec::new();
    let mut lap = Instant::now();

    let output = run_ksvd_observed(&parts, &cfg.learn, &mut net, |iteration, nodes| {
        iteration_seconds.push(lap.elapsed().as_secs_f64());
        let recons: Vec<PatchMatrix> = nodes.iter().map(NodeModel::reconstruction).collect();
        for (node, (rec, clean)) in recons.iter().zip(&clean_parts).enumerate() {
            node_records.push(NodeRecord {
                iteration,
                node,
                data_mse: nodes[node].reconstruction_mse(),
                clean_mse: metrics::mse(rec.data.as_slice(), clean.data.as_slice())?,
            });
        }
        let merged = concat_columns(&recons)?;
        let divergence = if nodes.len() > 1 {
            metrics::dict_divergence(&nodes.iter().map(|n| &n.dictionary).collect::<Vec<_>>())?
        } else {
            0.0
        };
        let record = match &prepared.clean_image {
            Some(clean) => {
                let image = assemble_image(&merged)?;
                let r = image_record(iteration, clean, &image, divergence)?;
                recovered = Some(image);
                r
            }
            None => {
                let (a, b) = (merged.data.as_slice(), prepared.clean.data.as_slice());
                let mse = metrics::mse(a, b)?;
                MetricRecord {
                    iteration,
                    mse,
                    l2_error: metrics::l2_error(a, b)?,
                    psnr: metrics::psnr_from_mse(mse, peak),
                    ssim: f64::NAN,
                    dict_divergence: divergence,
                }
            }
        };
        records.push(record);
        lap = Instant::now();
        Ok(())
    })?;

    Ok(RunManifest {
        config: cfg.clone(),
        records,
        node_records,
        dictionaries: output.nodes.iter().map(|n| n.dictionary.clone()).collect(),
        trace: output.trace,
        iteration_seconds,
        wall_seconds: started.elapsed().as_secs_f64(),
        clean: prepared.clean_image,
        noisy: prepared.noisy_image,
        recovered,
        outputs: Vec::new(),
    })
}

fn image_record(
    iteration: usize,
    clean: &ImageGray,
    image: &ImageGray,
    dict_divergence: f64,
) -> Result<MetricRecord, Error> {
    let mse = metrics::mse(image.pixels(), clean.pixels())?;
    Ok(MetricRecord {
        iteration,
        mse,
        l2_error: metrics::l2_error(image.pixels(), clean.pixels())?,
        psnr: metrics::psnr_from_mse(mse, 1.0),
        ssim: metrics::ssim(image, clean)?,
        dict_divergence,
    })
}

/// Runs and writes one experiment into `cfg.out`.
pub fn run_and_emit(cfg: &ExperimentConfig) -> Result<RunManifest, RunnerError> {
    let mut manifest = run_experiment(cfg)?;
    emit_outputs(&mut manifest, &cfg.out)?;
    Ok(manifest)
}

/// One finished cell of a grid sweep.
#[derive(Debug, Clone)]
pub struct GridCell {
    pub label: String,
    pub manifest: RunManifest,
}

/// Runs every cell of the cartesian sweep sequentially, writing each into
/// `<out>/<label>/`, plus a `grid.csv` summary of final-iteration metrics.
pub fn run_grid(raw: &RawConfig, out: &Path) -> Result<Vec<GridCell>, RunnerError> {
    let cells = raw.grid_cells()?;
    let resolved: Vec<(String, ExperimentConfig)> = cells
        .into_iter()
        .map(|(label, cell)| {
            let mut cfg = cell.resolve()?;
            let label = if label.is_empty() {
                "single".to_string()
            } else {
                label
            };
            cfg.out = out.join(&label);
            Ok((label, cfg))
        })
        .collect::<Result<_, ConfigError>>()?;
    let mut done = Vec::with_capacity(resolved.len());
    for (label, cfg) in resolved {
        let manifest = run_and_emit(&cfg)?;
        done.push(GridCell { label, manifest });
    }
    output::write_grid_summary(&done, raw, out)?;
    Ok(done)
}

/// Defaults for the synthetic consensus study.
pub const CONSENSUS_DEMO_DEFAULTS: &[(&str, &str)] = &[
    ("source", "synthetic"),
    ("synthetic_m", "20"),
    ("synthetic_atoms", "50"),
    ("synthetic_q", "2000"),
    ("synthetic_k", "3"),
    ("atoms", "50"),
    ("sparsity", "3"),
    ("nodes", "4"),
    ("td", "50"),
    ("topology", "ring"),
    ("weights", "uniform"),
];

/// Synthetic study over `t_p ∈ {2..5}` × `t_c ∈ {1,2,3}` unless the caller
/// already set sweeps.
pub fn consensus_demo_config(mut user: RawConfig) -> Result<RawConfig, ConfigError> {
    let mut raw = RawConfig::default();
    for (k, v) in CONSENSUS_DEMO_DEFAULTS {
        raw.set(k, v)?;
    }
    if user.sweeps().is_empty() {
        user.add_sweep("tp", "2,3,4,5")?;
        user.add_sweep("tc", "1,2,3")?;
    }
    raw.merge(user);
    Ok(raw)
}
