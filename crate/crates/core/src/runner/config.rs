//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # denoising run
//! image = tests/data/face.pgm
//! patch_side = 5
//! atoms = 50
//! sparsity = 7
//! noise_variance = 0.001
//! nodes = 4
//! td = 10
//! tp = 3
//! tc = 5
//! ```
//!
//! Blank lines and `#` comments are ignored. Keys prefixed `sweep.` hold a
//! comma-separated value list for grid runs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::consensus::{FailureSchedule, TopologyKind, WeightScheme};
use crate::exec::Execution;
use crate::imaging::NoiseSpec;
use crate::ksvd::{LearnConfig, Variant};
use crate::sparse_coding::PursuitMode;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("invalid value '{value}' for '{key}': {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key '{0}'")]
    Missing(String),
    #[error("inconsistent configuration: {0}")]
    Inconsistent(String),
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
}

/// Keys accepted in config files and overrides, in canonical order.
pub const KEYS: &[&str] = &[
    "source",
    "image",
    "synthetic_m",
    "synthetic_atoms",
    "synthetic_q",
    "synthetic_k",
    "alpha",
    "patch_side",
    "m",
    "noise_mean",
    "noise_variance",
    "noise_seed",
    "variant",
    "pursuit",
    "atoms",
    "sparsity",
    "td",
    "tp",
    "tc",
    "nodes",
    "topology",
    "weights",
    "failures",
    "seed",
    "out",
    "threads",
];

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Image(PathBuf),
    /// `Y = D_true X_true` with random unit-norm `D_true` and `k`-sparse codes.
    Synthetic {
        m: usize,
        atoms: usize,
        q: usize,
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: DataSource,
    pub alpha: usize,
    pub patch_side: usize,
    pub noise: NoiseSpec,
    pub learn: LearnConfig,
    pub nodes: usize,
    pub topology: TopologyKind,
    pub weights: WeightScheme,
    pub failures: FailureSchedule,
    pub out: PathBuf,
    pub seed: u64,
    /// Echo of every resolved key, for manifests.
    pub resolved: BTreeMap<String, String>,
}

/// Raw key/value pairs before validation, plus sweep lists.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
    sweeps: Vec<(String, Vec<String>)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: idx + 1,
                message: format!("expected key = value, got '{line}'"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line: idx + 1,
                    message: "empty key".into(),
                });
            }
            if let Some(swept) = key.strip_prefix("sweep.") {
                raw.add_sweep(swept, value)?;
            } else {
                raw.set(key, value)?;
            }
        }
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(key.to_string()));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, spec: &str) -> Result<(), ConfigError> {
        let (k, v) = spec.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: 0,
            message: format!("override '{spec}' is not key=value"),
        })?;
        let k = k.trim();
        match k.strip_prefix("sweep.") {
            Some(swept) => self.add_sweep(swept, v.trim()),
            None => self.set(k, v.trim()),
        }
    }

    pub fn add_sweep(&mut self, key: &str, list: &str) -> Result<(), ConfigError> {
        if !KEYS.contains(&key) {
            return Err(ConfigError::UnknownKey(format!("sweep.{key}")));
        }
        let values: Vec<String> = list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
        if values.is_empty() {
            return Err(ConfigError::InvalidValue {
                key: format!("sweep.{key}"),
                value: list.to_string(),
                reason: "empty value list".into(),
            });
        }
        self.sweeps.retain(|(k, _)| k != key);
        self.sweeps.push((key.to_string(), values));
        Ok(())
    }

    /// Layers `other` on top: its values and sweeps win.
    pub fn merge(&mut self, other: RawConfig) {
        self.values.extend(other.values);
        for (k, v) in other.sweeps {
            self.sweeps.retain(|(existing, _)| *existing != k);
            self.sweeps.push((k, v));
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn sweeps(&self) -> &[(String, Vec<String>)] {
        &self.sweeps
    }

    /// Cartesian product of the sweep lists, in declaration order, as
    /// concrete configs with their cell labels.
    pub fn grid_cells(&self) -> Result<Vec<(String, RawConfig)>, ConfigError> {
        let mut cells = vec![(
            String::new(),
            RawConfig {
                sweeps: Vec::new(),
                ..self.clone()
            },
        )];
        for (key, values) in &self.sweeps {
            let mut next = Vec::with_capacity(cells.len() * values.len());
            for (label, cell) in &cells {
                for v in values {
                    let mut c = cell.clone();
                    c.set(key, v)?;
                    let label = if label.is_empty() {
                        format!("{key}={v}")
                    } else {
                        format!("{label}_{key}={v}")
                    };
                    next.push((label, c));
                }
            }
            cells = next;
        }
        Ok(cells)
    }

    fn parsed<T: FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    fn required<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let v = self
            .get(key)
            .ok_or_else(|| ConfigError::Missing(key.to_string()))?;
        v.parse().map_err(|e: T::Err| ConfigError::InvalidValue {
            key: key.to_string(),
            value: v.to_string(),
            reason: e.to_string(),
        })
    }

    /// Validates and resolves into an [`ExperimentConfig`].
    pub fn resolve(&self) -> Result<ExperimentConfig, ConfigError> {
        let invalid = |key: &str, reason: &str| ConfigError::InvalidValue {
            key: key.to_string(),
            value: self.get(key).unwrap_or("").to_string(),
            reason: reason.to_string(),
        };
        let source_kind = match self.get("source") {
            Some(s) => s.to_string(),
            None if self.get("image").is_some() => "image".into(),
            None => "synthetic".into(),
        };
        let source = match source_kind.as_str() {
            "image" => DataSource::Image(self.required::<PathBuf>("image")?),
            "synthetic" => DataSource::Synthetic {
                m: self.parsed("synthetic_m", 20)?,
                atoms: self.parsed("synthetic_atoms", 50)?,
                q: self.parsed("synthetic_q", 2000)?,
                k: self.parsed("synthetic_k", 3)?,
            },
            _ => return Err(invalid("source", "expected image|synthetic")),
        };
        if let DataSource::Synthetic { m, atoms, q, k } = source {
            if m == 0 || atoms == 0 || q == 0 {
                return Err(ConfigError::Inconsistent(
                    "synthetic_m, synthetic_atoms and synthetic_q must be positive".into(),
                ));
            }
            if k == 0 || k > m.min(atoms) {
                return Err(invalid(
                    "synthetic_k",
                    "must be in 1..=min(synthetic_m, synthetic_atoms)",
                ));
            }
        }

        let alpha: usize = self.parsed("alpha", 1)?;
        if alpha == 0 {
            return Err(invalid("alpha", "decimation factor must be >= 1"));
        }
        let patch_side: usize = self.parsed("patch_side", 5)?;
        if patch_side == 0 {
            return Err(invalid("patch_side", "must be >= 1"));
        }
        if self.get("m").is_some() {
            let m: usize = self.required("m")?;
            let implied = match source {
                DataSource::Image(_) => patch_side * patch_side,
                DataSource::Synthetic { m: sm, .. } => sm,
            };
            if m != implied {
                return Err(ConfigError::Inconsistent(format!(
                    "m = {m} but the data source implies M = {implied}"
                )));
            }
        }

        let seed: u64 = self.parsed("seed", 0)?;
        let noise_seed: u64 = self.parsed("noise_seed", seed)?;
        let noise = NoiseSpec::new(
            self.parsed("noise_mean", 0.0)?,
            self.parsed("noise_variance", 0.0)?,
            noise_seed,
        )
        .map_err(|e| invalid("noise_variance", &e.to_string()))?;

        let exec = match self.get("threads") {
            None | Some("auto") => Execution::default(),
            Some("1") | Some("sequential") => Execution::Sequential,
            Some(_) => return Err(invalid("threads", "expected auto|sequential|1")),
        };
        let learn = LearnConfig {
            t_d: self.parsed("td", 10)?,
            t_p: self.parsed("tp", 3)?,
            t_c: self.parsed("tc", 5)?,
            sparsity: self.parsed("sparsity", 3)?,
            atoms: self.parsed("atoms", 50)?,
            seed,
            variant: self.parsed("variant", Variant::Cloud)?,
            pursuit: match self.get("pursuit").unwrap_or("per-column") {
                "per-column" => PursuitMode::PerColumn,
                "shared-support" => PursuitMode::SharedSupport,
                _ => return Err(invalid("pursuit", "expected per-column|shared-support")),
            },
            exec,
        };
        for (key, ok) in [
            ("td", learn.t_d >= 1),
            ("tp", learn.t_p >= 1),
            ("sparsity", learn.sparsity >= 1),
            ("atoms", learn.atoms >= 1),
        ] {
            if !ok {
                return Err(invalid(key, "must be >= 1"));
            }
        }
        let m = match source {
            DataSource::Image(_) => patch_side * patch_side,
            DataSource::Synthetic { m, .. } => m,
        };
        if learn.sparsity > m.min(learn.atoms) {
            return Err(ConfigError::Inconsistent(format!(
                "sparsity {} exceeds min(M = {m}, atoms = {})",
                learn.sparsity, learn.atoms
            )));
        }

        let nodes: usize = self.parsed("nodes", 4)?;
        if nodes == 0 {
            return Err(invalid("nodes", "must be >= 1"));
        }
        let topology: TopologyKind = self.parsed("topology", TopologyKind::Complete)?;
        let weights = parse_weights(self.get("weights").unwrap_or("uniform"))
            .map_err(|reason| invalid("weights", &reason))?;
        let failures = parse_failures(self.get("failures").unwrap_or(""))
            .map_err(|reason| invalid("failures", &reason))?;
        if let Some((round, node)) = failures
            .iter()
            .flat_map(|(r, s)| s.iter().map(move |n| (r, *n)))
            .find(|(_, n)| *n >= nodes)
        {
            return Err(ConfigError::Inconsistent(format!(
                "failure at round {round} names node {node} but only {nodes} nodes exist"
            )));
        }
        let out: PathBuf = self.parsed("out", PathBuf::from("out"))?;

        let mut resolved = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            resolved.insert(k.to_string(), v);
        };
        match &source {
            DataSource::Image(p) => {
                put("source", "image".into());
                put("image", p.display().to_string());
                put("alpha", alpha.to_string());
                put("patch_side", patch_side.to_string());
            }
            DataSource::Synthetic { m, atoms, q, k } => {
                put("source", "synthetic".into());
                put("synthetic_m", m.to_string());
                put("synthetic_atoms", atoms.to_string());
                put("synthetic_q", q.to_string());
                put("synthetic_k", k.to_string());
            }
        }
        put("m", m.to_string());
        put("noise_mean", noise.mean.to_string());
        put("noise_variance", noise.variance.to_string());
        put("noise_seed", noise.seed.to_string());
        put("variant", learn.variant.to_string());
        put(
            "pursuit",
            self.get("pursuit").unwrap_or("per-column").to_string(),
        );
        put("atoms", learn.atoms.to_string());
        put("sparsity", learn.sparsity.to_string());
        put("td", learn.t_d.to_string());
        put("tp", learn.t_p.to_string());
        put("tc", learn.t_c.to_string());
        put("nodes", nodes.to_string());
        put(
            "topology",
            self.get("topology").unwrap_or("complete").to_string(),
        );
        put(
            "weights",
            self.get("weights").unwrap_or("uniform").to_string(),
        );
        put("failures", self.get("failures").unwrap_or("").to_string());
        put("seed", seed.to_string());

        Ok(ExperimentConfig {
            source,
            alpha,
            patch_side,
            noise,
            learn,
            nodes,
            topology,
            weights,
            failures,
            out,
            seed,
            resolved,
        })
    }
}

/// `uniform` or `laplacian:<eps>`.
pub fn parse_weights(s: &str) -> Result<WeightScheme, String> {
    match s.split_once(':') {
        None if s == "uniform" => Ok(WeightScheme::UniformNeighbor),
        Some(("laplacian", eps)) => eps
            .trim()
            .parse::<f64>()
            .map(WeightScheme::Laplacian)
            .map_err(|e| format!("bad laplacian step: {e}")),
        _ => Err("expected uniform or laplacian:<eps>".into()),
    }
}

/// `round:node,node;round:node` (empty for no failures).
pub fn parse_failures(s: &str) -> Result<FailureSchedule, String> {
    let mut schedule = FailureSchedule::new();
    for entry in s.split(';').map(str::trim).filter(|e| !e.is_empty()) {
        let (round, nodes) = entry
            .split_once(':')
            .ok_or_else(|| format!("'{entry}' is not round:nodes"))?;
        let round: u64 = round
            .trim()
            .parse()
            .map_err(|e| format!("round '{round}': {e}"))?;
        for node in nodes.split(',').map(str::trim).filter(|n| !n.is_empty()) {
            let node: usize = node.parse().map_err(|e| format!("node '{node}': {e}"))?;
            schedule.add(round, node);
        }
    }
    Ok(schedule)
}
