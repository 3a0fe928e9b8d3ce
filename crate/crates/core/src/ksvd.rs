//! Cloud K-SVD: local sparse coding alternating with atom updates whose
//! rank-1 directions are found by the consensus-embedded power method.
//!
//! Atoms are updated in ascending order and in place, so the error matrix for
//! atom `n` already sees the refreshed atoms `j < n` (and their refreshed
//! coefficient rows) while atoms `j > n` still hold the previous iteration's
//! values.
//!
//! Random draws come from [`crate::rng`] streams under `LearnConfig::seed`:
//! the initial dictionary, the shared sign reference, and one power-method
//! start vector per (iteration, atom) pair shared by every node.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::consensus::Network;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::imaging::PatchMatrix;
use crate::metrics;
use crate::power_method::{power_rounds, ResidualGram};
use crate::rng::{stream_rng, Stream};
use crate::sparse_coding::{somp_batch_with, Dictionary, PursuitMode, SparseCodeMatrix};

/// Magnitude above which a code entry counts as used.
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Atom directions agreed on through consensus.
    Cloud,
    /// Every node learns alone (no consensus rounds).
    Local,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "cloud" => Ok(Self::Cloud),
            "local" => Ok(Self::Local),
            other => Err(format!("unknown variant '{other}' (cloud|local)")),
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Cloud => "cloud",
            Variant::Local => "local",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnConfig {
    /// Dictionary-learning iterations.
    pub t_d: usize,
    /// Power rounds per atom update.
    pub t_p: usize,
    /// Consensus rounds per power round (ignored by the local variant).
    pub t_c: usize,
    /// Nonzeros per code column.
    pub sparsity: usize,
    pub atoms: usize,
    pub seed: u64,
    pub variant: Variant,
    pub pursuit: PursuitMode,
    pub exec: Execution,
}

impl Default for LearnConfig {
    fn default() -> Self {
        Self {
            t_d: 10,
            t_p: 3,
            t_c: 5,
            sparsity: 3,
            atoms: 50,
            seed: 0,
            variant: Variant::Cloud,
            pursuit: PursuitMode::PerColumn,
            exec: Execution::default(),
        }
    }
}

impl LearnConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.t_d == 0 {
            return fail("t_d must be >= 1");
        }
        if self.t_p == 0 {
            return fail("t_p must be >= 1");
        }
        if self.sparsity == 0 {
            return fail("sparsity must be >= 1");
        }
        if self.atoms == 0 {
            return fail("atom count must be >= 1");
        }
        Ok(())
    }

    fn consensus_rounds(&self) -> usize {
        match self.variant {
            Variant::Cloud => self.t_c,
            Variant::Local => 0,
        }
    }
}

/// Column indices where a code row is nonzero, ascending.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SupportMask {
    indices: Vec<usize>,
}

impl SupportMask {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Shared vector fixing the sign of every updated atom.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDirection(DVector<f64>);

impl ReferenceDirection {
    pub fn new(v: DVector<f64>) -> Result<Self> {
        if v.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidArgument(
                "reference direction must be nonzero".into(),
            ));
        }
        Ok(Self(v))
    }

    pub fn vector(&self) -> &DVector<f64> {
        &self.0
    }

    /// `sgn(⟨d_ref, q⟩) q`, with zero treated as positive.
    pub fn orient(&self, q: DVector<f64>) -> DVector<f64> {
        if self.0.dot(&q) < 0.0 {
            -q
        } else {
            q
        }
    }
}

/// Initial dictionary (uniform `[0, 1]` entries, unit columns) and sign
/// reference, both determined by `seed`.
pub fn init_shared(m: usize, n: usize, seed: u64) -> Result<(Dictionary, ReferenceDirection)> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidArgument(format!("dictionary shape {m}x{n}")));
    }
    let mut rng = stream_rng(seed, Stream::InitDictionary);
    let mut data = DMatrix::from_fn(m, n, |_, _| rng.random::<f64>());
    // a column of exact zeros has probability ~0; redraw to stay total
    for mut col in data.column_iter_mut() {
        while col.norm() == 0.0 {
            col.iter_mut().for_each(|v| *v = rng.random());
        }
    }
    let dict = Dictionary::normalized(data)?;
    let mut rng = stream_rng(seed, Stream::ReferenceDirection);
    let mut v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    while v.iter().all(|x| *x == 0.0) {
        v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    }
    Ok((dict, ReferenceDirection::new(v)?))
}

/// Power-method start vector for atom `n` in iteration `iteration`.
pub fn power_start(m: usize, seed: u64, iteration: usize, atom: usize) -> DVector<f64> {
    let mut rng = stream_rng(seed, Stream::PowerInit { iteration, atom });
    loop {
        let v = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = v.norm();
        if norm > 0.0 {
            return v / norm;
        }
    }
}

/// Columns of `x` that use atom `n`.
pub fn support_mask(x: &SparseCodeMatrix, n: usize) -> Result<SupportMask> {
    if n >= x.atoms_n() {
        return Err(Error::IndexOutOfRange {
            index: n,
            bound: x.atoms_n(),
        });
    }
    let indices = x
        .data
        .row(n)
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > SUPPORT_TOL)
        .map(|(q, _)| q)
        .collect();
    Ok(SupportMask { indices })
}

/// Residual without atom `n`, restricted to the columns in `mask`:
/// `(Y − DX + d_n x_n)` on those columns.
pub fn restricted_error(
    y: &PatchMatrix,
    d: &Dictionary,
    x: &SparseCodeMatrix,
    n: usize,
    mask: &SupportMask,
) -> Result<DMatrix<f64>> {
    if y.dim_m() != d.dim_m() || d.atoms_n() != x.atoms_n() || y.count_q() != x.count_q() {
        return Err(Error::DimensionMismatch(format!(
            "Y {}x{}, D {}x{}, X {}x{}",
            y.dim_m(),
            y.count_q(),
            d.dim_m(),
            d.atoms_n(),
            x.atoms_n(),
            x.count_q()
        )));
    }
    if n >= d.atoms_n() {
        return Err(Error::IndexOutOfRange {
            index: n,
            bound: d.atoms_n(),
        });
    }
    if let Some(&q) = mask.indices.iter().find(|&&q| q >= y.count_q()) {
        return Err(Error::IndexOutOfRange {
            index: q,
            bound: y.count_q(),
        });
    }
    let mut e = DMatrix::zeros(d.dim_m(), mask.len());
    for (c, &q) in mask.indices.iter().enumerate() {
        let mut col = e.column_mut(c);
        col.copy_from(&y.data.column(q));
        for (j, &coef) in x.data.column(q).iter().enumerate() {
            if j != n && coef != 0.0 {
                col.axpy(-coef, &d.atom(j), 1.0);
            }
        }
    }
    Ok(e)
}

/// New atom and restricted coefficient row for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomUpdate {
    pub atom: DVector<f64>,
    /// Values for the masked columns, in mask order.
    pub row: DVector<f64>,
}

/// Distributed rank-1 update of one atom.
///
/// Each node forms `E_i E_iᵀ`, the network runs the power method, every
/// estimate is oriented by `d_ref`, and each node projects its own error onto
/// the new atom. A node whose estimate degenerates (for instance an empty
/// support with no consensus input) gets `None` and keeps its atom.
pub fn atom_update(
    errors: &[DMatrix<f64>],
    d_ref: &ReferenceDirection,
    q_init: &DVector<f64>,
    t_p: usize,
    t_c: usize,
    net: &mut Network,
) -> Result<Vec<Option<AtomUpdate>>> {
    let m = q_init.len();
    if let Some(e) = errors.iter().find(|e| e.nrows() != m) {
        return Err(Error::DimensionMismatch(format!(
            "error matrix has {} rows, expected {m}",
            e.nrows()
        )));
    }
    if errors.iter().all(|e| e.ncols() == 0) {
        return Ok(vec![None; errors.len()]);
    }
    let grams: Vec<ResidualGram> = errors
        .iter()
        .enumerate()
        .map(|(i, e)| ResidualGram::from_error(i, e))
        .collect();
    let estimates = power_rounds(&grams, q_init, t_p, t_c, net)?;
    Ok(estimates
        .into_iter()
        .zip(errors)
        .map(|(q, e)| {
            q.map(|q| {
                let atom = d_ref.orient(q);
                let row = e.tr_mul(&atom);
                AtomUpdate { atom, row }
            })
        })
        .collect())
}

/// A node's data and learned model.
#[derive(Debug, Clone)]
pub struct NodeModel {
    pub data: PatchMatrix,
    pub dictionary: Dictionary,
    pub codes: SparseCodeMatrix,
}

impl NodeModel {
    pub fn reconstruction(&self) -> PatchMatrix {
        crate::sparse_coding::reconstruct(&self.dictionary, &self.codes)
            .expect("codes and dictionary shapes agree")
    }

    /// `‖Y − DX‖² / (M·Q)`.
    pub fn reconstruction_mse(&self) -> f64 {
        let diff = &self.data.data - self.reconstruction().data;
        diff.norm_squared() / (diff.nrows() * diff.ncols()).max(1) as f64
    }
}

/// Per-iteration summary of a learning run.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    pub iteration: usize,
    /// Mean pairwise MSE between node dictionaries (0 for a single node).
    pub dict_divergence: f64,
    /// Per-node reconstruction MSE right after the sparse-coding stage.
    pub coding_mse: Vec<f64>,
    /// Per-node reconstruction MSE at the end of the iteration.
    pub node_mse: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LearnOutput {
    pub nodes: Vec<NodeModel>,
    /// Entry 0 is the baseline: initial dictionary with its sparse codes.
    pub trace: Vec<IterationTrace>,
}

impl LearnOutput {
    pub fn dictionaries(&self) -> Vec<&Dictionary> {
        self.nodes.iter().map(|n| &n.dictionary).collect()
    }
}

fn divergence(nodes: &[NodeModel]) -> f64 {
    if nodes.len() < 2 {
        return 0.0;
    }
    let dicts: Vec<&Dictionary> = nodes.iter().map(|n| &n.dictionary).collect();
    metrics::dict_divergence(&dicts).expect("node dictionaries share a shape")
}

fn code_all(nodes: &mut [NodeModel], cfg: &LearnConfig) -> Result<Vec<f64>> {
    let coded = cfg.exec.map(nodes.len(), |i| {
        // one level of parallelism: nodes fan out, columns stay sequential
        let inner = if nodes.len() > 1 {
            Execution::Sequential
        } else {
            cfg.exec
        };
        somp_batch_with(
            &nodes[i].dictionary,
            &nodes[i].data,
            cfg.sparsity,
            cfg.pursuit,
            inner,
        )
    });
    for (node, codes) in nodes.iter_mut().zip(coded) {
        node.codes = codes?;
    }
    Ok(nodes.iter().map(NodeModel::reconstruction_mse).collect())
}

fn update_dictionaries(
    nodes: &mut [NodeModel],
    cfg: &LearnConfig,
    d_ref: &ReferenceDirection,
    iteration: usize,
    net: &mut Network,
) -> Result<()> {
    let m = nodes[0].data.dim_m();
    for n in 0..cfg.atoms {
        let prepared: Vec<Result<(SupportMask, DMatrix<f64>)>> = cfg.exec.map(nodes.len(), |i| {
            let node = &nodes[i];
            let mask = support_mask(&node.codes, n)?;
            let e = restricted_error(&node.data, &node.dictionary, &node.codes, n, &mask)?;
            Ok((mask, e))
        });
        let (masks, errors): (Vec<_>, Vec<_>) = prepared
            .into_iter()
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let q_init = power_start(m, cfg.seed, iteration, n);
        let updates = atom_update(
            &errors,
            d_ref,
            &q_init,
            cfg.t_p,
            cfg.consensus_rounds(),
            net,
        )?;
        for ((node, mask), update) in nodes.iter_mut().zip(&masks).zip(updates) {
            let Some(update) = update else { continue };
            node.dictionary.set_atom(n, &update.atom);
            for (&q, &v) in mask.indices().iter().zip(update.row.iter()) {
                node.codes.data[(n, q)] = v;
            }
        }
    }
    Ok(())
}

/// Runs the configured variant, calling `observe(iteration, nodes)` for the
/// baseline (iteration 0) and after every completed iteration.
pub fn run_ksvd_observed<F>(
    parts: &[PatchMatrix],
    cfg: &LearnConfig,
    net: &mut Network,
    mut observe: F,
) -> Result<LearnOutput>
where
    F: FnMut(usize, &[NodeModel]) -> Result<()>,
{
    cfg.validate()?;
    let first = parts
        .first()
        .ok_or_else(|| Error::InvalidArgument("no data partitions".into()))?;
    let m = first.dim_m();
    if let Some(p) = parts.iter().find(|p| p.dim_m() != m) {
        return Err(Error::DimensionMismatch(format!(
            "partition has {} rows, expected {m}",
            p.dim_m()
        )));
    }
    if cfg.variant == Variant::Cloud && net.node_count() != parts.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} partitions on a {}-node network",
            parts.len(),
            net.node_count()
        )));
    }
    if cfg.sparsity > m.min(cfg.atoms) {
        return Err(Error::InvalidArgument(format!(
            "sparsity {} exceeds min(M, N) = {}",
            cfg.sparsity,
            m.min(cfg.atoms)
        )));
    }

    let (init, d_ref) = init_shared(m, cfg.atoms, cfg.seed)?;
    let mut nodes: Vec<NodeModel> = parts
        .iter()
        .map(|p| NodeModel {
            data: p.clone(),
            dictionary: init.clone(),
            codes: SparseCodeMatrix::zeros(cfg.atoms, p.count_q(), cfg.sparsity),
        })
        .collect();

    // a local run never communicates; give it an isolated clock
    let mut local_net;
    let net = match cfg.variant {
        Variant::Cloud => net,
        Variant::Local => {
            local_net = Network::complete(parts.len())?;
            &mut local_net
        }
    };

    let baseline = code_all(&mut nodes, cfg)?;
    let mut trace = vec![IterationTrace {
        iteration: 0,
        dict_divergence: divergence(&nodes),
        node_mse: baseline.clone(),
        coding_mse: baseline,
    }];
    observe(0, &nodes)?;

    for iteration in 1..=cfg.t_d {
        let coding_mse = code_all(&mut nodes, cfg)?;
        update_dictionaries(&mut nodes, cfg, &d_ref, iteration, net)?;
        trace.push(IterationTrace {
            iteration,
            dict_divergence: divergence(&nodes),
            coding_mse,
            node_mse: nodes.iter().map(NodeModel::reconstruction_mse).collect(),
        });
        observe(iteration, &nodes)?;
    }
    Ok(LearnOutput { nodes, trace })
}

/// Cloud K-SVD over `net`, one partition per node.
pub fn run_cloud_ksvd(
    parts: &[PatchMatrix],
    cfg: &LearnConfig,
    net: &mut Network,
) -> Result<LearnOutput> {
    let cfg = LearnConfig {
        variant: Variant::Cloud,
        ..cfg.clone()
    };
    run_ksvd_observed(parts, &cfg, net, |_, _| Ok(()))
}

/// Independent K-SVD at every node (no consensus).
pub fn run_local_ksvd(parts: &[PatchMatrix], cfg: &LearnConfig) -> Result<LearnOutput> {
    let cfg = LearnConfig {
        variant: Variant::Local,
        ..cfg.clone()
    };
    let mut net = Network::complete(parts.len().max(1))?;
    run_ksvd_observed(parts, &cfg, &mut net, |_, _| Ok(()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_problem(seed: u64) -> (PatchMatrix, Dictionary, SparseCodeMatrix) {
        let mut rng = stream_rng(seed, Stream::Synthetic);
        let (m, n, q) = (4, 6, 8);
        let d = Dictionary::normalized(DMatrix::from_fn(m, n, |_, _| rng.sample(StandardNormal)))
            .unwrap();
        let mut x = SparseCodeMatrix::zeros(n, q, 2);
        for c in 0..q {
            x.data[(c % n, c)] = rng.sample(StandardNormal);
            x.data[((c + 2) % n, c)] = rng.sample(StandardNormal);
        }
        x.data[(1, 3)] = 0.0;
        let y = PatchMatrix::new(DMatrix::from_fn(m, q, |_, _| rng.sample(StandardNormal)));
        (y, d, x)
    }

    #[test]
    fn init_is_deterministic_and_normalized() {
        let (a, ra) = init_shared(25, 50, 9).unwrap();
        let (b, rb) = init_shared(25, 50, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!((a.dim_m(), a.atoms_n()), (25, 50));
        for col in a.matrix().column_iter() {
            assert!((col.norm() - 1.0).abs() < 1e-12);
            assert!(col.iter().all(|v| *v >= 0.0));
        }
        assert_ne!(init_shared(25, 50, 10).unwrap().0, a);
        assert!(init_shared(0, 3, 1).is_err());
    }

    #[test]
    fn support_mask_examples() {
        let mut x = SparseCodeMatrix::zeros(3, 4, 1);
        assert!(support_mask(&x, 1).unwrap().is_empty());
        x.data[(1, 1)] = 2.0;
        x.data[(1, 3)] = -1.0;
        assert_eq!(support_mask(&x, 1).unwrap().indices(), &[1, 3]);
        assert!(matches!(
            support_mask(&x, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn restricted_error_matches_naive_sum() {
        for seed in 0..5 {
            let (y, d, x) = small_problem(seed);
            for n in 0..d.atoms_n() {
                let mask = support_mask(&x, n).unwrap();
                let e = restricted_error(&y, &d, &x, n, &mask).unwrap();
                for (c, &q) in mask.indices().iter().enumerate() {
                    for r in 0..d.dim_m() {
                        let mut naive = y.data[(r, q)];
                        for j in (0..d.atoms_n()).filter(|&j| j != n) {
                            naive -= d.matrix()[(r, j)] * x.data[(j, q)];
                        }
                        assert!((e[(r, c)] - naive).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn restricted_error_of_exact_model() {
        let (_, d, x) = small_problem(3);
        let y = PatchMatrix::new(d.matrix() * &x.data);
        let n = 2;
        let mask = support_mask(&x, n).unwrap();
        let e = restricted_error(&y, &d, &x, n, &mask).unwrap();
        for (c, &q) in mask.indices().iter().enumerate() {
            let expect = d.atom(n) * x.data[(n, q)];
            assert!((e.column(c) - expect).amax() < 1e-12);
        }
        let empty = restricted_error(&y, &d, &x, n, &SupportMask::default()).unwrap();
        assert_eq!(empty.shape(), (4, 0));
    }

    #[test]
    fn sign_rule_follows_reference() {
        let r = ReferenceDirection::new(DVector::from_vec(vec![1.0, 0.0])).unwrap();
        let flipped = r.orient(DVector::from_vec(vec![-0.6, 0.8]));
        assert_eq!(flipped, DVector::from_vec(vec![0.6, -0.8]));
        assert!(ReferenceDirection::new(DVector::zeros(2)).is_err());

        // an update whose eigenvector points against d_ref comes back flipped
        let e = DMatrix::from_column_slice(2, 1, &[-3.0, 0.1]);
        let mut net = Network::complete(1).unwrap();
        let q0 = DVector::from_vec(vec![-1.0, 0.0]);
        let up = atom_update(&[e], &r, &q0, 50, 0, &mut net).unwrap();
        let up = up[0].as_ref().unwrap();
        assert!(up.atom.dot(r.vector()) >= 0.0);
        assert!(up.row[0] < 0.0);
    }

    #[test]
    fn all_empty_supports_leave_atom() {
        let r = ReferenceDirection::new(DVector::from_vec(vec![1.0, 1.0])).unwrap();
        let mut net = Network::complete(2).unwrap();
        let q0 = DVector::from_vec(vec![1.0, 0.0]);
        let e = DMatrix::zeros(2, 0);
        let out = atom_update(&[e.clone(), e], &r, &q0, 3, 2, &mut net).unwrap();
        assert!(out.iter().all(Option::is_none));
    }

    #[test]
    fn config_validation() {
        assert!(LearnConfig::default().validate().is_ok());
        for bad in [
            LearnConfig {
                t_d: 0,
                ..Default::default()
            },
            LearnConfig {
                t_p: 0,
                ..Default::default()
            },
            LearnConfig {
                sparsity: 0,
                ..Default::default()
            },
            LearnConfig {
                atoms: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
