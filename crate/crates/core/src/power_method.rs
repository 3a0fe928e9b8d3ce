//! Distributed dominant-eigenvector estimation.
//!
//! Every node holds a local PSD matrix `M̂_i`; the network wants the top
//! eigenvector of `Σ M̂_i` without exchanging the matrices. Each power round
//! a node multiplies its current estimate by its own matrix, the products are
//! averaged by consensus, and the averaged vector is normalized. The average
//! is `(1/H) Σ M̂_i q̂`, which differs from the sum only by a scale that
//! normalization removes.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::consensus::{Network, NodeId, NodeState};
use crate::error::{Error, Result};

/// Symmetric PSD matrix `E Eᵀ` held by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualGram {
    pub node_id: NodeId,
    pub data: DMatrix<f64>,
}

impl ResidualGram {
    /// Validates symmetry within 1e-9.
    pub fn new(node_id: NodeId, data: DMatrix<f64>) -> Result<Self> {
        check_symmetric(&data)?;
        Ok(Self { node_id, data })
    }

    /// `E Eᵀ` for an M×c error matrix (c may be zero).
    pub fn from_error(node_id: NodeId, e: &DMatrix<f64>) -> Self {
        let mut data = e * e.transpose();
        // the product is symmetric up to rounding; make it exactly so
        let m = data.nrows();
        for i in 0..m {
            for j in i + 1..m {
                let v = 0.5 * (data[(i, j)] + data[(j, i)]);
                data[(i, j)] = v;
                data[(j, i)] = v;
            }
        }
        Self { node_id, data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }
}

/// A node's unit-norm eigenvector estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EigEstimate {
    pub node_id: NodeId,
    pub vector: DVector<f64>,
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "matrix {:?} is not square",
            m.shape()
        )));
    }
    let asym = (m - m.transpose()).amax();
    if asym > 1e-9 || !asym.is_finite() {
        return Err(Error::NotSymmetric(asym));
    }
    Ok(())
}

/// Runs the consensus-embedded power method and keeps going when a node's
/// averaged product vanishes: such a node reports `None` and keeps its last
/// estimate for later rounds.
pub(crate) fn power_rounds(
    grams: &[ResidualGram],
    q_init: &DVector<f64>,
    power_rounds: usize,
    consensus_rounds: usize,
    net: &mut Network,
) -> Result<Vec<Option<DVector<f64>>>> {
    let h = net.node_count();
    if grams.len() != h {
        return Err(Error::DimensionMismatch(format!(
            "{} grams for {h} nodes",
            grams.len()
        )));
    }
    let m = q_init.len();
    if let Some(g) = grams.iter().find(|g| g.dim() != m) {
        return Err(Error::DimensionMismatch(format!(
            "gram at node {} is {}x{0}, start vector has length {m}",
            g.node_id,
            g.dim()
        )));
    }
    if power_rounds == 0 {
        return Err(Error::InvalidArgument(
            "at least one power round is required".into(),
        ));
    }
    let init_norm = q_init.norm();
    if init_norm == 0.0 || !init_norm.is_finite() {
        return Err(Error::InvalidArgument(
            "start vector must be nonzero and finite".into(),
        ));
    }
    let start = q_init / init_norm;
    let mut estimates: Vec<DVector<f64>> = vec![start; h];
    let mut degenerate = vec![false; h];

    for _ in 0..power_rounds {
        let products: Vec<NodeState> = grams
            .iter()
            .zip(&estimates)
            .enumerate()
            .map(|(i, (g, q))| NodeState::new(i, &g.data * q))
            .collect();
        let averaged = net.run(&products, consensus_rounds)?;
        for (i, state) in averaged.into_iter().enumerate() {
            let norm = state.vector.norm();
            if norm > f64::MIN_POSITIVE && norm.is_finite() {
                estimates[i] = state.vector / norm;
                degenerate[i] = false;
            } else {
                degenerate[i] = true;
            }
        }
    }
    Ok(estimates
        .into_iter()
        .zip(degenerate)
        .map(|(q, bad)| (!bad).then_some(q))
        .collect())
}

/// Per-node dominant eigenvector estimates of `Σ M̂_i` after `power_rounds`
/// power iterations with `consensus_rounds` averaging rounds each.
pub fn distributed_dominant_eigvec(
    grams: &[ResidualGram],
    q_init: &DVector<f64>,
    power_rounds_count: usize,
    consensus_rounds: usize,
    net: &mut Network,
) -> Result<Vec<EigEstimate>> {
    power_rounds(grams, q_init, power_rounds_count, consensus_rounds, net)?
        .into_iter()
        .enumerate()
        .map(|(i, q)| {
            q.map(|vector| EigEstimate { node_id: i, vector })
                .ok_or_else(|| {
                    Error::DegenerateSpectrum(format!(
                    "node {i}: averaged product vector vanished (zero Gram sum along the estimate)"
                ))
                })
        })
        .collect()
}

/// Exact dominant eigenpair from a dense symmetric eigendecomposition.
#[derive(Debug, Clone)]
pub struct OracleEig {
    /// Unit vector with its largest-magnitude entry positive.
    pub vector: DVector<f64>,
    /// Eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// True when the top two eigenvalues coincide (within 1e-9 relative).
    pub degenerate: bool,
}

impl OracleEig {
    /// `λ₁/λ₂`, or infinity when `λ₂ ≤ 0` or there is one eigenvalue.
    pub fn gap_ratio(&self) -> f64 {
        match self.eigenvalues.as_slice() {
            [l1, l2, ..] if *l2 > 0.0 => l1 / l2,
            _ => f64::INFINITY,
        }
    }
}

/// Dominant eigenvector of a symmetric matrix via full eigendecomposition.
pub fn reference_eigvec_oracle(msum: &DMatrix<f64>) -> Result<OracleEig> {
    check_symmetric(msum)?;
    let eig = SymmetricEigen::new(msum.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vector = eig.eigenvectors.column(order[0]).into_owned();
    vector /= vector.norm();
    let pivot = vector.iamax();
    if vector[pivot] < 0.0 {
        vector.neg_mut();
    }
    let degenerate = eigenvalues.len() > 1
        && (eigenvalues[0] - eigenvalues[1]).abs() <= 1e-9 * eigenvalues[0].abs().max(1.0);
    Ok(OracleEig {
        vector,
        eigenvalues,
        degenerate,
    })
}

/// `qᵀ M q` for unit `q`.
pub fn rayleigh_quotient(m: &DMatrix<f64>, q: &DVector<f64>) -> f64 {
    q.dot(&(m * q))
}
