//! Simulated node network: graph families, doubly-stochastic weights and
//! barrier-synchronized averaging-consensus rounds with node failures.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type NodeId = usize;

/// Unreachable nodes per global round index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FailureSchedule {
    rounds: BTreeMap<u64, BTreeSet<NodeId>>,
}

impl FailureSchedule {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_failure(mut self, round: u64, node: NodeId) -> Self {
        self.add(round, node);
        self
    }

    pub fn add(&mut self, round: u64, node: NodeId) {
        self.rounds.entry(round).or_default().insert(node);
    }

    pub fn unreachable_at(&self, round: u64) -> BTreeSet<NodeId> {
        self.rounds.get(&round).cloned().unwrap_or_default()
    }

    pub fn is_empty(&self) -> bool {
        self.rounds.values().all(BTreeSet::is_empty)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &BTreeSet<NodeId>)> {
        self.rounds.iter().map(|(r, s)| (*r, s))
    }

    fn max_node(&self) -> Option<NodeId> {
        self.rounds.values().flat_map(|s| s.iter().copied()).max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyKind {
    Complete,
    Ring,
    Path,
}

impl std::str::FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "complete" => Ok(Self::Complete),
            "ring" => Ok(Self::Ring),
            "path" => Ok(Self::Path),
            other => Err(format!("unknown topology '{other}' (complete|ring|path)")),
        }
    }
}

/// Undirected node graph plus its failure schedule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Topology {
    node_count: usize,
    edges: BTreeSet<(NodeId, NodeId)>,
    failures: FailureSchedule,
}

impl Topology {
    /// Builds a graph from explicit edges; pairs are stored as `(min, max)`.
    pub fn from_edges(
        node_count: usize,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
        failures: FailureSchedule,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::InvalidArgument(
                "topology needs at least one node".into(),
            ));
        }
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(Error::InvalidArgument(format!("self-loop at node {a}")));
            }
            if a.max(b) >= node_count {
                return Err(Error::IndexOutOfRange {
                    index: a.max(b),
                    bound: node_count,
                });
            }
            set.insert((a.min(b), a.max(b)));
        }
        if let Some(n) = failures.max_node().filter(|&n| n >= node_count) {
            return Err(Error::IndexOutOfRange {
                index: n,
                bound: node_count,
            });
        }
        Ok(Self {
            node_count,
            edges: set,
            failures,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.edges
    }

    pub fn failures(&self) -> &FailureSchedule {
        &self.failures
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn degree(&self, node: NodeId) -> usize {
        self.edges
            .iter()
            .filter(|(a, b)| *a == node || *b == node)
            .count()
    }

    pub fn max_degree(&self) -> usize {
        (0..self.node_count)
            .map(|i| self.degree(i))
            .max()
            .unwrap_or(0)
    }

    pub fn is_complete(&self) -> bool {
        self.edges.len() == self.node_count * (self.node_count - 1) / 2
    }

    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.node_count];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                let next = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }
}

/// Instantiates a named graph family on `h` nodes.
pub fn build_topology(kind: TopologyKind, h: usize, failures: FailureSchedule) -> Result<Topology> {
    if h == 0 {
        return Err(Error::InvalidArgument(
            "topology needs at least one node".into(),
        ));
    }
    let edges: Vec<(NodeId, NodeId)> = match kind {
        TopologyKind::Complete => (0..h)
            .flat_map(|i| (i + 1..h).map(move |j| (i, j)))
            .collect(),
        TopologyKind::Path => (1..h).map(|i| (i - 1, i)).collect(),
        TopologyKind::Ring => {
            let mut e: Vec<_> = (1..h).map(|i| (i - 1, i)).collect();
            if h > 2 {
                e.push((0, h - 1));
            }
            e
        }
    };
    Topology::from_edges(h, edges, failures)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightScheme {
    /// `W = I − εL`.
    Laplacian(f64),
    /// `1/H` on complete graphs, Metropolis–Hastings weights otherwise.
    UniformNeighbor,
}

/// Doubly-stochastic consensus weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    data: DMatrix<f64>,
}

impl WeightMatrix {
    /// Validates `data` against `topo`: nonnegative, zero off the edge set,
    /// rows and columns summing to one.
    pub fn new(data: DMatrix<f64>, topo: &Topology) -> Result<Self> {
        let h = topo.node_count();
        if data.shape() != (h, h) {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix {:?} for {h} nodes",
                data.shape()
            )));
        }
        for i in 0..h {
            for j in 0..h {
                let w = data[(i, j)];
                if w < 0.0 || !w.is_finite() {
                    return Err(Error::InvalidArgument(format!("weight ({i},{j}) = {w}")));
                }
                if i != j && w != 0.0 && !topo.has_edge(i, j) {
                    return Err(Error::InvalidArgument(format!(
                        "weight on non-edge ({i},{j})"
                    )));
                }
            }
            let row: f64 = data.row(i).sum();
            let col: f64 = data.column(i).sum();
            if (row - 1.0).abs() > 1e-12 || (col - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "not doubly stochastic at {i}: row {row}, column {col}"
                )));
            }
        }
        Ok(Self { data })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn node_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> f64 {
        self.data[(i, j)]
    }
}

/// Builds consensus weights for `topo` under `scheme`.
pub fn build_weights(topo: &Topology, scheme: WeightScheme) -> Result<WeightMatrix> {
    let h = topo.node_count();
    let mut w = DMatrix::zeros(h, h);
    match scheme {
        WeightScheme::Laplacian(eps) => {
            let dmax = topo.max_degree();
            let stable = eps > 0.0 && (dmax == 0 || eps < 1.0 / dmax as f64);
            if !stable {
                return Err(Error::InvalidArgument(format!(
                    "laplacian step {eps} outside (0, 1/{dmax})"
                )));
            }
            for &(a, b) in topo.edges() {
                w[(a, b)] = eps;
                w[(b, a)] = eps;
            }
            for i in 0..h {
                w[(i, i)] = 1.0 - eps * topo.degree(i) as f64;
            }
        }
        WeightScheme::UniformNeighbor if topo.is_complete() => {
            w.fill(1.0 / h as f64);
        }
        WeightScheme::UniformNeighbor => {
            for &(a, b) in topo.edges() {
                let v = 1.0 / (1 + topo.degree(a).max(topo.degree(b))) as f64;
                w[(a, b)] = v;
                w[(b, a)] = v;
            }
            for i in 0..h {
                let off: f64 = (0..h).filter(|&j| j != i).map(|j| w[(i, j)]).sum();
                w[(i, i)] = 1.0 - off;
            }
        }
    }
    WeightMatrix::new(w, topo)
}

/// The value a node holds during consensus.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub node_id: NodeId,
    pub vector: DVector<f64>,
}

impl NodeState {
    pub fn new(node_id: NodeId, vector: DVector<f64>) -> Self {
        Self { node_id, vector }
    }
}

/// One synchronous averaging round.
///
/// Reachable nodes average over the reachable part of their weight row
/// (renormalized to one); unreachable nodes neither send nor update.
pub fn consensus_round(
    states: &[NodeState],
    w: &WeightMatrix,
    unreachable: &BTreeSet<NodeId>,
) -> Result<Vec<NodeState>> {
    let h = w.node_count();
    if states.len() != h {
        return Err(Error::DimensionMismatch(format!(
            "{} states for {h} nodes",
            states.len()
        )));
    }
    let Some(first) = states.first() else {
        return Ok(Vec::new());
    };
    let m = first.vector.len();
    if let Some(bad) = states.iter().find(|s| s.vector.len() != m) {
        return Err(Error::DimensionMismatch(format!(
            "node {} holds {} values, expected {m}",
            bad.node_id,
            bad.vector.len()
        )));
    }
    let reachable: Vec<bool> = (0..h).map(|i| !unreachable.contains(&i)).collect();
    let next = (0..h)
        .map(|i| {
            if !reachable[i] {
                return states[i].clone();
            }
            let norm: f64 = (0..h).filter(|&j| reachable[j]).map(|j| w.get(i, j)).sum();
            if norm <= 0.0 {
                return states[i].clone();
            }
            let mut acc = DVector::zeros(m);
            for j in (0..h).filter(|&j| reachable[j]) {
                let wij = w.get(i, j);
                if wij != 0.0 {
                    acc.axpy(wij / norm, &states[j].vector, 1.0);
                }
            }
            NodeState::new(states[i].node_id, acc)
        })
        .collect();
    Ok(next)
}

/// Runs `rounds` consecutive rounds; round `r` consults `schedule` at `r`.
pub fn run_consensus(
    states: &[NodeState],
    w: &WeightMatrix,
    rounds: usize,
    schedule: &FailureSchedule,
) -> Result<Vec<NodeState>> {
    let mut current = states.to_vec();
    for r in 0..rounds {
        current = consensus_round(&current, w, &schedule.unreachable_at(r as u64))?;
    }
    Ok(current)
}

/// `max_i ‖z_i − z̄‖`.
pub fn disagreement(states: &[NodeState]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let mean = mean_state(states);
    states
        .iter()
        .map(|s| (&s.vector - &mean).norm())
        .fold(0.0, f64::max)
}

pub fn mean_state(states: &[NodeState]) -> DVector<f64> {
    let mut sum = DVector::zeros(states[0].vector.len());
    for s in states {
        sum += &s.vector;
    }
    sum / states.len() as f64
}

/// A topology with its weights and a global round clock, so that failure
/// schedules address rounds across every consensus phase of a run.
#[derive(Debug, Clone)]
pub struct Network {
    topology: Topology,
    weights: WeightMatrix,
    clock: u64,
}

impl Network {
    pub fn new(topology: Topology, weights: WeightMatrix) -> Result<Self> {
        if weights.node_count() != topology.node_count() {
            return Err(Error::DimensionMismatch(format!(
                "{}-node weights for a {}-node topology",
                weights.node_count(),
                topology.node_count()
            )));
        }
        Ok(Self {
            topology,
            weights,
            clock: 0,
        })
    }

    /// Complete graph with uniform weights and no failures.
    pub fn complete(h: usize) -> Result<Self> {
        let topo = build_topology(TopologyKind::Complete, h, FailureSchedule::new())?;
        let w = build_weights(&topo, WeightScheme::UniformNeighbor)?;
        Self::new(topo, w)
    }

    pub fn node_count(&self) -> usize {
        self.topology.node_count()
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    /// Rounds executed so far.
    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn run(&mut self, states: &[NodeState], rounds: usize) -> Result<Vec<NodeState>> {
        let mut current = states.to_vec();
        for _ in 0..rounds {
            let down = self.topology.failures().unreachable_at(self.clock);
            current = consensus_round(&current, &self.weights, &down)?;
            self.clock += 1;
        }
        Ok(current)
    }
}
