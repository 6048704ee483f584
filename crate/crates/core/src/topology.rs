//! Random sensor placements and communication graphs.

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::NodePosition;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("invalid topology config: {0}")]
    InvalidConfig(String),
    #[error("no placement satisfied {constraint} after {attempts} attempts")]
    RetriesExhausted {
        constraint: &'static str,
        attempts: usize,
    },
    #[error("edge ({0}, {1}) references a node outside 0..{2}")]
    NodeOutOfRange(usize, usize, usize),
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("graph is not connected")]
    Disconnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Edge between every pair within `radius`.
    Geometric { radius: f64 },
    /// Each node links to its `k` nearest nodes; edges are symmetrized.
    KNearest { k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub n_nodes: usize,
    /// Side length of the square deployment region.
    pub region: f64,
    pub kind: GraphKind,
    pub max_retries: usize,
    /// Regenerate until every node has at least this many neighbors.
    pub min_degree: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_nodes: 10,
            region: 3.0,
            kind: GraphKind::Geometric { radius: 1.5 },
            max_retries: 1000,
            min_degree: 0,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        let bad = |msg: String| Err(TopologyError::InvalidConfig(msg));
        if self.n_nodes < 2 {
            return bad(format!("n_nodes must be >= 2, got {}", self.n_nodes));
        }
        if !(self.region > 0.0 && self.region.is_finite()) {
            return bad(format!("region must be > 0, got {}", self.region));
        }
        if self.max_retries == 0 {
            return bad("max_retries must be >= 1".into());
        }
        if self.min_degree >= self.n_nodes {
            return bad(format!(
                "min_degree {} unreachable with {} nodes",
                self.min_degree, self.n_nodes
            ));
        }
        match self.kind {
            GraphKind::Geometric { radius } if !(radius > 0.0 && radius.is_finite()) => {
                bad(format!("radius must be > 0, got {radius}"))
            }
            GraphKind::KNearest { k } if k == 0 || k >= self.n_nodes => bad(format!(
                "k must satisfy 1 <= k < n_nodes ({}), got {k}",
                self.n_nodes
            )),
            _ => Ok(()),
        }
    }
}

/// Node placement plus symmetric adjacency.
///
/// Neighbor lists are sorted ascending and duplicate-free, with no
/// self-loops. Serializes as `{ "positions": [[x, y], ..], "edges": [[i, j], ..] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TopologyDocument", into = "TopologyDocument")]
pub struct Topology {
    positions: Vec<NodePosition>,
    neighbors: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TopologyDocument {
    positions: Vec<[f64; 2]>,
    edges: Vec<[usize; 2]>,
}

impl TryFrom<TopologyDocument> for Topology {
    type Error = TopologyError;

    fn try_from(doc: TopologyDocument) -> Result<Self, Self::Error> {
        let positions = doc
            .positions
            .iter()
            .map(|&[x, y]| NodePosition::new(x, y))
            .collect();
        let edges: Vec<(usize, usize)> = doc.edges.iter().map(|&[i, j]| (i, j)).collect();
        let top = Topology::from_edges(positions, &edges)?;
        if !top.is_connected() {
            return Err(TopologyError::Disconnected);
        }
        Ok(top)
    }
}

impl From<Topology> for TopologyDocument {
    fn from(top: Topology) -> Self {
        TopologyDocument {
            positions: top.positions.iter().map(|p| [p.x, p.y]).collect(),
            edges: top.edges().into_iter().map(|(i, j)| [i, j]).collect(),
        }
    }
}

impl Topology {
    /// Builds a topology from an undirected edge list. Duplicate edges and
    /// either orientation are accepted; connectivity is not required here.
    pub fn from_edges(
        positions: Vec<NodePosition>,
        edges: &[(usize, usize)],
    ) -> Result<Self, TopologyError> {
        let n = positions.len();
        let mut neighbors = vec![Vec::new(); n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(TopologyError::NodeOutOfRange(i, j, n));
            }
            if i == j {
                return Err(TopologyError::SelfLoop(i));
            }
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            positions,
            neighbors,
        })
    }

    /// Complete graph over the given positions.
    pub fn complete(positions: Vec<NodePosition>) -> Self {
        let n = positions.len();
        let neighbors = (0..n)
            .map(|i| (0..n).filter(|&j| j != i).collect())
            .collect();
        Self {
            positions,
            neighbors,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.positions.len()
    }

    pub fn positions(&self) -> &[NodePosition] {
        &self.positions
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.neighbors.iter().map(Vec::len).collect()
    }

    pub fn n_edges(&self) -> usize {
        self.neighbors.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Undirected edges as `(i, j)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(i, list)| list.iter().filter(move |&&j| j > i).map(move |&j| (i, j)))
            .collect()
    }

    /// BFS reachability from node 0.
    pub fn is_connected(&self) -> bool {
        let n = self.n_nodes();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        let mut reached = 1;
        while let Some(i) = queue.pop_front() {
            for &j in &self.neighbors[i] {
                if !seen[j] {
                    seen[j] = true;
                    reached += 1;
                    queue.push_back(j);
                }
            }
        }
        reached == n
    }

    /// Checks that every neighborhood is large enough for trimming `p` values
    /// from each end (`degree > 2p`).
    pub fn validate_for_trim(&self, p: usize) -> TrimReport {
        let violations = self
            .neighbors
            .iter()
            .enumerate()
            .filter(|(_, list)| list.len() <= 2 * p)
            .map(|(node, list)| (node, list.len()))
            .collect();
        TrimReport { p, violations }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrimReport {
    pub p: usize,
    /// `(node, degree)` for every node with `degree <= 2p`.
    pub violations: Vec<(usize, usize)>,
}

impl TrimReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn violating_nodes(&self) -> Vec<usize> {
        self.violations.iter().map(|&(node, _)| node).collect()
    }
}

impl std::fmt::Display for TrimReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            return write!(f, "every degree exceeds 2p = {}", 2 * self.p);
        }
        write!(f, "degree <= 2p = {} at", 2 * self.p)?;
        for (node, degree) in &self.violations {
            write!(f, " node {node} (degree {degree})")?;
        }
        Ok(())
    }
}

/// Uniform point in the `[0, region]²` square.
pub fn sample_position<R: Rng + ?Sized>(region: f64, rng: &mut R) -> NodePosition {
    NodePosition::new(rng.random::<f64>() * region, rng.random::<f64>() * region)
}

fn build_edges(positions: &[NodePosition], kind: GraphKind) -> Vec<(usize, usize)> {
    let n = positions.len();
    match kind {
        GraphKind::Geometric { radius } => {
            let r2 = radius * radius;
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    if positions[i].dist2(&positions[j]) <= r2 {
                        edges.push((i, j));
                    }
                }
            }
            edges
        }
        GraphKind::KNearest { k } => {
            let mut edges = Vec::with_capacity(n * k);
            let mut order: Vec<usize> = Vec::with_capacity(n);
            for i in 0..n {
                order.clear();
                order.extend((0..n).filter(|&j| j != i));
                // ties resolved by node index
                order.sort_by(|&a, &b| {
                    positions[i]
                        .dist2(&positions[a])
                        .total_cmp(&positions[i].dist2(&positions[b]))
                        .then(a.cmp(&b))
                });
                edges.extend(order.iter().take(k).map(|&j| (i, j)));
            }
            edges
        }
    }
}

/// Draws placements uniformly on the region until the graph is connected and
/// meets `min_degree`.
pub fn generate<R: Rng + ?Sized>(
    config: &TopologyConfig,
    rng: &mut R,
) -> Result<Topology, TopologyError> {
    config.validate()?;
    let mut connected_once = false;
    for _ in 0..config.max_retries {
        let positions: Vec<NodePosition> = (0..config.n_nodes)
            .map(|_| sample_position(config.region, rng))
            .collect();
        let edges = build_edges(&positions, config.kind);
        let top = Topology::from_edges(positions, &edges)?;
        if !top.is_connected() {
            continue;
        }
        connected_once = true;
        if top.degrees().iter().all(|&d| d >= config.min_degree) {
            return Ok(top);
        }
    }
    Err(TopologyError::RetriesExhausted {
        constraint: if connected_once {
            "minimum degree"
        } else {
            "connectivity"
        },
        attempts: config.max_retries,
    })
}
