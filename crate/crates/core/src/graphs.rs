//! Trajectory collections from small weighted graphs.
//!
//! Two generators turn a graph into a problem instance whose ground
//! set is the edge set: simple source-to-target paths in a digraph,
//! and spanning trees of a connected undirected graph. Both enumerate
//! exhaustively (the point of these instances is to be checkable, not
//! large), so the graphs are capped at 12 nodes (paths) and 8 nodes
//! (trees).
//!
//! The collection axioms translate into graph language: every edge
//! must lie on at least one path (or tree), and no edge may lie on all
//! of them. An edge forced into every trajectory (a bridge, in the
//! spanning-tree case) makes the intersection nonempty, and such
//! graphs are rejected with the offending edges named.
//!
//! The JSON wire format is
//!
//! ```json
//! {
//!   "nodes": ["a", "b"],
//!   "edges": [{"id": "e1", "from": "a", "to": "b", "weight": 1.5}],
//!   "source": "a",
//!   "target": "b"
//! }
//! ```
//!
//! (`source`/`target` are only needed for path generation).

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::AOperation;
use crate::problem::{Problem, ProblemError};

pub const MAX_PATH_NODES: usize = 12;
pub const MAX_TREE_NODES: usize = 8;
const MAX_TRAJECTORIES: usize = 50_000;
const MAX_TREE_SUBSETS: u64 = 4_000_000;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub id: String,
    pub from: String,
    pub to: String,
    pub weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphSpec {
    pub nodes: Vec<String>,
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed graph JSON: {0}")]
    Parse(String),
    #[error("duplicate node id `{0}`")]
    DuplicateNode(String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdge(String),
    #[error("edge `{edge}` references unknown node `{node}`")]
    UnknownNode { edge: String, node: String },
    #[error("graph names unknown {role} node `{node}`")]
    UnknownEndpoint { role: &'static str, node: String },
    #[error("path generation needs a {0} node in the graph file")]
    MissingEndpoint(&'static str),
    #[error("source and target must differ")]
    SameEndpoints,
    #[error("{what} supports at most {limit}, found {found}")]
    TooLarge { what: &'static str, limit: usize, found: usize },
    #[error("graph yields {found} {kind}; a trajectory collection needs at least 2")]
    TooFewTrajectories { kind: &'static str, found: usize },
    #[error("more than {0} trajectories; graph too dense to enumerate")]
    TooManyTrajectories(usize),
    #[error("edges {{{}}} lie on no {kind}, so the collection cannot cover the edge set", ids.join(", "))]
    UnusedEdges { kind: &'static str, ids: Vec<String> },
    #[error("edges {{{}}} lie on every {kind}, so the collection's intersection is nonempty", ids.join(", "))]
    CommonEdges { kind: &'static str, ids: Vec<String> },
    #[error("graph is disconnected; it has no spanning tree")]
    Disconnected,
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

impl GraphSpec {
    pub fn from_json(text: &str) -> Result<Self, GraphError> {
        serde_json::from_str(text).map_err(|e| GraphError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, GraphError> {
        serde_json::to_string_pretty(self).map_err(|e| GraphError::Parse(e.to_string()))
    }

    fn node_index(&self) -> Result<HashMap<&str, usize>, GraphError> {
        let mut idx = HashMap::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if idx.insert(n.as_str(), i).is_some() {
                return Err(GraphError::DuplicateNode(n.clone()));
            }
        }
        Ok(idx)
    }

    /// Edge endpoints as node indices, in edge order; also rejects
    /// duplicate edge ids and dangling endpoints.
    fn edge_endpoints(&self, idx: &HashMap<&str, usize>) -> Result<Vec<(usize, usize)>, GraphError> {
        if self.edges.len() > 64 {
            return Err(GraphError::TooLarge { what: "edge set", limit: 64, found: self.edges.len() });
        }
        let mut seen = std::collections::HashSet::new();
        let mut ends = Vec::with_capacity(self.edges.len());
        for e in &self.edges {
            if !seen.insert(e.id.as_str()) {
                return Err(GraphError::DuplicateEdge(e.id.clone()));
            }
            let &a = idx
                .get(e.from.as_str())
                .ok_or_else(|| GraphError::UnknownNode { edge: e.id.clone(), node: e.from.clone() })?;
            let &b = idx
                .get(e.to.as_str())
                .ok_or_else(|| GraphError::UnknownNode { edge: e.id.clone(), node: e.to.clone() })?;
            ends.push((a, b));
        }
        Ok(ends)
    }

    /// Packages trajectory edge masks into a validated problem whose
    /// ground set is the edge set, after checking the cover and
    /// empty-intersection axioms in graph terms for better messages.
    fn problem_from_masks(
        &self,
        masks: &[u64],
        kind: &'static str,
        op: AOperation,
    ) -> Result<Problem, GraphError> {
        if masks.len() < 2 {
            return Err(GraphError::TooFewTrajectories { kind, found: masks.len() });
        }
        let full: u64 = if self.edges.len() == 64 { u64::MAX } else { (1u64 << self.edges.len()) - 1 };
        let union = masks.iter().fold(0u64, |a, &m| a | m);
        let inter = masks.iter().fold(full, |a, &m| a & m);
        if union != full {
            let ids = self.edge_ids(full & !union);
            return Err(GraphError::UnusedEdges { kind, ids });
        }
        if inter != 0 {
            let ids = self.edge_ids(inter);
            return Err(GraphError::CommonEdges { kind, ids });
        }
        let ground: Vec<String> = self.edges.iter().map(|e| e.id.clone()).collect();
        let costs = self.edges.iter().map(|e| (e.id.clone(), e.weight)).collect();
        let trajectories: Vec<Vec<String>> = masks.iter().map(|&m| self.edge_ids(m)).collect();
        Ok(Problem::new(op, ground, &costs, &trajectories)?)
    }

    fn edge_ids(&self, mask: u64) -> Vec<String> {
        (0..self.edges.len()).filter(|i| mask >> i & 1 == 1).map(|i| self.edges[i].id.clone()).collect()
    }
}

/// Enumerates all simple source-to-target paths of a digraph and
/// returns the problem whose trajectories are their edge sets. The
/// graph must produce at least two paths, every edge must lie on one,
/// and no edge may lie on all of them.
pub fn generate_paths(g: &GraphSpec, op: AOperation) -> Result<Problem, GraphError> {
    if g.nodes.len() > MAX_PATH_NODES {
        return Err(GraphError::TooLarge { what: "path generation", limit: MAX_PATH_NODES, found: g.nodes.len() });
    }
    let idx = g.node_index()?;
    let ends = g.edge_endpoints(&idx)?;
    let source = g.source.as_deref().ok_or(GraphError::MissingEndpoint("source"))?;
    let target = g.target.as_deref().ok_or(GraphError::MissingEndpoint("target"))?;
    let &s = idx.get(source).ok_or_else(|| GraphError::UnknownEndpoint { role: "source", node: source.into() })?;
    let &t = idx.get(target).ok_or_else(|| GraphError::UnknownEndpoint { role: "target", node: target.into() })?;
    if s == t {
        return Err(GraphError::SameEndpoints);
    }

    let mut out: Vec<Vec<(usize, usize)>> = vec![Vec::new(); g.nodes.len()];
    for (k, &(a, b)) in ends.iter().enumerate() {
        out[a].push((k, b));
    }

    // depth-first enumeration of simple paths (node-repetition-free)
    let mut masks = Vec::new();
    let mut visited = 1u32 << s;
    let mut edge_mask = 0u64;
    dfs_paths(&out, s, t, &mut visited, &mut edge_mask, &mut masks)?;
    g.problem_from_masks(&masks, "source-to-target path", op)
}

fn dfs_paths(
    out: &[Vec<(usize, usize)>],
    at: usize,
    t: usize,
    visited: &mut u32,
    edge_mask: &mut u64,
    masks: &mut Vec<u64>,
) -> Result<(), GraphError> {
    if at == t {
        if masks.len() >= MAX_TRAJECTORIES {
            return Err(GraphError::TooManyTrajectories(MAX_TRAJECTORIES));
        }
        masks.push(*edge_mask);
        return Ok(());
    }
    for &(k, next) in &out[at] {
        if *visited >> next & 1 == 1 {
            continue;
        }
        *visited |= 1 << next;
        *edge_mask |= 1 << k;
        dfs_paths(out, next, t, visited, edge_mask, masks)?;
        *edge_mask &= !(1 << k);
        *visited &= !(1 << next);
    }
    Ok(())
}

/// Enumerates all spanning trees of a connected undirected graph and
/// returns the problem whose trajectories are their edge sets. A
/// bridge lies in every spanning tree and a self-loop in none, so
/// graphs with either are rejected (the axioms cannot hold).
pub fn generate_spanning_trees(g: &GraphSpec, op: AOperation) -> Result<Problem, GraphError> {
    if g.nodes.len() > MAX_TREE_NODES {
        return Err(GraphError::TooLarge { what: "spanning-tree generation", limit: MAX_TREE_NODES, found: g.nodes.len() });
    }
    let idx = g.node_index()?;
    let ends = g.edge_endpoints(&idx)?;
    let n = g.nodes.len();
    let m = ends.len();

    // connectivity over the whole edge set first
    if n > 0 {
        let mut dsu = Dsu::new(n);
        for &(a, b) in &ends {
            dsu.union(a, b);
        }
        let root = dsu.find(0);
        if (1..n).any(|v| dsu.find(v) != root) {
            return Err(GraphError::Disconnected);
        }
    }
    if n < 2 {
        return Err(GraphError::TooFewTrajectories { kind: "spanning tree", found: if n == 1 { 1 } else { 0 } });
    }

    // every spanning tree has exactly n-1 edges: filter the k-subsets
    let k = n - 1;
    if binomial(m as u64, k as u64) > MAX_TREE_SUBSETS {
        return Err(GraphError::TooLarge { what: "spanning-tree enumeration (edge subsets)", limit: MAX_TREE_SUBSETS as usize, found: m });
    }
    let mut masks = Vec::new();
    if m >= k {
        let mut subset: u64 = (1u64 << k) - 1;
        let limit: u64 = if m == 64 { u64::MAX } else { 1u64 << m };
        while subset < limit {
            if spans(&ends, n, subset) {
                masks.push(subset);
            }
            // Gosper's hack: next k-subset in increasing order
            let c = subset & subset.wrapping_neg();
            let r = match subset.checked_add(c) {
                Some(r) if r < limit => r,
                _ => break,
            };
            subset = (((r ^ subset) >> 2) / c) | r;
        }
    }
    g.problem_from_masks(&masks, "spanning tree", op)
}

/// True when the edge subset is acyclic and touches every node;
/// with exactly n−1 edges that is precisely a spanning tree.
fn spans(ends: &[(usize, usize)], n: usize, subset: u64) -> bool {
    let mut dsu = Dsu::new(n);
    let mut merged = 0;
    for (k, &(a, b)) in ends.iter().enumerate() {
        if subset >> k & 1 == 1 {
            if !dsu.union(a, b) {
                return false;
            }
            merged += 1;
        }
    }
    merged == n - 1
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
        if acc > MAX_TREE_SUBSETS {
            return acc;
        }
    }
    acc
}

struct Dsu {
    parent: Vec<usize>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu { parent: (0..n).collect() }
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Returns false when both ends already share a component.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            false
        } else {
            self.parent[ra] = rb;
            true
        }
    }
}
