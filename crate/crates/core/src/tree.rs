//! Normalized Gaussian tree models.
//!
//! A tree on nodes `1..=N` with edge weights `|w| < 1` defines a zero-mean
//! Gaussian with unit variances whose covariance between two nodes is the
//! product of the weights along the path joining them. The precision matrix
//! and determinant of such a model have closed forms that only involve the
//! edges, which this module exposes next to the dense construction.
//!
//! Node ids are 1-based everywhere in the public API; row `k` of every
//! matrix produced here belongs to node `k + 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::CovarianceMatrix;
use crate::error::{Error, Result};

/// Weighted undirected edge between two 1-based node ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(usize, usize, f64)", into = "(usize, usize, f64)")]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

impl Edge {
    pub fn new(a: usize, b: usize, weight: f64) -> Self {
        Self { a, b, weight }
    }

    pub fn joins(&self, x: usize, y: usize) -> bool {
        (self.a == x && self.b == y) || (self.a == y && self.b == x)
    }

    /// The endpoint opposite to `x`, if `x` is an endpoint.
    pub fn other(&self, x: usize) -> Option<usize> {
        if self.a == x {
            Some(self.b)
        } else if self.b == x {
            Some(self.a)
        } else {
            None
        }
    }

    /// Off-diagonal precision entry `-w / (1 - w^2)`.
    pub fn precision_offdiag(&self) -> f64 {
        -self.weight / (1.0 - self.weight * self.weight)
    }

    /// Diagonal precision increment `w^2 / (1 - w^2)`.
    pub fn precision_diag(&self) -> f64 {
        let w2 = self.weight * self.weight;
        w2 / (1.0 - w2)
    }
}

impl From<(usize, usize, f64)> for Edge {
    fn from((a, b, weight): (usize, usize, f64)) -> Self {
        Self { a, b, weight }
    }
}

impl From<Edge> for (usize, usize, f64) {
    fn from(e: Edge) -> Self {
        (e.a, e.b, e.weight)
    }
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    nodes: usize,
    edges: Vec<Edge>,
}

/// A validated spanning tree with weights in (-1, 1).
///
/// Serializes as `{"nodes": N, "edges": [[i, j, w], ...]}`; deserialization
/// runs [`validate_tree`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTree", into = "RawTree")]
pub struct TreeSpec {
    nodes: usize,
    edges: Vec<Edge>,
}

impl TryFrom<RawTree> for TreeSpec {
    type Error = Error;

    fn try_from(raw: RawTree) -> Result<Self> {
        validate_tree(raw.nodes, raw.edges)
    }
}

impl From<TreeSpec> for RawTree {
    fn from(t: TreeSpec) -> Self {
        RawTree { nodes: t.nodes, edges: t.edges }
    }
}

/// Checks that `edges` form a spanning tree on `1..=nodes` with every
/// weight strictly inside (-1, 1).
pub fn validate_tree(nodes: usize, edges: Vec<Edge>) -> Result<TreeSpec> {
    if nodes == 0 {
        return Err(Error::InvalidArgument("a tree needs at least one node".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for e in &edges {
        for node in [e.a, e.b] {
            if node == 0 || node > nodes {
                return Err(Error::InvalidNode { node, nodes });
            }
        }
        if e.a == e.b {
            return Err(Error::Cycle(e.a, e.b));
        }
        if !(e.weight.abs() < 1.0) {
            return Err(Error::WeightOutOfRange { a: e.a, b: e.b, weight: e.weight });
        }
        if !seen.insert((e.a.min(e.b), e.a.max(e.b))) {
            return Err(Error::DuplicateEdge(e.a, e.b));
        }
    }

    let mut sets = DisjointSets::new(nodes);
    for e in &edges {
        if !sets.union(e.a - 1, e.b - 1) {
            return Err(Error::Cycle(e.a, e.b));
        }
    }
    if sets.components > 1 {
        return Err(Error::Disconnected { nodes, components: sets.components });
    }

    for e in edges.iter().filter(|e| e.weight == 0.0) {
        log::warn!("edge ({}, {}) has zero weight; the model factorizes across it", e.a, e.b);
    }
    Ok(TreeSpec { nodes, edges })
}

struct DisjointSets {
    parent: Vec<usize>,
    components: usize,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), components: n }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        self.components -= 1;
        true
    }
}

impl TreeSpec {
    pub fn new(nodes: usize, edges: Vec<Edge>) -> Result<Self> {
        validate_tree(nodes, edges)
    }

    /// Convenience constructor from `(i, j, w)` triples.
    pub fn from_triples(nodes: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        validate_tree(nodes, edges.iter().map(|&t| Edge::from(t)).collect())
    }

    /// A chain `1 - 2 - ... - N` with the given weights.
    pub fn chain(weights: &[f64]) -> Result<Self> {
        let edges = weights.iter().enumerate().map(|(k, &w)| Edge::new(k + 1, k + 2, w)).collect();
        validate_tree(weights.len() + 1, edges)
    }

    pub fn node_count(&self) -> usize {
        self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edges whose weight is exactly zero.
    pub fn zero_weight_edges(&self) -> Vec<Edge> {
        self.edges.iter().copied().filter(|e| e.weight == 0.0).collect()
    }

    /// Position and weight of the edge joining `a` and `b`.
    pub fn find_edge(&self, a: usize, b: usize) -> Option<(usize, f64)> {
        self.edges.iter().position(|e| e.joins(a, b)).map(|k| (k, self.edges[k].weight))
    }

    pub fn contains_node(&self, node: usize) -> bool {
        (1..=self.nodes).contains(&node)
    }

    /// Adjacency lists over 0-based indices.
    pub(crate) fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes];
        for e in &self.edges {
            adj[e.a - 1].push((e.b - 1, e.weight));
            adj[e.b - 1].push((e.a - 1, e.weight));
        }
        adj
    }

    /// Nodes (1-based) reachable from `start` without crossing the edge
    /// `start`-`blocked`.
    pub fn side_of(&self, start: usize, blocked: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.nodes];
        seen[start - 1] = true;
        let mut stack = vec![start - 1];
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if seen[v] || (u == start - 1 && v == blocked - 1) {
                    continue;
                }
                seen[v] = true;
                stack.push(v);
            }
        }
        (0..self.nodes).filter(|&k| seen[k]).map(|k| k + 1).collect()
    }

    /// Nodes (1-based) on the unique path from `from` to `to`, inclusive.
    pub fn path(&self, from: usize, to: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let mut parent = vec![usize::MAX; self.nodes];
        parent[from - 1] = from - 1;
        let mut stack = vec![from - 1];
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if parent[v] == usize::MAX {
                    parent[v] = u;
                    stack.push(v);
                }
            }
        }
        let mut path = vec![to];
        let mut cur = to - 1;
        while cur != from - 1 {
            cur = parent[cur];
            path.push(cur + 1);
        }
        path.reverse();
        path
    }

    /// Sorted multiset of edge weights.
    pub fn weight_multiset(&self) -> Vec<f64> {
        let mut w: Vec<f64> = self.edges.iter().map(|e| e.weight).collect();
        w.sort_by(f64::total_cmp);
        w
    }

    pub fn covariance(&self) -> Result<CovarianceMatrix> {
        build_covariance(self)
    }

    pub fn precision(&self) -> Result<CovarianceMatrix> {
        tree_precision(self)
    }

    pub fn determinant(&self) -> f64 {
        tree_determinant(self)
    }
}

/// Dense covariance: unit diagonal, path products off the diagonal.
///
/// One traversal per source node gives O(N^2) work overall; each entry is
/// the literal product taken from the lower-numbered endpoint, and the
/// mirror entry is copied so the result is exactly symmetric.
pub fn build_covariance(spec: &TreeSpec) -> Result<CovarianceMatrix> {
    let n = spec.nodes;
    let adj = spec.adjacency();
    let mut sigma = DMatrix::<f64>::identity(n, n);
    let mut stack = Vec::with_capacity(n);
    for source in 0..n {
        stack.clear();
        stack.push((source, usize::MAX, 1.0));
        while let Some((u, parent, product)) = stack.pop() {
            if u > source {
                sigma[(source, u)] = product;
                sigma[(u, source)] = product;
            }
            for &(v, w) in &adj[u] {
                if v != parent {
                    stack.push((v, u, product * w));
                }
            }
        }
    }
    CovarianceMatrix::new(sigma)
}

/// Closed-form inverse of [`build_covariance`]: tridiagonal-like sparsity
/// following the edges.
pub fn tree_precision(spec: &TreeSpec) -> Result<CovarianceMatrix> {
    let n = spec.nodes;
    let mut u = DMatrix::<f64>::identity(n, n);
    for e in &spec.edges {
        let (i, j) = (e.a - 1, e.b - 1);
        let off = e.precision_offdiag();
        let diag = e.precision_diag();
        u[(i, j)] = off;
        u[(j, i)] = off;
        u[(i, i)] += diag;
        u[(j, j)] += diag;
    }
    CovarianceMatrix::new(u)
}

/// Product of `1 - w^2` over the edges.
pub fn tree_determinant(spec: &TreeSpec) -> f64 {
    spec.edges.iter().map(|e| 1.0 - e.weight * e.weight).product()
}

/// Sum of `ln(1 - w^2)` over the edges.
pub fn tree_log_determinant(spec: &TreeSpec) -> f64 {
    spec.edges.iter().map(|e| (1.0 - e.weight * e.weight).ln()).sum()
}
