//! Topology operations on Gaussian trees: adding a shared leaf, dividing a
//! shared edge, and grafting subtrees, plus grafting chains and the
//! checks built on them.

use std::collections::{BTreeSet, HashSet};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{check_same_dim, CovarianceMatrix};
use crate::divergence::{chernoff_information_with, sigma_lambda, LambdaSolver};
use crate::error::{Error, Result};
use crate::tree::{validate_tree, Edge, TreeSpec};

const WEIGHT_MATCH_TOL: f64 = 1e-12;
const DET_MATCH_TOL: f64 = 1e-9;

/// Default slack for nested-pair inequalities.
pub const ORDERING_SLACK: f64 = 1e-9;

fn check_weight(a: usize, b: usize, weight: f64) -> Result<()> {
    if weight.abs() < 1.0 {
        Ok(())
    } else {
        Err(Error::WeightOutOfRange { a, b, weight })
    }
}

fn check_same_nodes(first: &TreeSpec, second: &TreeSpec) -> Result<usize> {
    if first.node_count() != second.node_count() {
        return Err(Error::DimensionMismatch(first.node_count(), second.node_count()));
    }
    Ok(first.node_count())
}

/// Attaches the same new leaf `N + 1` to `attach_node` with weight `weight`
/// in both trees.
pub fn adding_operation(
    pair: (&TreeSpec, &TreeSpec),
    attach_node: usize,
    weight: f64,
) -> Result<(TreeSpec, TreeSpec)> {
    let n = check_same_nodes(pair.0, pair.1)?;
    if !(1..=n).contains(&attach_node) {
        return Err(Error::InvalidNode { node: attach_node, nodes: n });
    }
    check_weight(attach_node, n + 1, weight)?;
    let grow = |t: &TreeSpec| {
        let mut edges = t.edges().to_vec();
        edges.push(Edge::new(attach_node, n + 1, weight));
        validate_tree(n + 1, edges)
    };
    Ok((grow(pair.0)?, grow(pair.1)?))
}

/// Replaces the shared edge `(p, q)` of weight `w1 * w2` by the path
/// `p - (N + 1) - q` with weights `w1` and `w2` in both trees.
pub fn division_operation(
    pair: (&TreeSpec, &TreeSpec),
    edge: (usize, usize),
    w1: f64,
    w2: f64,
) -> Result<(TreeSpec, TreeSpec)> {
    let n = check_same_nodes(pair.0, pair.1)?;
    let (p, q) = edge;
    let (k0, shared) = pair.0.find_edge(p, q).ok_or(Error::EdgeNotShared(p, q))?;
    let (k1, other) = pair.1.find_edge(p, q).ok_or(Error::EdgeNotShared(p, q))?;
    if (shared - other).abs() > WEIGHT_MATCH_TOL {
        return Err(Error::EdgeNotShared(p, q));
    }
    check_weight(p, n + 1, w1)?;
    check_weight(n + 1, q, w2)?;
    if (w1 * w2 - shared).abs() > WEIGHT_MATCH_TOL {
        return Err(Error::WeightFactorMismatch { product: w1 * w2, shared });
    }
    let split = |t: &TreeSpec, k: usize| {
        let mut edges = t.edges().to_vec();
        edges.remove(k);
        edges.push(Edge::new(p, n + 1, w1));
        edges.push(Edge::new(n + 1, q, w2));
        validate_tree(n + 1, edges)
    };
    Ok((split(pair.0, k0)?, split(pair.1, k1)?))
}

/// Cut edge `(subtree_root, old_neighbor)` and reconnect the detached part
/// through a new edge `(subtree_root, new_neighbor)` with the same weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraftOp {
    pub subtree_root: usize,
    pub old_neighbor: usize,
    pub new_neighbor: usize,
    pub weight: f64,
}

impl GraftOp {
    pub fn new(subtree_root: usize, old_neighbor: usize, new_neighbor: usize, weight: f64) -> Self {
        Self { subtree_root, old_neighbor, new_neighbor, weight }
    }

    /// The op that undoes this one.
    pub fn inverse(&self) -> Self {
        Self { old_neighbor: self.new_neighbor, new_neighbor: self.old_neighbor, ..*self }
    }

    /// Nodes whose incident edges change.
    pub fn touched(&self) -> [usize; 3] {
        [self.subtree_root, self.old_neighbor, self.new_neighbor]
    }
}

pub fn apply_graft(tree: &TreeSpec, op: &GraftOp) -> Result<TreeSpec> {
    let n = tree.node_count();
    for node in op.touched() {
        if !tree.contains_node(node) {
            return Err(Error::InvalidNode { node, nodes: n });
        }
    }
    let (i, p, q) = (op.subtree_root, op.old_neighbor, op.new_neighbor);
    let k = match tree.find_edge(i, p) {
        Some((k, w)) if (w - op.weight).abs() <= WEIGHT_MATCH_TOL => k,
        _ => return Err(Error::EdgeNotFound(i, p)),
    };
    if tree.side_of(i, p).contains(&q) {
        return Err(Error::WouldCreateCycle { root: i, target: q });
    }
    let mut edges = tree.edges().to_vec();
    edges[k] = Edge::new(i, q, edges[k].weight);
    validate_tree(n, edges)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ChainFile {
    base: TreeSpec,
    #[serde(default)]
    ops: Vec<GraftOp>,
}

/// `T_1 = base`, `T_{k+1} = apply_graft(T_k, ops[k])`. Each op's node ids
/// refer to the tree it is applied to.
///
/// Serializes as `{"base": <tree>, "ops": [<op>, ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ChainFile", into = "ChainFile")]
pub struct GraftChain {
    ops: Vec<GraftOp>,
    trees: Vec<TreeSpec>,
}

impl TryFrom<ChainFile> for GraftChain {
    type Error = Error;

    fn try_from(file: ChainFile) -> Result<Self> {
        GraftChain::new(file.base, file.ops)
    }
}

impl From<GraftChain> for ChainFile {
    fn from(c: GraftChain) -> Self {
        let base = c.trees.into_iter().next().expect("chain has a base tree");
        ChainFile { base, ops: c.ops }
    }
}

impl GraftChain {
    pub fn new(base: TreeSpec, ops: Vec<GraftOp>) -> Result<Self> {
        let mut trees = Vec::with_capacity(ops.len() + 1);
        trees.push(base);
        for op in &ops {
            let next = apply_graft(trees.last().expect("non-empty"), op)?;
            trees.push(next);
        }
        Ok(Self { ops, trees })
    }

    pub fn base(&self) -> &TreeSpec {
        &self.trees[0]
    }

    pub fn ops(&self) -> &[GraftOp] {
        &self.ops
    }

    /// `T_1, ..., T_n` (indexed from 0 here).
    pub fn trees(&self) -> &[TreeSpec] {
        &self.trees
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Outcome of [`is_independent_chain`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceReport {
    pub independent: bool,
    /// Ops (0-based indices) that interfere, as ordered pairs `(k, l)`
    /// with `k < l`.
    pub conflicts: Vec<(usize, usize)>,
    /// Ops that could not be isolated in some pair of chain trees.
    pub entangled_ops: Vec<usize>,
}

/// Conservative independence test for the ops of a grafting chain.
///
/// For every pair of chain trees `(T_a, T_b)` and every op `k` between
/// them, drop op `k`'s two edges from the union of both trees' edge sets.
/// Op `k` is isolated when either the component holding its subtree root,
/// or the component holding both of its anchors, contains no node touched
/// by another op between `a` and `b`. In either case that op's term in
/// `tr(S_½ (S_a⁻¹ - S_b⁻¹))` vanishes, so a chain whose ops are always
/// isolated has Chernoff parameter ½ for every pair. Star-shaped
/// arrangements (ops confined to disjoint branches around an untouched
/// center, including ops that move the center side of a branch or move a
/// subtree between two branches) pass; interacting ops are reported.
pub fn is_independent_chain(chain: &GraftChain) -> IndependenceReport {
    let trees = chain.trees();
    let ops = chain.ops();
    let mut conflicts = BTreeSet::new();
    let mut entangled = BTreeSet::new();
    for a in 0..trees.len() {
        for b in a + 1..trees.len() {
            let range = a..b;
            let graph = UnionGraph::new(trees[a].node_count(), &[&trees[a], &trees[b]]);
            for k in range.clone() {
                let op = &ops[k];
                let others: Vec<(usize, HashSet<usize>)> = range
                    .clone()
                    .filter(|&l| l != k)
                    .map(|l| (l, ops[l].touched().into_iter().collect()))
                    .collect();
                let cut = [(op.subtree_root, op.old_neighbor), (op.subtree_root, op.new_neighbor)];
                let root_side = graph.component(op.subtree_root, &cut);
                let anchor_side = graph.component(op.old_neighbor, &cut);
                let hits = |side: &HashSet<usize>| -> Vec<usize> {
                    others.iter().filter(|(_, t)| !t.is_disjoint(side)).map(|(l, _)| *l).collect()
                };
                let root_hits = hits(&root_side);
                let anchor_hits = hits(&anchor_side);
                let anchors_joined = anchor_side.contains(&op.new_neighbor);
                let isolated = root_hits.is_empty() || (anchor_hits.is_empty() && anchors_joined);
                if !isolated {
                    entangled.insert(k);
                    for l in root_hits.into_iter().chain(anchor_hits) {
                        conflicts.insert((k.min(l), k.max(l)));
                    }
                }
            }
        }
    }
    IndependenceReport {
        independent: entangled.is_empty(),
        conflicts: conflicts.into_iter().collect(),
        entangled_ops: entangled.into_iter().collect(),
    }
}

struct UnionGraph {
    adj: Vec<Vec<usize>>,
}

impl UnionGraph {
    fn new(n: usize, trees: &[&TreeSpec]) -> Self {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
        for t in trees {
            for e in t.edges() {
                if !adj[e.a].contains(&e.b) {
                    adj[e.a].push(e.b);
                    adj[e.b].push(e.a);
                }
            }
        }
        Self { adj }
    }

    /// Component of `start` once the `removed` edges are ignored.
    fn component(&self, start: usize, removed: &[(usize, usize)]) -> HashSet<usize> {
        let is_removed = |u: usize, v: usize| removed.iter().any(|&(x, y)| (x == u && y == v) || (x == v && y == u));
        let mut seen = HashSet::from([start]);
        let mut stack = vec![start];
        while let Some(u) = stack.pop() {
            for &v in &self.adj[u] {
                if !is_removed(u, v) && seen.insert(v) {
                    stack.push(v);
                }
            }
        }
        seen
    }
}

/// `tr(S_½ (S1⁻¹ - S2⁻¹))`. Requires `|S1| = |S2|`, under which its root in
/// the interpolation parameter is the Chernoff parameter.
pub fn trace_condition(sigma1: &CovarianceMatrix, sigma2: &CovarianceMatrix) -> Result<f64> {
    check_same_dim(sigma1, sigma2)?;
    let (ld1, ld2) = (sigma1.log_det(), sigma2.log_det());
    if (ld1 - ld2).abs() > DET_MATCH_TOL {
        return Err(Error::DeterminantMismatch(ld1, ld2));
    }
    let half = sigma_lambda(sigma1, sigma2, 0.5)?;
    let diff = sigma1.inverse() - sigma2.inverse();
    Ok(half.matrix().component_mul(&diff).sum())
}

/// Pairwise Chernoff information and parameters over a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainCi {
    pub ci: DMatrix<f64>,
    pub lambda_star: DMatrix<f64>,
}

impl ChainCi {
    pub fn len(&self) -> usize {
        self.ci.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.ci.nrows() == 0
    }
}

pub fn chain_ci_matrix(chain: &GraftChain) -> Result<ChainCi> {
    chain_ci_matrix_with(chain, &LambdaSolver::default())
}

pub fn chain_ci_matrix_with(chain: &GraftChain, solver: &LambdaSolver) -> Result<ChainCi> {
    let covs = chain.trees().iter().map(TreeSpec::covariance).collect::<Result<Vec<_>>>()?;
    let n = covs.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let results = pairs
        .par_iter()
        .map(|&(i, j)| chernoff_information_with(&covs[i], &covs[j], solver))
        .collect::<Result<Vec<_>>>()?;
    let mut ci = DMatrix::zeros(n, n);
    let mut lambda_star = DMatrix::from_element(n, n, 0.5);
    for (&(i, j), r) in pairs.iter().zip(results) {
        ci[(i, j)] = r.ci;
        ci[(j, i)] = r.ci;
        lambda_star[(i, j)] = r.lambda_star;
        lambda_star[(j, i)] = 1.0 - r.lambda_star;
    }
    Ok(ChainCi { ci, lambda_star })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NestedComparison {
    /// Outer pair `(p, q)`, 0-based tree indices.
    pub outer: (usize, usize),
    /// Inner pair `(i, j)` with `p <= i < j <= q`.
    pub inner: (usize, usize),
    pub outer_ci: f64,
    pub inner_ci: f64,
    /// `outer_ci - inner_ci`.
    pub margin: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum OrderingVerdict {
    /// Independent chain and every nested inequality holds.
    Pass,
    /// Independent chain with a violated inequality.
    Fail,
    /// Chain not certified independent; results are observations only.
    Observational,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingReport {
    pub verdict: OrderingVerdict,
    pub independence: IndependenceReport,
    pub comparisons: Vec<NestedComparison>,
    pub violations: usize,
    /// Pair with the smallest CI (ties go to the first in row-major order).
    pub min_pair: Option<(usize, usize)>,
    pub min_pair_adjacent: bool,
    /// Smallest CI over all pairs minus the smallest over adjacent pairs.
    pub adjacent_min_gap: f64,
}

pub fn verify_partial_ordering(chain: &GraftChain, slack: f64) -> Result<OrderingReport> {
    let table = chain_ci_matrix(chain)?;
    Ok(ordering_report(chain, &table, slack))
}

pub fn ordering_report(chain: &GraftChain, table: &ChainCi, slack: f64) -> OrderingReport {
    let n = table.len();
    let ci = &table.ci;
    let mut comparisons = Vec::new();
    for p in 0..n {
        for q in p + 1..n {
            for i in p..q {
                for j in i + 1..=q {
                    if (i, j) == (p, q) {
                        continue;
                    }
                    let margin = ci[(p, q)] - ci[(i, j)];
                    comparisons.push(NestedComparison {
                        outer: (p, q),
                        inner: (i, j),
                        outer_ci: ci[(p, q)],
                        inner_ci: ci[(i, j)],
                        margin,
                        holds: margin >= -slack,
                    });
                }
            }
        }
    }
    let violations = comparisons.iter().filter(|c| !c.holds).count();

    let mut min_pair = None;
    let mut min_all = f64::INFINITY;
    let mut min_adjacent = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            if ci[(i, j)] < min_all {
                min_all = ci[(i, j)];
                min_pair = Some((i, j));
            }
            if j == i + 1 {
                min_adjacent = min_adjacent.min(ci[(i, j)]);
            }
        }
    }
    let adjacent_min_gap = if n > 1 { min_adjacent - min_all } else { 0.0 };
    let independence = is_independent_chain(chain);
    let verdict = match (independence.independent, violations) {
        (false, _) => OrderingVerdict::Observational,
        (true, 0) => OrderingVerdict::Pass,
        (true, _) => OrderingVerdict::Fail,
    };
    OrderingReport {
        verdict,
        independence,
        comparisons,
        violations,
        min_pair,
        min_pair_adjacent: adjacent_min_gap <= slack,
        adjacent_min_gap,
    }
}
