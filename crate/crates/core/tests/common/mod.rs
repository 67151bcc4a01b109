#![allow(dead_code)]

use chernoff_core::covariance::CovarianceMatrix;
use chernoff_core::tree::{Edge, TreeSpec};
use chernoff_core::tree_ops::{GraftChain, GraftOp};
use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn weight(rng: &mut ChaCha8Rng) -> f64 {
    let w: f64 = rng.random_range(0.05..0.9);
    if rng.random_bool(0.5) {
        w
    } else {
        -w
    }
}

/// Random labelled tree: nodes attach one at a time to an earlier node,
/// then labels are shuffled.
pub fn random_tree(rng: &mut ChaCha8Rng, n: usize) -> TreeSpec {
    let mut labels: Vec<usize> = (1..=n).collect();
    labels.shuffle(rng);
    let edges = (1..n)
        .map(|k| {
            let parent = rng.random_range(0..k);
            Edge::new(labels[k], labels[parent], weight(rng))
        })
        .collect();
    TreeSpec::new(n, edges).unwrap()
}

/// Random tree that contains edge `(p, q)` with weight `w`.
pub fn random_tree_with_edge(rng: &mut ChaCha8Rng, n: usize, p: usize, q: usize, w: f64) -> TreeSpec {
    let mut rest: Vec<usize> = (1..=n).filter(|&v| v != p && v != q).collect();
    rest.shuffle(rng);
    let mut order = vec![p, q];
    order.extend(rest);
    let mut edges = vec![Edge::new(p, q, w)];
    for k in 2..n {
        let parent = order[rng.random_range(0..k)];
        edges.push(Edge::new(order[k], parent, weight(rng)));
    }
    TreeSpec::new(n, edges).unwrap()
}

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> CovarianceMatrix {
    let a = gaussian_matrix(rng, n, n);
    let s = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.2;
    CovarianceMatrix::new(s).unwrap()
}

/// Random matrix with singular values in a moderate range.
pub fn random_invertible(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    loop {
        let k = gaussian_matrix(rng, n, n);
        let sv = k.singular_values();
        if sv.min() > 0.05 * sv.max() {
            return k;
        }
    }
}

/// `(K S Kᵀ)` as a covariance matrix.
pub fn congruent(k: &DMatrix<f64>, s: &CovarianceMatrix) -> CovarianceMatrix {
    let m = k * s.matrix() * k.transpose();
    CovarianceMatrix::new((&m + m.transpose()) * 0.5).unwrap()
}

pub fn dense_det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraftKind {
    /// Subtree moved inside its own branch.
    WithinBranch,
    /// Center node re-attached to a different node of a branch.
    CenterSide,
    /// Subtree moved from one branch to another.
    AcrossBranches,
}

struct Branch {
    nodes: Vec<usize>,
    anchor: usize,
    center: usize,
}

/// A grafting chain whose ops act on disjoint branches hung off a fixed
/// center subtree. At most 12 nodes and 4 ops; `kinds` picks the op types.
pub fn independent_chain(rng: &mut ChaCha8Rng, kinds: &[GraftKind]) -> GraftChain {
    assert!(!kinds.is_empty() && kinds.len() <= 4);
    let need3 = kinds.iter().filter(|k| **k == GraftKind::WithinBranch).count();
    let need2 = kinds.iter().filter(|k| **k == GraftKind::CenterSide).count()
        + 2 * kinds.iter().filter(|k| **k == GraftKind::AcrossBranches).count();
    let min_nodes = 3 * need3 + 2 * need2;
    assert!(min_nodes < 12, "op mix does not fit in 12 nodes");
    let center_size = rng.random_range(1..=(12 - min_nodes).min(3));

    let mut next = 1;
    let mut edges = Vec::new();
    let center: Vec<usize> = (0..center_size)
        .map(|_| {
            next += 1;
            next - 1
        })
        .collect();
    for k in 1..center.len() {
        edges.push(Edge::new(center[k], center[rng.random_range(0..k)], weight(rng)));
    }

    let mut spare = 12 - min_nodes - center_size;
    let mut branches = Vec::new();
    let mut sizes: Vec<usize> = Vec::new();
    for kind in kinds {
        match kind {
            GraftKind::WithinBranch => sizes.push(3),
            GraftKind::CenterSide => sizes.push(2),
            GraftKind::AcrossBranches => {
                sizes.push(2);
                sizes.push(2);
            }
        }
    }
    for size in sizes.iter_mut() {
        if spare > 0 && rng.random_bool(0.3) {
            *size += 1;
            spare -= 1;
        }
    }
    for &size in &sizes {
        let nodes: Vec<usize> = (0..size)
            .map(|_| {
                next += 1;
                next - 1
            })
            .collect();
        for k in 1..size {
            edges.push(Edge::new(nodes[k], nodes[rng.random_range(0..k)], weight(rng)));
        }
        let c = center[rng.random_range(0..center.len())];
        edges.push(Edge::new(nodes[0], c, weight(rng)));
        branches.push(Branch { anchor: nodes[0], nodes, center: c });
    }
    let n = next - 1;
    let base = TreeSpec::new(n, edges).unwrap();

    let mut tree = base.clone();
    let mut ops = Vec::new();
    let mut b = 0;
    for kind in kinds {
        let op = match kind {
            GraftKind::WithinBranch => {
                let br = &branches[b];
                b += 1;
                let options: Vec<GraftOp> = clean_cuts(&tree, br)
                    .into_iter()
                    .flat_map(|(i, p, w, side)| {
                        br.nodes
                            .iter()
                            .filter(move |q| !side.contains(q) && **q != p)
                            .map(move |&q| GraftOp::new(i, p, q, w))
                            .collect::<Vec<_>>()
                    })
                    .collect();
                *options.choose(rng).expect("a branch of 3 nodes always has a move")
            }
            GraftKind::CenterSide => {
                let br = &branches[b];
                b += 1;
                let w = tree.find_edge(br.center, br.anchor).unwrap().1;
                let q = *br.nodes[1..].choose(rng).unwrap();
                GraftOp::new(br.center, br.anchor, q, w)
            }
            GraftKind::AcrossBranches => {
                let (from, to) = (&branches[b], &branches[b + 1]);
                b += 2;
                let (i, p, w, _) = clean_cuts(&tree, from).choose(rng).cloned().unwrap();
                GraftOp::new(i, p, *to.nodes.choose(rng).unwrap(), w)
            }
        };
        tree = chernoff_core::tree_ops::apply_graft(&tree, &op).unwrap();
        ops.push(op);
    }
    GraftChain::new(relabel(rng, &base, &mut ops), ops).unwrap()
}

/// Edges `(i, p)` inside a branch whose `i` side does not reach the center.
fn clean_cuts(tree: &TreeSpec, br: &Branch) -> Vec<(usize, usize, f64, Vec<usize>)> {
    let mut out = Vec::new();
    for e in tree.edges() {
        for (i, p) in [(e.a, e.b), (e.b, e.a)] {
            if !br.nodes.contains(&i) || !br.nodes.contains(&p) {
                continue;
            }
            let side = tree.side_of(i, p);
            if !side.contains(&br.anchor) {
                out.push((i, p, e.weight, side));
            }
        }
    }
    out
}

/// Shuffles node labels of the base tree and rewrites the ops to match.
fn relabel(rng: &mut ChaCha8Rng, base: &TreeSpec, ops: &mut [GraftOp]) -> TreeSpec {
    let n = base.node_count();
    let mut perm: Vec<usize> = (1..=n).collect();
    perm.shuffle(rng);
    let map = |v: usize| perm[v - 1];
    for op in ops.iter_mut() {
        *op = GraftOp::new(map(op.subtree_root), map(op.old_neighbor), map(op.new_neighbor), op.weight);
    }
    let edges = base.edges().iter().map(|e| Edge::new(map(e.a), map(e.b), e.weight)).collect();
    TreeSpec::new(n, edges).unwrap()
}

/// Op mix for the `index`-th generated chain; cycles through all kinds.
pub fn kinds_for(rng: &mut ChaCha8Rng, index: usize) -> Vec<GraftKind> {
    let all = [GraftKind::WithinBranch, GraftKind::CenterSide, GraftKind::AcrossBranches];
    loop {
        let count = rng.random_range(1..=4);
        let mut kinds = vec![all[index % 3]];
        while kinds.len() < count {
            kinds.push(*all.choose(rng).unwrap());
        }
        kinds.shuffle(rng);
        let need: usize = kinds
            .iter()
            .map(|k| match k {
                GraftKind::WithinBranch => 3,
                GraftKind::CenterSide => 2,
                GraftKind::AcrossBranches => 4,
            })
            .sum();
        if need < 12 {
            return kinds;
        }
    }
}

/// Two ops where the second moves a node adjacent to the first op's new
/// anchor; the resulting chain has `CI(T1||T3) < CI(T1||T2)`.
pub fn dependent_chain() -> GraftChain {
    let base = TreeSpec::from_triples(
        7,
        &[(2, 1, -0.17), (3, 2, 0.18), (4, 1, -0.78), (5, 2, 0.74), (6, 2, -0.75), (7, 6, -0.2)],
    )
    .unwrap();
    GraftChain::new(base, vec![GraftOp::new(2, 6, 7, -0.75), GraftOp::new(6, 7, 5, -0.2)]).unwrap()
}

/// Pairwise values for [`dependent_chain`] computed independently with
/// dense numpy linear algebra (`scipy.linalg.eigh` plus scalar root finding).
pub const DEPENDENT_CI_13: f64 = 0.249_453_467_305_002_29;
pub const DEPENDENT_CI_12: f64 = 0.285_893_161_777_838_86;

/// Published eigenvalue lists of four dependent chains, with the printed
/// Chernoff parameter and CI between the first and third trees.
pub const PUBLISHED_CASES: [([f64; 7], f64, f64); 4] = [
    ([19.5746, 0.0433, 1.5439, 0.7642, 1.0, 1.0, 1.0], 0.5191, 0.8983),
    ([9.2341, 0.1019, 1.2982, 0.8185, 1.0, 1.0, 1.0], 0.5073, 0.5402),
    ([9.4328, 1.653, 0.0844, 0.7603, 1.0, 1.0, 1.0], 0.5254, 0.5982),
    ([5.0195, 0.1863, 1.2201, 0.8766, 1.0, 1.0, 1.0], 0.5082, 0.3102),
];

fn log_det(m: &DMatrix<f64>) -> f64 {
    m.clone().cholesky().unwrap().l().diagonal().iter().map(|d| 2.0 * d.ln()).sum()
}

/// `C(t) = ½[(1-t) ln|S1| + t ln|S2| - ln|((1-t) S1⁻¹ + t S2⁻¹)⁻¹|]`, the
/// log of the Bhattacharyya-type integral, from dense matrices only.
pub fn chernoff_alpha(s1: &DMatrix<f64>, s2: &DMatrix<f64>, t: f64) -> f64 {
    AlphaCurve::new(s1, s2).at(t)
}

pub struct AlphaCurve {
    inv1: DMatrix<f64>,
    inv2: DMatrix<f64>,
    ld1: f64,
    ld2: f64,
}

impl AlphaCurve {
    pub fn new(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Self {
        Self {
            inv1: s1.clone().try_inverse().unwrap(),
            inv2: s2.clone().try_inverse().unwrap(),
            ld1: log_det(s1),
            ld2: log_det(s2),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        let mix = &self.inv1 * (1.0 - t) + &self.inv2 * t;
        0.5 * ((1.0 - t) * self.ld1 + t * self.ld2 + log_det(&mix))
    }
}

/// Grid maximum of [`chernoff_alpha`] over `[0, 1]` and its location.
pub fn grid_chernoff(s1: &DMatrix<f64>, s2: &DMatrix<f64>, step: f64) -> (f64, f64) {
    let curve = AlphaCurve::new(s1, s2);
    let n = (1.0 / step).round() as usize;
    (0..=n)
        .map(|k| {
            let t = k as f64 * step;
            (curve.at(t), t)
        })
        .fold((f64::NEG_INFINITY, 0.0), |best, cur| if cur.0 > best.0 { cur } else { best })
}
