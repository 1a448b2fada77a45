//! CART classification trees grown on presorted feature orders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Arena node. Children always have larger indices than their parent.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub(crate) fn from_nodes(nodes: Vec<Node>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Positive-class fraction of the leaf `x` falls into. Values `<=` the
    /// threshold go left.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { fraction } => return fraction,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, left).max(go(nodes, right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub mtry: usize,
}

/// Column-major training data with each column's row order sorted once.
pub(crate) struct Presorted<'a> {
    pub columns: Vec<Vec<f64>>,
    pub order: Vec<Vec<u32>>,
    pub labels: &'a [bool],
}

impl<'a> Presorted<'a> {
    pub fn new(columns: Vec<Vec<f64>>, labels: &'a [bool]) -> Self {
        let order = columns
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| {
                    col[a as usize]
                        .total_cmp(&col[b as usize])
                        .then(a.cmp(&b))
                });
                idx
            })
            .collect();
        Self {
            columns,
            order,
            labels,
        }
    }

    fn n_features(&self) -> usize {
        self.columns.len()
    }
}

struct Work {
    lo: usize,
    hi: usize,
    depth: usize,
    node: usize,
    key: u64,
}

/// Path key of a child node; the root has key 0.
fn child_key(parent: u64, right: bool) -> u64 {
    let mut z = parent
        .wrapping_mul(2)
        .wrapping_add(1 + right as u64)
        .wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A grown tree plus the positive fraction of every node, internal ones
/// included, so that shallower trees can be cut from it.
pub(crate) struct GrownTree {
    pub tree: DecisionTree,
    pub fractions: Vec<f64>,
}

/// Grows one tree on the multiset of rows given by `counts` (row index →
/// multiplicity). Each in-bag row appears once, weighted by its count.
///
/// Feature sampling at a node draws from a generator keyed by `node_seed`
/// and the node's path, so the tree grown with a depth limit is exactly the
/// unlimited tree cut at that depth.
pub(crate) fn grow(
    data: &Presorted<'_>,
    counts: &[u32],
    params: GrowParams,
    node_seed: u64,
) -> GrownTree {
    let d = data.n_features();
    let weight: Vec<u32> = counts.to_vec();
    let pos_weight: Vec<u32> = counts
        .iter()
        .zip(data.labels)
        .map(|(&c, &y)| if y { c } else { 0 })
        .collect();
    // per feature: in-bag rows in ascending value order, and those values
    let mut rows: Vec<Vec<u32>> = Vec::with_capacity(d);
    let mut vals: Vec<Vec<f64>> = Vec::with_capacity(d);
    for (ord, col) in data.order.iter().zip(&data.columns) {
        let r: Vec<u32> = ord.iter().copied().filter(|&i| counts[i as usize] > 0).collect();
        vals.push(r.iter().map(|&i| col[i as usize]).collect());
        rows.push(r);
    }
    let m = rows.first().map_or(0, Vec::len);

    let mut nodes = vec![Node::Leaf { fraction: 0.0 }];
    let mut stack = vec![Work {
        lo: 0,
        hi: m,
        depth: 0,
        node: 0,
        key: 0,
    }];
    let mut node_fraction = vec![0.0];
    let mut goes_left = vec![false; counts.len()];
    let mut row_buf = vec![0u32; m];
    let mut val_buf = vec![0f64; m];

    while let Some(w) = stack.pop() {
        let (n, pos) = rows[0][w.lo..w.hi].iter().fold((0usize, 0usize), |(n, p), &r| {
            (n + weight[r as usize] as usize, p + pos_weight[r as usize] as usize)
        });
        let fraction = if n == 0 { 0.0 } else { pos as f64 / n as f64 };
        nodes[w.node] = Node::Leaf { fraction };
        node_fraction[w.node] = fraction;
        if pos == 0
            || pos == n
            || n < 2 * params.min_samples_leaf
            || params.max_depth.is_some_and(|md| w.depth >= md)
        {
            continue;
        }

        // partial Fisher-Yates draws mtry distinct features
        let mut rng = ChaCha8Rng::seed_from_u64(node_seed);
        rng.set_stream(w.key);
        let mut features: Vec<usize> = (0..d).collect();
        for i in 0..params.mtry {
            let j = rng.random_range(i..d);
            features.swap(i, j);
        }
        let mut candidates = features[..params.mtry].to_vec();
        candidates.sort_unstable();

        let split = best_split(
            &rows, &vals, &weight, &pos_weight, &candidates, w.lo, w.hi, n, pos, params,
        );
        let Some((feature, threshold)) = split else {
            continue;
        };

        for (&r, &v) in rows[feature][w.lo..w.hi].iter().zip(&vals[feature][w.lo..w.hi]) {
            goes_left[r as usize] = v <= threshold;
        }
        let mut n_left = 0;
        for (list, values) in rows.iter_mut().zip(vals.iter_mut()) {
            let rr = &mut list[w.lo..w.hi];
            let vv = &mut values[w.lo..w.hi];
            // branchless stable partition: every element is written to both
            // sides and only the matching cursor advances
            let (mut k, mut j) = (0, 0);
            for i in 0..rr.len() {
                let (r, v) = (rr[i], vv[i]);
                let g = goes_left[r as usize] as usize;
                rr[k] = r;
                vv[k] = v;
                row_buf[j] = r;
                val_buf[j] = v;
                k += g;
                j += 1 - g;
            }
            rr[k..].copy_from_slice(&row_buf[..j]);
            vv[k..].copy_from_slice(&val_buf[..j]);
            n_left = k;
        }

        let left = nodes.len();
        let right = left + 1;
        nodes.push(Node::Leaf { fraction: 0.0 });
        nodes.push(Node::Leaf { fraction: 0.0 });
        node_fraction.extend([0.0, 0.0]);
        nodes[w.node] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        let mid = w.lo + n_left;
        // right pushed first so the left subtree is expanded first
        stack.push(Work {
            lo: mid,
            hi: w.hi,
            depth: w.depth + 1,
            node: right,
            key: child_key(w.key, true),
        });
        stack.push(Work {
            lo: w.lo,
            hi: mid,
            depth: w.depth + 1,
            node: left,
            key: child_key(w.key, false),
        });
    }
    GrownTree {
        tree: DecisionTree { nodes },
        fractions: node_fraction,
    }
}

impl GrownTree {
    /// The tree a depth limit of `max_depth` would have produced. Nodes are
    /// renumbered in the order the grower allocates them.
    pub fn cut(&self, max_depth: Option<usize>) -> DecisionTree {
        let Some(max_depth) = max_depth else {
            return self.tree.clone();
        };
        let src = &self.tree.nodes;
        let mut nodes = vec![Node::Leaf { fraction: 0.0 }];
        // (source index, destination index, depth)
        let mut stack = vec![(0usize, 0usize, 0usize)];
        while let Some((i, j, depth)) = stack.pop() {
            match src[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } if depth < max_depth => {
                    let l = nodes.len();
                    nodes.push(Node::Leaf { fraction: 0.0 });
                    nodes.push(Node::Leaf { fraction: 0.0 });
                    nodes[j] = Node::Split {
                        feature,
                        threshold,
                        left: l,
                        right: l + 1,
                    };
                    stack.push((right, l + 1, depth + 1));
                    stack.push((left, l, depth + 1));
                }
                _ => {
                    nodes[j] = Node::Leaf {
                        fraction: self.fractions[i],
                    }
                }
            }
        }
        DecisionTree { nodes }
    }
}

/// Weighted Gini impurity, up to a constant, is `n - (p² + q²) / n`; the
/// best split maximizes `Σ_children (p² + q²) / n`.
fn purity(pos: usize, n: usize) -> f64 {
    let p = pos as f64;
    let q = (n - pos) as f64;
    (p * p + q * q) / n as f64
}

#[allow(clippy::too_many_arguments)]
fn best_split(
    rows: &[Vec<u32>],
    vals: &[Vec<f64>],
    weight: &[u32],
    pos_weight: &[u32],
    candidates: &[usize],
    lo: usize,
    hi: usize,
    n: usize,
    pos_total: usize,
    params: GrowParams,
) -> Option<(usize, f64)> {
    let parent = purity(pos_total, n);
    let min_leaf = params.min_samples_leaf;
    let mut best: Option<(f64, usize, f64)> = None;
    for &f in candidates {
        let list = &rows[f][lo..hi];
        let values = &vals[f][lo..hi];
        let (mut n_left, mut pos_left) = (0usize, 0usize);
        for i in 0..list.len() - 1 {
            let r = list[i] as usize;
            n_left += weight[r] as usize;
            pos_left += pos_weight[r] as usize;
            if n_left < min_leaf {
                continue;
            }
            if n - n_left < min_leaf {
                break;
            }
            let (a, b) = (values[i], values[i + 1]);
            if a == b {
                continue;
            }
            let score = purity(pos_left, n_left) + purity(pos_total - pos_left, n - n_left);
            if best.is_none_or(|(bs, ..)| score > bs) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some((score, f, threshold));
            }
        }
    }
    best.and_then(|(score, f, t)| (score - parent > 1e-9).then_some((f, t)))
}
