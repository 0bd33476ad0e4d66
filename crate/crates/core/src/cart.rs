//! Randomized CART regression trees grown best-first on a subsample drawn
//! without replacement.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::config::{ForestConfig, TreeParams};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Leaf,
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: u32,
        right: u32,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub depth: u32,
    /// In-bag rows reaching this node.
    pub n_in_bag: u32,
    /// Mean in-bag response of the node. The prediction when it is a leaf.
    pub value: f64,
    pub kind: NodeKind,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }

    pub fn split(&self) -> Option<(usize, f64, u32, u32)> {
        match self.kind {
            NodeKind::Split {
                feature,
                threshold,
                left,
                right,
            } => Some((feature, threshold, left, right)),
            NodeKind::Leaf => None,
        }
    }
}

/// A fitted tree. Node 0 is the root; children always have larger ids than
/// their parent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
    in_bag: Vec<u32>,
    depth: u32,
    leaf_count: usize,
}

/// Shape of a node for [`Tree::assemble`].
#[derive(Clone, Copy, Debug)]
pub enum Layout {
    Leaf,
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

impl Tree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Sorted in-bag row indices.
    pub fn in_bag(&self) -> &[u32] {
        &self.in_bag
    }

    /// Depth of the deepest leaf; 0 for a root-only tree.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_count
    }

    pub fn is_in_bag(&self, i: usize) -> bool {
        self.in_bag.binary_search(&(i as u32)).is_ok()
    }

    /// Rows of `0..n` not in the subsample, ascending.
    pub fn oob_rows(&self, n: usize) -> Vec<u32> {
        let mut out = Vec::with_capacity(n.saturating_sub(self.in_bag.len()));
        let mut bag = self.in_bag.iter().peekable();
        for i in 0..n as u32 {
            if bag.peek() == Some(&&i) {
                bag.next();
            } else {
                out.push(i);
            }
        }
        out
    }

    #[inline]
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0usize;
        while let NodeKind::Split {
            feature,
            threshold,
            left,
            right,
        } = self.nodes[id].kind
        {
            id = if x[feature] <= threshold { left } else { right } as usize;
        }
        id
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.nodes[self.leaf_of(x)].value
    }

    /// Whether the root-to-leaf path of `x` crosses a split on `feature`.
    pub fn path_uses(&self, x: &[f64], feature: usize) -> bool {
        let mut id = 0usize;
        while let NodeKind::Split {
            feature: f,
            threshold,
            left,
            right,
        } = self.nodes[id].kind
        {
            if f == feature {
                return true;
            }
            id = if x[f] <= threshold { left } else { right } as usize;
        }
        false
    }

    /// Covariates used by at least one split, ascending, deduplicated.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.nodes.iter().filter_map(|n| n.split().map(|s| s.0)).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn uses_feature(&self, feature: usize) -> bool {
        self.nodes.iter().any(|n| matches!(n.kind, NodeKind::Split { feature: f, .. } if f == feature))
    }

    /// Builds a tree with a given shape; node statistics are recomputed by
    /// routing the `in_bag` rows of `data`. Node 0 must be the root and
    /// children must follow their parent.
    pub fn assemble(data: &Dataset, mut in_bag: Vec<u32>, layout: &[Layout]) -> Result<Tree> {
        if layout.is_empty() {
            return Err(Error::InvalidData("empty tree layout".into()));
        }
        in_bag.sort_unstable();
        in_bag.dedup();
        if in_bag.iter().any(|&i| i as usize >= data.n()) {
            return Err(Error::InvalidData("in-bag row out of range".into()));
        }
        let mut nodes: Vec<Node> = layout
            .iter()
            .map(|l| Node {
                depth: 0,
                n_in_bag: 0,
                value: 0.0,
                kind: match *l {
                    Layout::Leaf => NodeKind::Leaf,
                    Layout::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => NodeKind::Split {
                        feature,
                        threshold,
                        left: left as u32,
                        right: right as u32,
                    },
                },
            })
            .collect();
        let mut seen = vec![false; nodes.len()];
        seen[0] = true;
        for id in 0..nodes.len() {
            if let Some((f, _, l, r)) = nodes[id].split() {
                data.check_feature(f)?;
                for c in [l as usize, r as usize] {
                    if c <= id || c >= nodes.len() || seen[c] {
                        return Err(Error::InvalidData(format!("bad child {c} of node {id}")));
                    }
                    seen[c] = true;
                    nodes[c].depth = nodes[id].depth + 1;
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidData("unreachable node in layout".into()));
        }
        let mut tree = Tree {
            depth: nodes.iter().map(|n| n.depth).max().unwrap_or(0),
            leaf_count: nodes.iter().filter(|n| n.is_leaf()).count(),
            nodes,
            in_bag,
        };
        let mut sums = vec![0.0; tree.nodes.len()];
        for &i in &tree.in_bag {
            let x = data.row(i as usize);
            let mut id = 0usize;
            loop {
                tree.nodes[id].n_in_bag += 1;
                sums[id] += data.y()[i as usize];
                match tree.nodes[id].split() {
                    Some((f, t, l, r)) => id = if x[f] <= t { l } else { r } as usize,
                    None => break,
                }
            }
        }
        for (node, s) in tree.nodes.iter_mut().zip(sums) {
            node.value = if node.n_in_bag > 0 { s / node.n_in_bag as f64 } else { f64::NAN };
        }
        Ok(tree)
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    node: u32,
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    /// Max-heap order: larger gain first, then lower node id.
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Draws the subsample from `rng` and grows a tree on it.
pub fn fit_tree(data: &Dataset, config: &ForestConfig, rng: &mut Rng) -> Result<Tree> {
    let params = config.resolve(data.n(), data.p())?;
    let in_bag = draw_subsample(data.n(), params.subsample_size, rng);
    Ok(grow_tree(data, in_bag, &params, rng))
}

/// Sorted subsample of `size` distinct rows out of `n`.
pub fn draw_subsample(n: usize, size: usize, rng: &mut Rng) -> Vec<u32> {
    let mut rows: Vec<u32> = index::sample(rng, n, size).into_iter().map(|i| i as u32).collect();
    rows.sort_unstable();
    rows
}

/// Grows a tree on the given in-bag rows, repeatedly splitting the leaf
/// whose best admissible split removes the most squared error, until the
/// leaf budget is spent or no leaf can be split.
pub fn grow_tree(data: &Dataset, mut in_bag: Vec<u32>, params: &TreeParams, rng: &mut Rng) -> Tree {
    in_bag.sort_unstable();
    in_bag.dedup();
    let mut grower = Grower {
        data,
        params,
        nodes: Vec::new(),
        rows: Vec::new(),
        scratch: Vec::new(),
    };
    let mut heap = BinaryHeap::new();
    let root = grower.add_node(0, in_bag.clone());
    if let Some(c) = grower.best_split(root, rng) {
        heap.push(c);
    }
    let mut leaf_count = 1usize;
    while leaf_count < params.max_leaves {
        let Some(c) = heap.pop() else { break };
        let rows = std::mem::take(&mut grower.rows[c.node as usize]);
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&i| data.get(i as usize, c.feature) <= c.threshold);
        let depth = grower.nodes[c.node as usize].depth + 1;
        let left = grower.add_node(depth, left_rows);
        let right = grower.add_node(depth, right_rows);
        grower.nodes[c.node as usize].kind = NodeKind::Split {
            feature: c.feature,
            threshold: c.threshold,
            left,
            right,
        };
        leaf_count += 1;
        for child in [left, right] {
            if let Some(next) = grower.best_split(child, rng) {
                heap.push(next);
            }
        }
    }
    let nodes = grower.nodes;
    Tree {
        depth: nodes.iter().map(|n| n.depth).max().unwrap_or(0),
        leaf_count,
        nodes,
        in_bag,
    }
}

struct Grower<'a> {
    data: &'a Dataset,
    params: &'a TreeParams,
    nodes: Vec<Node>,
    rows: Vec<Vec<u32>>,
    scratch: Vec<(f64, f64)>,
}

impl Grower<'_> {
    fn add_node(&mut self, depth: u32, rows: Vec<u32>) -> u32 {
        let y = self.data.y();
        let sum: f64 = rows.iter().map(|&i| y[i as usize]).sum();
        let value = if rows.is_empty() { f64::NAN } else { sum / rows.len() as f64 };
        self.nodes.push(Node {
            depth,
            n_in_bag: rows.len() as u32,
            value,
            kind: NodeKind::Leaf,
        });
        self.rows.push(rows);
        (self.nodes.len() - 1) as u32
    }

    fn best_split(&mut self, node: u32, rng: &mut Rng) -> Option<Candidate> {
        let rows = &self.rows[node as usize];
        let s = rows.len();
        let min_child = self
            .params
            .min_node_size
            .max((self.params.gamma * s as f64).ceil() as usize)
            .max(1);
        if s < 2 * min_child {
            return None;
        }
        let y = self.data.y();
        let mean = self.nodes[node as usize].value;
        let sse: f64 = rows.iter().map(|&i| (y[i as usize] - mean).powi(2)).sum();
        if sse <= 0.0 {
            return None;
        }
        let p = self.data.p();
        let k = if self.params.delta > 0.0 && rng.random::<f64>() < self.params.delta {
            1
        } else {
            self.params.mtry.min(p)
        };
        let mut features = index::sample(rng, p, k).into_vec();
        features.sort_unstable();

        let mut best: Option<Candidate> = None;
        for f in features {
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&i| (self.data.get(i as usize, f), y[i as usize] - mean)));
            self.scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let total: f64 = self.scratch.iter().map(|v| v.1).sum();
            let base = total * total / s as f64;
            let mut left_sum = 0.0;
            for m in 1..=s - min_child {
                left_sum += self.scratch[m - 1].1;
                if m < min_child {
                    continue;
                }
                let (lo, hi) = (self.scratch[m - 1].0, self.scratch[m].0);
                if lo >= hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / m as f64
                    + right_sum * right_sum / (s - m) as f64
                    - base;
                if best.is_none_or(|b| gain > b.gain) {
                    let mid = 0.5 * (lo + hi);
                    let threshold = if mid >= lo && mid < hi { mid } else { lo };
                    best = Some(Candidate {
                        node,
                        gain,
                        feature: f,
                        threshold,
                    });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12 * sse)
    }
}
