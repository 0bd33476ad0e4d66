//! Projected trees: a fitted tree with every split on one covariate `j`
//! ignored, whose cell outputs are recomputed from the in-bag data. Used for
//! the Sobol-MDA, together with a weighted-traversal baseline that keeps
//! the original leaf outputs.
//!
//! Tree level `k` is depth `k`; a leaf of depth `d < k` takes part in level
//! `k` unchanged. At level `k` every point owns a collection of nodes: the
//! root at level 0, then at each split on `j` both children, at any other
//! split the child it routes to. The projected cell of a query at level `k`
//! is the set of in-bag rows owning the same collection. A query stops at
//! the first level where its collection holds only leaves; when it meets an
//! empty cell first, it uses the previous level. Cells are nested along
//! levels, so that fallback always lands on a non-empty cell.

use rustc_hash::FxHashMap as HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::cart::{NodeKind, Tree};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, OobTable};
use crate::importance::OobContext;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ProjectedPrediction {
    pub value: f64,
    /// Tree level whose projected cell produced `value`.
    pub level: u32,
}

#[derive(Clone, Copy, Debug, Default)]
struct Cell {
    sum: f64,
    count: u32,
}

/// One query's walk down a projected tree.
#[derive(Clone, Debug, Serialize)]
pub struct QueryTrace {
    /// Node collection at levels `0..=last visited`.
    pub collections: Vec<Vec<u32>>,
    /// In-bag rows in the projected cell at each visited level.
    pub cell_sizes: Vec<u32>,
    pub prediction: ProjectedPrediction,
}

/// A tree projected along covariate `j`, ready to answer queries.
///
/// Only collections with more than one node are stored. A singleton `{v}`
/// arises only when no split on `j` lies above `v`, and then its cell is
/// exactly node `v`'s in-bag rows, whose statistics the tree already holds.
pub struct ProjectedTree<'a> {
    tree: &'a Tree,
    j: usize,
    levels: Vec<HashMap<Vec<u32>, Cell>>,
}

/// Advances a collection one level. Returns whether any node was split.
#[inline]
fn step(tree: &Tree, j: usize, x: &[f64], cur: &[u32], next: &mut Vec<u32>) -> bool {
    next.clear();
    let nodes = tree.nodes();
    let mut moved = false;
    for &v in cur {
        match nodes[v as usize].kind {
            NodeKind::Leaf => next.push(v),
            NodeKind::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                moved = true;
                if feature == j {
                    next.push(left);
                    next.push(right);
                } else if x[feature] <= threshold {
                    next.push(left);
                } else {
                    next.push(right);
                }
            }
        }
    }
    next.sort_unstable();
    moved
}

impl<'a> ProjectedTree<'a> {
    pub fn build(tree: &'a Tree, data: &Dataset, j: usize) -> Self {
        let mut levels: Vec<HashMap<Vec<u32>, Cell>> = Vec::new();
        if tree.uses_feature(j) {
            levels.resize_with(tree.depth() as usize + 1, HashMap::default);
            let y = data.y();
            let mut cur = Vec::new();
            let mut next = Vec::new();
            // ascending rows, so every cell sum is accumulated in row order
            for &i in tree.in_bag() {
                let x = data.row(i as usize);
                cur.clear();
                cur.push(0u32);
                let mut k = 0usize;
                while step(tree, j, x, &cur, &mut next) {
                    std::mem::swap(&mut cur, &mut next);
                    k += 1;
                    if cur.len() > 1 {
                        let map = &mut levels[k];
                        let cell = match map.get_mut(cur.as_slice()) {
                            Some(c) => c,
                            None => map.entry(cur.clone()).or_default(),
                        };
                        cell.sum += y[i as usize];
                        cell.count += 1;
                    }
                }
            }
        }
        ProjectedTree { tree, j, levels }
    }

    pub fn tree(&self) -> &Tree {
        self.tree
    }

    fn cell(&self, level: usize, collection: &[u32]) -> Option<f64> {
        if let [v] = collection {
            let node = &self.tree.nodes()[*v as usize];
            return (node.n_in_bag > 0).then_some(node.value);
        }
        let c = self.levels.get(level)?.get(collection)?;
        Some(c.sum / c.count as f64)
    }

    fn cell_size(&self, level: usize, collection: &[u32]) -> u32 {
        if let [v] = collection {
            return self.tree.nodes()[*v as usize].n_in_bag;
        }
        self.levels
            .get(level)
            .and_then(|m| m.get(collection))
            .map_or(0, |c| c.count)
    }

    fn walk(&self, x: &[f64], mut trace: Option<&mut QueryTrace>) -> ProjectedPrediction {
        let mut cur = vec![0u32];
        let mut next = Vec::new();
        let mut best = ProjectedPrediction {
            value: self.tree.nodes()[0].value,
            level: 0,
        };
        if let Some(t) = trace.as_deref_mut() {
            t.collections.push(cur.clone());
            t.cell_sizes.push(self.cell_size(0, &cur));
        }
        let mut k = 0usize;
        while step(self.tree, self.j, x, &cur, &mut next) {
            std::mem::swap(&mut cur, &mut next);
            k += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.collections.push(cur.clone());
                t.cell_sizes.push(self.cell_size(k, &cur));
            }
            match self.cell(k, &cur) {
                Some(value) => {
                    best = ProjectedPrediction {
                        value,
                        level: k as u32,
                    }
                }
                None => break,
            }
        }
        if let Some(t) = trace {
            t.prediction = best;
        }
        best
    }

    pub fn predict(&self, x: &[f64]) -> ProjectedPrediction {
        self.walk(x, None)
    }

    /// Like [`ProjectedTree::predict`], recording the collection and the
    /// projected-cell size at every visited level.
    pub fn trace(&self, x: &[f64]) -> QueryTrace {
        let mut t = QueryTrace {
            collections: Vec::new(),
            cell_sizes: Vec::new(),
            prediction: ProjectedPrediction { value: 0.0, level: 0 },
        };
        self.walk(x, Some(&mut t));
        t
    }
}

/// Projected predictions of `tree` along covariate `j` for the given rows of `data`.
///
/// Batch form of [`ProjectedTree::predict`] with identical results. Rather
/// than hashing every point's collection, the in-bag and query rows that
/// meet a split on `j` are partitioned level by level: points share a group
/// exactly when they share a collection, so each group is one projected
/// cell and leaves carried down are handled once per group, not per point.
pub fn projected_tree_predict(tree: &Tree, data: &Dataset, j: usize, queries: &[usize]) -> Vec<ProjectedPrediction> {
    let nodes = tree.nodes();
    let mut out = vec![
        ProjectedPrediction {
            value: f64::NAN,
            level: 0
        };
        queries.len()
    ];
    // topmost split on `j` met by each point (with its parent), or else the
    // deepest non-empty node of its path
    let entry = |x: &[f64]| -> (u32, bool, u32) {
        let mut v = 0u32;
        let mut parent = 0u32;
        loop {
            if nodes[v as usize].n_in_bag == 0 && v != 0 {
                return (parent, false, parent);
            }
            match nodes[v as usize].kind {
                NodeKind::Split { feature, .. } if feature == j => return (v, true, parent),
                NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    parent = v;
                    v = if x[feature] <= threshold { left } else { right };
                }
                NodeKind::Leaf => return (v, false, parent),
            }
        }
    };
    let mut groups: HashMap<u32, (u32, Group)> = HashMap::default();
    for (q, &i) in queries.iter().enumerate() {
        let (v, hit, parent) = entry(data.row(i));
        if hit && nodes[v as usize].n_in_bag == 0 {
            out[q] = ProjectedPrediction {
                value: nodes[parent as usize].value,
                level: nodes[parent as usize].depth,
            };
        } else if hit {
            groups.entry(v).or_insert_with(|| (parent, Group::default())).1.queries.push(q as u32);
        } else {
            out[q] = ProjectedPrediction {
                value: nodes[v as usize].value,
                level: nodes[v as usize].depth,
            };
        }
    }
    if groups.is_empty() {
        return out;
    }
    for &i in tree.in_bag() {
        if let (v, true, _) = entry(data.row(i as usize)) {
            if let Some((_, g)) = groups.get_mut(&v) {
                g.in_bag.push(i);
            }
        }
    }
    let mut stack: Vec<(Vec<u32>, u32, Group, ProjectedPrediction)> = groups
        .into_iter()
        .map(|(v, (parent, g))| {
            let above = &nodes[parent as usize];
            let prev = ProjectedPrediction {
                value: above.value,
                level: above.depth,
            };
            (vec![v], nodes[v as usize].depth, g, prev)
        })
        .collect();
    let y = data.y();
    let mut keys: Vec<u64> = Vec::new();
    let mut splits: Vec<(usize, f64, u32, u32)> = Vec::new();
    while let Some((active, level, group, prev)) = stack.pop() {
        let here = if group.in_bag.is_empty() {
            None
        } else {
            let mut sum = 0.0;
            for &i in &group.in_bag {
                sum += y[i as usize];
            }
            Some(ProjectedPrediction {
                value: sum / group.in_bag.len() as f64,
                level,
            })
        };
        let Some(here) = here else {
            for &q in &group.queries {
                out[q as usize] = prev;
            }
            continue;
        };
        // Only split nodes of the collection matter from here on: leaves are
        // carried down unchanged and groups are never merged, so the
        // partition stays exact without tracking them.
        let mut fixed = Vec::new();
        splits.clear();
        for &v in &active {
            if let NodeKind::Split {
                feature,
                threshold,
                left,
                right,
            } = nodes[v as usize].kind
            {
                if feature == j {
                    fixed.extend([left, right].into_iter().filter(|&c| !nodes[c as usize].is_leaf()));
                } else {
                    splits.push((feature, threshold, left, right));
                }
            }
        }
        if active.is_empty() {
            for &q in &group.queries {
                out[q as usize] = here;
            }
            continue;
        }
        let words = splits.len().div_ceil(64).max(1);
        let key_of = |x: &[f64], keys: &mut Vec<u64>| {
            let start = keys.len();
            keys.resize(start + words, 0);
            for (b, &(f, t, _, _)) in splits.iter().enumerate() {
                if x[f] > t {
                    keys[start + b / 64] |= 1 << (b % 64);
                }
            }
        };
        keys.clear();
        for &i in &group.in_bag {
            key_of(data.row(i as usize), &mut keys);
        }
        let n_bag = group.in_bag.len();
        for &q in &group.queries {
            key_of(data.row(queries[q as usize]), &mut keys);
        }
        let mut index: HashMap<&[u64], usize> = HashMap::default();
        let mut children: Vec<(usize, Group)> = Vec::new();
        for (m, key) in keys.chunks(words).enumerate() {
            let c = *index.entry(key).or_insert_with(|| {
                children.push((m, Group::default()));
                children.len() - 1
            });
            if m < n_bag {
                children[c].1.in_bag.push(group.in_bag[m]);
            } else {
                children[c].1.queries.push(group.queries[m - n_bag]);
            }
        }
        for (m, child) in children {
            // cells holding no query cannot affect any answer
            if child.queries.is_empty() {
                continue;
            }
            let key = &keys[m * words..(m + 1) * words];
            let mut next = fixed.clone();
            for (b, &(_, _, l, r)) in splits.iter().enumerate() {
                let c = if key[b / 64] >> (b % 64) & 1 == 1 { r } else { l };
                if !nodes[c as usize].is_leaf() {
                    next.push(c);
                }
            }
            stack.push((next, level + 1, child, here));
        }
    }
    out
}

#[derive(Default)]
struct Group {
    /// Ascending, so cell sums follow row order.
    in_bag: Vec<u32>,
    /// Positions in the caller's query list.
    queries: Vec<u32>,
}

/// JSON dump of the projected walk of each query row.
pub fn debug_dump(tree: &Tree, data: &Dataset, j: usize, queries: &[usize]) -> Result<String> {
    #[derive(Serialize)]
    struct Entry {
        row: usize,
        #[serde(flatten)]
        trace: QueryTrace,
    }
    let pt = ProjectedTree::build(tree, data, j);
    let entries: Vec<Entry> = queries
        .iter()
        .map(|&row| Entry {
            row,
            trace: pt.trace(data.row(row)),
        })
        .collect();
    Ok(serde_json::to_string_pretty(&entries)?)
}

/// Weighted traversal ignoring splits on `j`: both children are visited,
/// each weighted by its share of the parent's in-bag rows, and the reached
/// leaf outputs are averaged with those weights.
pub fn lundberg_predict(tree: &Tree, j: usize, x: &[f64]) -> f64 {
    let nodes = tree.nodes();
    let mut stack = vec![(0u32, 1.0f64)];
    let mut num = 0.0;
    let mut den = 0.0;
    while let Some((v, w)) = stack.pop() {
        let node = &nodes[v as usize];
        match node.kind {
            NodeKind::Leaf => {
                if w > 0.0 {
                    num += w * node.value;
                    den += w;
                }
            }
            NodeKind::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if feature == j {
                    let parent = node.n_in_bag as f64;
                    for c in [right, left] {
                        let share = if parent > 0.0 {
                            nodes[c as usize].n_in_bag as f64 / parent
                        } else {
                            0.0
                        };
                        stack.push((c, w * share));
                    }
                } else {
                    stack.push((if x[feature] <= threshold { left } else { right }, w));
                }
            }
        }
    }
    num / den
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Projection {
    /// Projected-CART: cell outputs recomputed from the in-bag data.
    Cart,
    /// Weighted traversal over the original leaf outputs.
    Lundberg,
}

/// Sum over trees, in tree order, of each row's out-of-bag predictions with
/// the trees projected along `j`. Rows whose path avoids `j` keep the
/// cached prediction.
fn projected_sums(forest: &Forest, data: &Dataset, table: &OobTable, j: usize, proj: Projection) -> Vec<f64> {
    let mut sums = vec![0.0; data.n()];
    for (l, tree) in forest.trees().iter().enumerate() {
        let rows = &table.rows[l];
        let base = &table.preds[l];
        if !tree.uses_feature(j) {
            for (&i, &v) in rows.iter().zip(base) {
                sums[i as usize] += v;
            }
            continue;
        }
        match proj {
            Projection::Cart => {
                let queries: Vec<usize> = rows.iter().map(|&i| i as usize).collect();
                let preds = projected_tree_predict(tree, data, j, &queries);
                for (&i, pred) in rows.iter().zip(&preds) {
                    sums[i as usize] += pred.value;
                }
            }
            Projection::Lundberg => {
                for (&i, &v) in rows.iter().zip(base) {
                    let x = data.row(i as usize);
                    sums[i as usize] += if tree.path_uses(x, j) { lundberg_predict(tree, j, x) } else { v };
                }
            }
        }
    }
    sums
}

fn sobol_from_sums(forest: &Forest, data: &Dataset, oob_sums: &[f64], proj_sums: &[f64]) -> Result<f64> {
    let var_y = data.response_variance();
    if !(var_y > 0.0) {
        return Err(Error::ZeroVariance);
    }
    let y = data.y();
    let mut acc = 0.0;
    let mut defined = 0usize;
    for i in 0..data.n() {
        let c = forest.oob_set(i).len();
        if c == 0 {
            continue;
        }
        defined += 1;
        let c = c as f64;
        let a = y[i] - proj_sums[i] / c;
        let b = y[i] - oob_sums[i] / c;
        acc += a * a - b * b;
    }
    if defined == 0 {
        return Err(Error::NoOobObservations);
    }
    Ok(acc / data.n() as f64 / var_y)
}

pub(crate) fn sobol_mda_with(ctx: &OobContext<'_>, j: usize, proj: Projection) -> Result<f64> {
    ctx.data.check_feature(j)?;
    let oob = ctx.table.accumulate(ctx.data.n());
    let sums = projected_sums(ctx.forest, ctx.data, &ctx.table, j, proj);
    sobol_from_sums(ctx.forest, ctx.data, &oob, &sums)
}

/// Sobol-MDA (or its weighted-traversal variant) for every covariate,
/// already divided by the response variance.
pub(crate) fn sobol_mda_all(ctx: &OobContext<'_>, lundberg: bool) -> Result<Vec<f64>> {
    let proj = if lundberg { Projection::Lundberg } else { Projection::Cart };
    let oob = ctx.table.accumulate(ctx.data.n());
    (0..ctx.data.p())
        .into_par_iter()
        .map(|j| {
            let sums = projected_sums(ctx.forest, ctx.data, &ctx.table, j, proj);
            sobol_from_sums(ctx.forest, ctx.data, &oob, &sums)
        })
        .collect()
}

fn standalone(forest: &Forest, data: &Dataset, j: usize, proj: Projection) -> Result<f64> {
    forest.check_training_data(data)?;
    data.check_feature(j)?;
    let table = forest.oob_table(data);
    let oob = table.accumulate(data.n());
    let sums = projected_sums(forest, data, &table, j, proj);
    sobol_from_sums(forest, data, &oob, &sums)
}

/// Normalized difference between the out-of-bag error of the forest
/// projected along `j` and the plain out-of-bag error.
pub fn sobol_mda(forest: &Forest, data: &Dataset, j: usize) -> Result<f64> {
    standalone(forest, data, j, Projection::Cart)
}

/// [`sobol_mda`] with the weighted traversal in place of the projected trees.
pub fn sobol_mda_lundberg(forest: &Forest, data: &Dataset, j: usize) -> Result<f64> {
    standalone(forest, data, j, Projection::Lundberg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cart::Layout;
    use crate::config::ForestConfig;
    use crate::rng::Rng;
    use rand::Rng as _;

    /// Nodes present at level `k` (depth `k`, or a shallower leaf) whose
    /// non-`j` split constraints `x` satisfies.
    fn membership(tree: &Tree, j: usize, x: &[f64], k: u32) -> Vec<u32> {
        let nodes = tree.nodes();
        let mut parent = vec![None; nodes.len()];
        for (v, n) in nodes.iter().enumerate() {
            if let Some((f, t, l, r)) = n.split() {
                parent[l as usize] = Some((v, f, t, true));
                parent[r as usize] = Some((v, f, t, false));
            }
        }
        let mut out = Vec::new();
        for (v, n) in nodes.iter().enumerate() {
            let at_level = n.depth == k || (n.is_leaf() && n.depth < k);
            if !at_level {
                continue;
            }
            let mut ok = true;
            let mut u = v;
            while let Some((par, f, t, is_left)) = parent[u] {
                if f != j && (x[f] <= t) != is_left {
                    ok = false;
                    break;
                }
                u = par;
            }
            if ok {
                out.push(v as u32);
            }
        }
        out
    }

    fn oracle(tree: &Tree, data: &Dataset, j: usize, x: &[f64]) -> ProjectedPrediction {
        let nodes = tree.nodes();
        let mut prev: Option<ProjectedPrediction> = None;
        for k in 0..=tree.depth() {
            let q = membership(tree, j, x, k);
            let mut sum = 0.0;
            let mut count = 0u32;
            for &i in tree.in_bag() {
                if membership(tree, j, data.row(i as usize), k) == q {
                    sum += data.y()[i as usize];
                    count += 1;
                }
            }
            if count == 0 {
                return prev.unwrap();
            }
            let here = ProjectedPrediction {
                value: sum / count as f64,
                level: k,
            };
            if q.iter().all(|&v| nodes[v as usize].is_leaf()) {
                return here;
            }
            prev = Some(here);
        }
        prev.unwrap()
    }

    fn random_instance(seed: u64) -> (Dataset, Tree) {
        let mut r = Rng::new(seed);
        let p = r.random_range(1..=3);
        let n = r.random_range(8..=50);
        // coarse grid so that ties and empty cells both occur
        let x: Vec<f64> = (0..n * p).map(|_| r.random_range(0..6) as f64 / 5.0).collect();
        let y: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let data = Dataset::new(x, y, p).unwrap();
        let in_bag: Vec<u32> = (0..n as u32).filter(|_| r.random_bool(0.6)).collect();
        let in_bag = if in_bag.is_empty() { vec![0] } else { in_bag };
        let leaves = r.random_range(1..=8);
        let mut layout = vec![Layout::Leaf];
        let mut open = vec![0usize];
        while layout.len() < 2 * leaves - 1 {
            let at = r.random_range(0..open.len());
            let v = open.swap_remove(at);
            let (l, rr) = (layout.len(), layout.len() + 1);
            layout[v] = Layout::Split {
                feature: r.random_range(0..p),
                threshold: r.random_range(0..5) as f64 / 5.0 + 0.1,
                left: l,
                right: rr,
            };
            layout.push(Layout::Leaf);
            layout.push(Layout::Leaf);
            open.extend([l, rr]);
        }
        let tree = Tree::assemble(&data, in_bag, &layout).unwrap();
        (data, tree)
    }

    #[test]
    fn matches_brute_force_oracle() {
        for seed in 0..200 {
            let (data, tree) = random_instance(seed);
            if tree.nodes()[0].n_in_bag == 0 {
                continue;
            }
            for j in 0..data.p() {
                let pt = ProjectedTree::build(&tree, &data, j);
                let rows: Vec<usize> = (0..data.n()).collect();
                let batch = projected_tree_predict(&tree, &data, j, &rows);
                for i in 0..data.n() {
                    let x = data.row(i);
                    let got = pt.predict(x);
                    let want = oracle(&tree, &data, j, x);
                    assert_eq!(batch[i].value.to_bits(), want.value.to_bits(), "batch: seed {seed} j {j} row {i}");
                    assert_eq!(batch[i].level, want.level, "batch: seed {seed} j {j} row {i}");
                    assert_eq!(got.value.to_bits(), want.value.to_bits(), "seed {seed} j {j} row {i}");
                    assert_eq!(got.level, want.level, "seed {seed} j {j} row {i}");
                }
            }
        }
    }

    fn toy(n: usize, seed: u64) -> Dataset {
        let mut r = Rng::new(seed);
        let x: Vec<f64> = (0..n * 3).map(|_| r.random::<f64>()).collect();
        let y = (0..n).map(|i| x[i * 3] + 2.0 * x[i * 3 + 1] * x[i * 3 + 2] + 0.1 * r.random::<f64>()).collect();
        Dataset::new(x, y, 3).unwrap()
    }

    #[test]
    fn unused_covariate_projects_to_identity() {
        let d = toy(200, 1);
        let f = Forest::fit(&d, &ForestConfig::default().with_trees(20).with_seed(2)).unwrap();
        let mut checked = 0;
        for tree in f.trees() {
            for j in 0..3 {
                if tree.uses_feature(j) {
                    continue;
                }
                let rows: Vec<usize> = tree.oob_rows(d.n()).iter().map(|&i| i as usize).collect();
                for (pred, &i) in projected_tree_predict(tree, &d, j, &rows).iter().zip(&rows) {
                    let x = d.row(i);
                    assert_eq!(pred.value.to_bits(), tree.predict(x).to_bits());
                    assert_eq!(pred.level, tree.nodes()[tree.leaf_of(x)].depth);
                    checked += 1;
                }
            }
        }
        let _ = checked;
    }

    #[test]
    fn stump_on_projected_covariate_gives_root_mean() {
        let d = Dataset::new(vec![0.1, 0.2, 0.3, 0.7, 0.8, 0.9], vec![0.0, 1.0, 2.0, 6.0, 7.0, 8.0], 1).unwrap();
        let layout = [
            Layout::Split {
                feature: 0,
                threshold: 0.5,
                left: 1,
                right: 2,
            },
            Layout::Leaf,
            Layout::Leaf,
        ];
        let tree = Tree::assemble(&d, vec![0, 1, 3, 4, 5], &layout).unwrap();
        let preds = projected_tree_predict(&tree, &d, 0, &[2]);
        assert_eq!(preds[0].value, tree.nodes()[0].value);
        assert_eq!(preds[0].level, 1);
    }

    #[test]
    fn lundberg_weights_by_in_bag_shares() {
        // 3 of 10 in-bag rows go left (output 0), 7 go right (output 1)
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = (0..10).map(|i| if i < 3 { 0.0 } else { 1.0 }).collect();
        let d = Dataset::new(x, y, 1).unwrap();
        let layout = [
            Layout::Split {
                feature: 0,
                threshold: 2.5,
                left: 1,
                right: 2,
            },
            Layout::Leaf,
            Layout::Leaf,
        ];
        let tree = Tree::assemble(&d, (0..10).collect(), &layout).unwrap();
        assert!((lundberg_predict(&tree, 0, &[0.0]) - 0.7).abs() < 1e-15);
        assert_eq!(lundberg_predict(&tree, 1, &[0.0]), 0.0);
        assert_eq!(lundberg_predict(&tree, 1, &[9.0]), 1.0);
    }

    #[test]
    fn every_row_keeps_its_own_leaf_in_its_collection() {
        for seed in 0..50 {
            let (data, tree) = random_instance(seed);
            for j in 0..data.p() {
                let pt = ProjectedTree::build(&tree, &data, j);
                for i in 0..data.n() {
                    let x = data.row(i);
                    let t = pt.trace(x);
                    let full = membership(&tree, j, x, tree.depth());
                    assert!(full.contains(&(tree.leaf_of(x) as u32)));
                    assert_eq!(t.collections[0], vec![0]);
                    assert!(t.collections.windows(2).all(|w| w[0].len() <= w[1].len()));
                    if tree.nodes()[0].n_in_bag > 0 {
                        assert!(t.prediction.level >= 1.min(tree.depth()));
                        assert!(t.cell_sizes[t.prediction.level as usize] > 0);
                    }
                }
            }
        }
    }

    #[test]
    fn constant_column_gives_zero() {
        let d = toy(200, 3);
        let mut x = d.x().to_vec();
        for i in 0..d.n() {
            x[i * 3 + 1] = 0.5;
        }
        let d = Dataset::new(x, d.y().to_vec(), 3).unwrap();
        let f = Forest::fit(&d, &ForestConfig::default().with_trees(20)).unwrap();
        assert_eq!(sobol_mda(&f, &d, 1).unwrap(), 0.0);
        assert_eq!(sobol_mda_lundberg(&f, &d, 1).unwrap(), 0.0);
        assert!(sobol_mda(&f, &d, 0).unwrap() > 0.0);
    }

    #[test]
    fn debug_dump_is_json() {
        let d = toy(100, 4);
        let f = Forest::fit(&d, &ForestConfig::default().with_trees(2)).unwrap();
        let tree = &f.trees()[0];
        let text = debug_dump(tree, &d, 0, &[0, 1]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v.as_array().unwrap().len(), 2);
        assert!(v[0]["collections"].is_array());
    }
}
