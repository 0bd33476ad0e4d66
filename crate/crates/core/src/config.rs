use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Forest hyper-parameters. `None` fields take data-dependent defaults,
/// see [`ForestConfig::resolve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    /// Number of trees.
    pub n_trees: usize,
    /// Rows drawn without replacement per tree. Default `ceil(0.632 n)`.
    pub subsample_size: Option<usize>,
    /// Leaf budget per tree. Default: unbounded (the subsample size).
    pub max_leaves: Option<usize>,
    /// Minimum in-bag rows in each child of a split.
    pub min_node_size: usize,
    /// Candidate covariates per node. Default `max(ceil(p / 3), 1)`.
    pub mtry: Option<usize>,
    /// Minimum child fraction of the parent's rows; 0 disables.
    pub gamma: f64,
    /// Probability that a node draws a single candidate covariate.
    pub delta: f64,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 300,
            subsample_size: None,
            max_leaves: None,
            min_node_size: 5,
            mtry: None,
            gamma: 0.0,
            delta: 0.0,
            seed: 0,
        }
    }
}

/// A [`ForestConfig`] with every default filled in for a given `(n, p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeParams {
    pub subsample_size: usize,
    pub max_leaves: usize,
    pub min_node_size: usize,
    pub mtry: usize,
    pub gamma: f64,
    pub delta: f64,
}

impl ForestConfig {
    pub fn with_trees(mut self, n_trees: usize) -> Self {
        self.n_trees = n_trees;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn resolve(&self, n: usize, p: usize) -> Result<TreeParams> {
        let mut problems = Vec::new();
        if self.n_trees == 0 {
            problems.push("n_trees must be positive".to_string());
        }
        let subsample_size = self
            .subsample_size
            .unwrap_or_else(|| ((0.632 * n as f64).ceil() as usize).max(1));
        if subsample_size == 0 || subsample_size > n {
            problems.push(format!("subsample_size {subsample_size} must lie in [1, {n}]"));
        }
        let max_leaves = self.max_leaves.unwrap_or(subsample_size.max(1));
        if max_leaves == 0 {
            problems.push("max_leaves must be positive".to_string());
        }
        if self.min_node_size == 0 {
            problems.push("min_node_size must be positive".to_string());
        }
        let mtry = self.mtry.unwrap_or_else(|| p.div_ceil(3).max(1));
        if mtry == 0 || mtry > p {
            problems.push(format!("mtry {mtry} must lie in [1, {p}]"));
        }
        if !(0.0..0.5).contains(&self.gamma) {
            problems.push(format!("gamma {} must lie in [0, 0.5)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.delta) {
            problems.push(format!("delta {} must lie in [0, 1]", self.delta));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidConfig(problems.join("; ")));
        }
        Ok(TreeParams {
            subsample_size,
            max_leaves,
            min_node_size: self.min_node_size,
            mtry,
            gamma: self.gamma,
            delta: self.delta,
        })
    }

    /// Like [`resolve`](Self::resolve), additionally requiring at least two
    /// out-of-bag rows per tree so that permutations are possible.
    pub fn resolve_for_oob(&self, n: usize, p: usize) -> Result<TreeParams> {
        let params = self.resolve(n, p)?;
        if params.subsample_size + 2 > n {
            return Err(Error::InvalidConfig(format!(
                "subsample_size {} leaves fewer than 2 out-of-bag rows (n = {n})",
                params.subsample_size
            )));
        }
        Ok(params)
    }
}
