//! Forests of subsampled CART trees and their out-of-bag estimates.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::{draw_subsample, grow_tree, Tree};
use crate::config::ForestConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    config: ForestConfig,
    n: usize,
    p: usize,
    /// For each training row `i`, the trees for which `i` is out-of-bag.
    oob_sets: Vec<Vec<u32>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OobPrediction {
    pub value: f64,
    /// False when the row is in-bag for every tree; `value` is then 0.
    pub defined: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OobError {
    pub mse: f64,
    /// Rows with at least one out-of-bag tree.
    pub n_defined: usize,
}

/// On-disk form. Out-of-bag sets are rebuilt on load.
#[derive(Serialize, Deserialize)]
struct ForestDoc {
    config: ForestConfig,
    n: usize,
    p: usize,
    trees: Vec<Tree>,
}

/// Each tree's out-of-bag rows with the tree's predictions on them.
#[derive(Clone, Debug)]
pub struct OobTable {
    pub rows: Vec<Vec<u32>>,
    pub preds: Vec<Vec<f64>>,
}

impl Forest {
    pub fn fit(data: &Dataset, config: &ForestConfig) -> Result<Forest> {
        let params = config.resolve(data.n(), data.p())?;
        let root = Rng::new(config.seed);
        let trees: Vec<Tree> = (0..config.n_trees)
            .into_par_iter()
            .map(|l| {
                let mut rng = root.stream(l as u64);
                let in_bag = draw_subsample(data.n(), params.subsample_size, &mut rng);
                grow_tree(data, in_bag, &params, &mut rng)
            })
            .collect();
        Ok(Self::from_trees(trees, config.clone(), data.n(), data.p()))
    }

    pub fn from_trees(trees: Vec<Tree>, config: ForestConfig, n: usize, p: usize) -> Forest {
        let mut oob_sets = vec![Vec::new(); n];
        for (l, tree) in trees.iter().enumerate() {
            for i in tree.oob_rows(n) {
                oob_sets[i as usize].push(l as u32);
            }
        }
        Forest {
            trees,
            config,
            n,
            p,
            oob_sets,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    /// Training sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Trees for which row `i` is out-of-bag, ascending.
    pub fn oob_set(&self, i: usize) -> &[u32] {
        &self.oob_sets[i]
    }

    pub fn check_training_data(&self, data: &Dataset) -> Result<()> {
        if data.n() != self.n || data.p() != self.p {
            return Err(Error::InvalidData(format!(
                "forest was trained on {} x {} data, got {} x {}",
                self.n,
                self.p,
                data.n(),
                data.p()
            )));
        }
        Ok(())
    }

    /// Mean of the tree predictions.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn predict_rows(&self, data: &Dataset) -> Vec<f64> {
        (0..data.n()).into_par_iter().map(|i| self.predict(data.row(i))).collect()
    }

    pub fn mse(&self, data: &Dataset) -> f64 {
        let preds = self.predict_rows(data);
        preds.iter().zip(data.y()).map(|(p, y)| (y - p).powi(2)).sum::<f64>() / data.n() as f64
    }

    /// Average over the trees of `oob_set(i)` of their predictions at `X_i`.
    pub fn oob_predict(&self, data: &Dataset, i: usize) -> OobPrediction {
        let set = &self.oob_sets[i];
        if set.is_empty() {
            return OobPrediction {
                value: 0.0,
                defined: false,
            };
        }
        let x = data.row(i);
        let sum: f64 = set.iter().map(|&l| self.trees[l as usize].predict(x)).sum();
        OobPrediction {
            value: sum / set.len() as f64,
            defined: true,
        }
    }

    /// Per-tree out-of-bag predictions.
    pub fn oob_table(&self, data: &Dataset) -> OobTable {
        let (rows, preds) = self
            .trees
            .par_iter()
            .map(|t| {
                let rows = t.oob_rows(self.n);
                let preds = rows.iter().map(|&i| t.predict(data.row(i as usize))).collect();
                (rows, preds)
            })
            .unzip();
        OobTable { rows, preds }
    }

    /// Out-of-bag forest predictions for every training row.
    pub fn oob_predictions(&self, data: &Dataset) -> Vec<OobPrediction> {
        let table = self.oob_table(data);
        let sums = table.accumulate(self.n);
        sums.iter()
            .zip(&self.oob_sets)
            .map(|(&s, set)| {
                if set.is_empty() {
                    OobPrediction {
                        value: 0.0,
                        defined: false,
                    }
                } else {
                    OobPrediction {
                        value: s / set.len() as f64,
                        defined: true,
                    }
                }
            })
            .collect()
    }

    /// Mean squared out-of-bag error over rows with a defined estimate.
    pub fn oob_error(&self, data: &Dataset) -> Result<OobError> {
        self.check_training_data(data)?;
        let preds = self.oob_predictions(data);
        let mut sum = 0.0;
        let mut count = 0usize;
        for (p, y) in preds.iter().zip(data.y()) {
            if p.defined {
                sum += (y - p.value).powi(2);
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::NoOobObservations);
        }
        Ok(OobError {
            mse: sum / count as f64,
            n_defined: count,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ForestDoc {
            config: self.config.clone(),
            n: self.n,
            p: self.p,
            trees: self.trees.clone(),
        };
        Ok(serde_json::to_string(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let doc: ForestDoc = serde_json::from_str(text)?;
        Ok(Self::from_trees(doc.trees, doc.config, doc.n, doc.p))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Forest> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

impl OobTable {
    /// Sum over trees, in tree order, of each row's out-of-bag predictions.
    pub fn accumulate(&self, n: usize) -> Vec<f64> {
        let mut sums = vec![0.0; n];
        for (rows, preds) in self.rows.iter().zip(&self.preds) {
            for (&i, &v) in rows.iter().zip(preds) {
                sums[i as usize] += v;
            }
        }
        sums
    }
}
