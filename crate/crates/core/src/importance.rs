//! Permutation importance: Train/Test, Breiman-Cutler and Ishwaran-Kogalur
//! mean decrease accuracy, plus the report type shared by every importance
//! measure in the crate.
//!
//! Randomness is index-addressed: the permutation applied to tree `l` when
//! scoring a covariate is drawn from `rng.stream(l)`, so the BC and IK
//! estimators see identical permutations when handed the same `rng`.
//! Estimates are never clamped at zero; noise covariates routinely come out
//! slightly negative.

use std::borrow::Cow;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cart::Tree;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, OobTable};
use crate::projected;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tt,
    Bc,
    BcNormalized,
    Ik,
    Sobol,
    Lundberg,
    Retrain,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Tt,
        Method::Bc,
        Method::BcNormalized,
        Method::Ik,
        Method::Sobol,
        Method::Lundberg,
        Method::Retrain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Tt => "tt",
            Method::Bc => "bc",
            Method::BcNormalized => "bc_normalized",
            Method::Ik => "ik",
            Method::Sobol => "sobol",
            Method::Lundberg => "lundberg",
            Method::Retrain => "retrain",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

/// Importance of every covariate for one method, averaged over repetitions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: Method,
    pub feature_names: Vec<String>,
    pub values: Vec<f64>,
    /// Standard deviation across repetitions (0 with a single repetition).
    pub std: Vec<f64>,
    /// Divisor already applied to `values`; 1.0 when none.
    pub normalizer: f64,
    pub repetitions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_rep_values: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ImportanceReport {
    /// Builds a report from `reps × p` values.
    pub fn from_reps(
        method: Method,
        feature_names: Vec<String>,
        per_rep: Vec<Vec<f64>>,
        normalizer: f64,
    ) -> Self {
        let p = feature_names.len();
        let r = per_rep.len();
        let mut values = vec![0.0; p];
        let mut std = vec![0.0; p];
        for j in 0..p {
            let col: Vec<f64> = per_rep.iter().map(|row| row[j]).collect();
            values[j] = col.iter().sum::<f64>() / r.max(1) as f64;
            std[j] = crate::data::variance(&col).sqrt();
        }
        ImportanceReport {
            method,
            feature_names,
            values,
            std,
            normalizer,
            repetitions: r,
            per_rep_values: Some(per_rep),
            warnings: Vec::new(),
        }
    }

    /// Covariate indices sorted by decreasing importance (ties: lower index first).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "feature", "value", "std"])?;
        for ((name, v), s) in self.feature_names.iter().zip(&self.values).zip(&self.std) {
            w.write_record([self.method.as_str(), name, &v.to_string(), &s.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

#[inline]
fn sq_diff(y: f64, permuted: f64, original: f64) -> f64 {
    (y - permuted) * (y - permuted) - (y - original) * (y - original)
}

/// Tree predictions on `rows` after permuting covariate `j` among them.
/// Trees that never split on `j` return `base` untouched.
fn permuted_predictions<'a>(
    tree: &Tree,
    data: &Dataset,
    rows: &[u32],
    base: &'a [f64],
    j: usize,
    mut rng: Rng,
) -> Cow<'a, [f64]> {
    if !tree.uses_feature(j) {
        return Cow::Borrowed(base);
    }
    let mut perm: Vec<u32> = rows.to_vec();
    perm.shuffle(&mut rng);
    let mut buf = vec![0.0; data.p()];
    let preds = rows
        .iter()
        .zip(&perm)
        .map(|(&i, &src)| {
            buf.copy_from_slice(data.row(i as usize));
            buf[j] = data.get(src as usize, j);
            tree.predict(&buf)
        })
        .collect();
    Cow::Owned(preds)
}

/// Forest plus cached out-of-bag predictions, shared by the OOB-based
/// importance measures.
pub struct OobContext<'a> {
    pub forest: &'a Forest,
    pub data: &'a Dataset,
    pub table: OobTable,
}

impl<'a> OobContext<'a> {
    pub fn new(forest: &'a Forest, data: &'a Dataset) -> Result<Self> {
        forest.check_training_data(data)?;
        let table = forest.oob_table(data);
        if table.rows.iter().any(|r| r.len() < 2) {
            return Err(Error::InvalidConfig(
                "every tree needs at least 2 out-of-bag rows (subsample_size <= n - 2)".into(),
            ));
        }
        Ok(OobContext {
            forest,
            data,
            table,
        })
    }

    /// Per-tree Breiman-Cutler error differences.
    pub fn bc_per_tree(&self, j: usize, rng: &Rng) -> Result<Vec<f64>> {
        self.data.check_feature(j)?;
        let y = self.data.y();
        Ok(self
            .forest
            .trees()
            .iter()
            .enumerate()
            .map(|(l, tree)| {
                let rows = &self.table.rows[l];
                let base = &self.table.preds[l];
                let perm = permuted_predictions(tree, self.data, rows, base, j, rng.stream(l as u64));
                let mut acc = 0.0;
                for k in 0..rows.len() {
                    acc += sq_diff(y[rows[k] as usize], perm[k], base[k]);
                }
                acc / rows.len() as f64
            })
            .collect())
    }

    pub fn bc(&self, j: usize, rng: &Rng) -> Result<f64> {
        let d = self.bc_per_tree(j, rng)?;
        let mut acc = 0.0;
        for v in &d {
            acc += v;
        }
        Ok(acc / d.len() as f64)
    }

    /// BC-MDA divided by the across-tree standard deviation of the per-tree
    /// differences. Returns the raw value and `false` when that deviation is
    /// zero.
    pub fn bc_normalized(&self, j: usize, rng: &Rng) -> Result<(f64, bool)> {
        let d = self.bc_per_tree(j, rng)?;
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        let sd = crate::data::variance(&d).sqrt();
        if sd > 0.0 {
            Ok((mean / sd, true))
        } else {
            Ok((mean, false))
        }
    }

    /// Ishwaran-Kogalur MDA over consecutive blocks of `block_size` trees.
    /// `block_size >= n_trees` is the plain forest-level definition;
    /// `block_size == 1` reproduces [`OobContext::bc`] bit for bit.
    pub fn ik(&self, j: usize, rng: &Rng, block_size: usize) -> Result<f64> {
        self.data.check_feature(j)?;
        let block_size = block_size.max(1);
        let trees = self.forest.trees();
        let n = self.data.n();
        let y = self.data.y();
        let mut sum_perm = vec![0.0; n];
        let mut sum_orig = vec![0.0; n];
        let mut count = vec![0u32; n];
        let mut touched: Vec<u32> = Vec::new();
        let mut total = 0.0;
        let mut n_blocks = 0usize;
        for (b, start) in (0..trees.len()).step_by(block_size).enumerate() {
            let end = (start + block_size).min(trees.len());
            for l in start..end {
                let rows = &self.table.rows[l];
                let base = &self.table.preds[l];
                let perm =
                    permuted_predictions(&trees[l], self.data, rows, base, j, rng.stream(l as u64));
                for k in 0..rows.len() {
                    let i = rows[k] as usize;
                    if count[i] == 0 {
                        touched.push(rows[k]);
                    }
                    sum_perm[i] += perm[k];
                    sum_orig[i] += base[k];
                    count[i] += 1;
                }
            }
            if touched.is_empty() {
                return Err(Error::EmptyBlock { block: b });
            }
            touched.sort_unstable();
            let mut acc = 0.0;
            for &i in &touched {
                let i = i as usize;
                let c = count[i] as f64;
                acc += sq_diff(y[i], sum_perm[i] / c, sum_orig[i] / c);
                sum_perm[i] = 0.0;
                sum_orig[i] = 0.0;
                count[i] = 0;
            }
            total += acc / touched.len() as f64;
            touched.clear();
            n_blocks += 1;
        }
        Ok(total / n_blocks as f64)
    }

    pub fn sobol(&self, j: usize) -> Result<f64> {
        projected::sobol_mda_with(self, j, projected::Projection::Cart)
    }

    pub fn lundberg(&self, j: usize) -> Result<f64> {
        projected::sobol_mda_with(self, j, projected::Projection::Lundberg)
    }
}

/// Train/Test MDA on an independent test sample with one random permutation.
pub fn tt_mda(forest: &Forest, test: &Dataset, j: usize, rng: &Rng) -> Result<f64> {
    let mut perm: Vec<usize> = (0..test.n()).collect();
    perm.shuffle(&mut rng.clone());
    tt_mda_with_permutation(forest, test, j, &perm)
}

/// Train/Test MDA with an explicit permutation of the test rows.
pub fn tt_mda_with_permutation(
    forest: &Forest,
    test: &Dataset,
    j: usize,
    perm: &[usize],
) -> Result<f64> {
    if test.p() != forest.p() {
        return Err(Error::InvalidData("test set width differs from the forest".into()));
    }
    test.check_feature(j)?;
    if perm.len() != test.n() {
        return Err(Error::InvalidData("permutation length differs from test size".into()));
    }
    let y = test.y();
    let mut buf = vec![0.0; test.p()];
    let mut acc = 0.0;
    for i in 0..test.n() {
        let original = forest.predict(test.row(i));
        buf.copy_from_slice(test.row(i));
        buf[j] = test.get(perm[i], j);
        let permuted = forest.predict(&buf);
        acc += sq_diff(y[i], permuted, original);
    }
    Ok(acc / test.n() as f64)
}

pub fn bc_mda(forest: &Forest, data: &Dataset, j: usize, rng: &Rng, normalized: bool) -> Result<f64> {
    let ctx = OobContext::new(forest, data)?;
    if normalized {
        Ok(ctx.bc_normalized(j, rng)?.0)
    } else {
        ctx.bc(j, rng)
    }
}

pub fn ik_mda(forest: &Forest, data: &Dataset, j: usize, rng: &Rng, block_size: usize) -> Result<f64> {
    OobContext::new(forest, data)?.ik(j, rng, block_size)
}

/// Settings for computing a whole [`ImportanceReport`].
#[derive(Clone, Debug)]
pub struct ImportanceOptions {
    pub repetitions: usize,
    pub seed: u64,
    /// IK block size; `None` means one block holding every tree.
    pub ik_block_size: Option<usize>,
    /// Divide BC by `2 V̂[Y]` and IK, TT by `V̂[Y]`, `2 V̂[Y]` respectively.
    pub normalize: bool,
    pub keep_per_rep: bool,
}

impl Default for ImportanceOptions {
    fn default() -> Self {
        ImportanceOptions {
            repetitions: 1,
            seed: 0,
            ik_block_size: None,
            normalize: false,
            keep_per_rep: true,
        }
    }
}

/// Computes one OOB-based or projected importance measure for every
/// covariate. `Tt` needs a test set and `Retrain` needs a refit; use
/// [`tt_report`] and [`crate::retrain::retrain_report`] for those.
pub fn oob_report(ctx: &OobContext<'_>, method: Method, opts: &ImportanceOptions) -> Result<ImportanceReport> {
    let p = ctx.data.p();
    let var_y = ctx.data.response_variance();
    let root = Rng::new(opts.seed);
    let reps = opts.repetitions.max(1);
    let mut warnings = Vec::new();
    let per_rep: Vec<Vec<f64>> = match method {
        Method::Bc | Method::Ik | Method::BcNormalized => {
            let mut out = Vec::with_capacity(reps);
            for r in 0..reps {
                let rows: Vec<(f64, bool)> = (0..p)
                    .into_par_iter()
                    .map(|j| {
                        let rng = root.substream(&[r as u64, j as u64]);
                        match method {
                            Method::Bc => ctx.bc(j, &rng).map(|v| (v, true)),
                            Method::BcNormalized => ctx.bc_normalized(j, &rng),
                            _ => ctx
                                .ik(j, &rng, opts.ik_block_size.unwrap_or(usize::MAX))
                                .map(|v| (v, true)),
                        }
                    })
                    .collect::<Result<_>>()?;
                for (j, (_, ok)) in rows.iter().enumerate() {
                    if !ok {
                        warnings.push(format!(
                            "repetition {r}, {}: per-tree differences have zero spread, value left unnormalized",
                            ctx.data.feature_names()[j]
                        ));
                    }
                }
                out.push(rows.into_iter().map(|v| v.0).collect());
            }
            out
        }
        Method::Sobol | Method::Lundberg => {
            // deterministic given the forest: one pass is every repetition
            vec![projected::sobol_mda_all(ctx, method == Method::Lundberg)?]
        }
        Method::Tt | Method::Retrain => {
            return Err(Error::InvalidConfig(format!(
                "{method} is not an out-of-bag method"
            )))
        }
    };
    let normalizer = match method {
        Method::Sobol | Method::Lundberg => var_y,
        Method::Bc if opts.normalize => 2.0 * var_y,
        Method::Ik if opts.normalize => var_y,
        _ => 1.0,
    };
    let scale = match method {
        Method::Bc | Method::Ik => normalizer,
        _ => 1.0,
    };
    let per_rep = per_rep
        .into_iter()
        .map(|row| row.into_iter().map(|v| v / scale).collect())
        .collect();
    let mut report = ImportanceReport::from_reps(method, ctx.data.feature_names().to_vec(), per_rep, normalizer);
    report.warnings = warnings;
    if !opts.keep_per_rep {
        report.per_rep_values = None;
    }
    Ok(report)
}

/// Train/Test MDA for every covariate.
pub fn tt_report(forest: &Forest, test: &Dataset, opts: &ImportanceOptions) -> Result<ImportanceReport> {
    if test.n() < 2 {
        return Err(Error::InvalidData("test set needs at least 2 rows".into()));
    }
    let root = Rng::new(opts.seed);
    let reps = opts.repetitions.max(1);
    let per_rep = (0..reps)
        .map(|r| {
            (0..test.p())
                .into_par_iter()
                .map(|j| tt_mda(forest, test, j, &root.substream(&[r as u64, j as u64])))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let normalizer = if opts.normalize { 2.0 * test.response_variance() } else { 1.0 };
    let per_rep = per_rep
        .into_iter()
        .map(|row| row.into_iter().map(|v| v / normalizer).collect())
        .collect();
    let mut report = ImportanceReport::from_reps(Method::Tt, test.feature_names().to_vec(), per_rep, normalizer);
    if !opts.keep_per_rep {
        report.per_rep_values = None;
    }
    Ok(report)
}
