//! Recursive feature elimination with repeated k-fold cross-validation.
//!
//! The reported elimination order comes from running the elimination on the
//! full sample. The error curve is computed the other way round: every
//! `(repeat, fold)` pair runs its own elimination on the training folds and
//! scores the held-out fold at each model size, so no held-out row ever
//! influences the forests or importances it is scored against. Out-of-bag
//! errors are deliberately not used for the curve: they are optimistic once
//! the covariates have been selected on the same data.

use std::io::Write;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ForestConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::importance::{Method, OobContext};
use crate::rng::Rng;

/// Importance of each covariate of a forest fitted on `data`.
pub type ImportanceFn<'a> = dyn Fn(&Forest, &Dataset, &Rng) -> Result<Vec<f64>> + Sync + 'a;

#[derive(Clone, Debug)]
pub struct RfeOptions {
    pub folds: usize,
    pub repeats: usize,
    /// Drop `ceil(5%)` of the remaining covariates per step instead of one.
    pub batch: bool,
}

impl Default for RfeOptions {
    fn default() -> Self {
        RfeOptions {
            folds: 10,
            repeats: 1,
            batch: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RfeStep {
    pub n_features: usize,
    /// Covariates removed after this step, in the full-sample run.
    pub removed: Vec<usize>,
    pub cv_mse_mean: f64,
    pub cv_mse_std: f64,
    /// `1 - cv_mse_mean / V̂[Y]`.
    pub explained_variance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RfeTrace {
    pub method: Option<Method>,
    pub folds: usize,
    pub repeats: usize,
    /// Original covariate indices, first removed first.
    pub elimination_order: Vec<usize>,
    pub steps: Vec<RfeStep>,
    #[serde(skip)]
    pub feature_names: Vec<String>,
}

impl RfeTrace {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "step",
            "removed_feature",
            "n_features",
            "cv_mse_mean",
            "cv_mse_std",
            "explained_variance",
        ])?;
        for (s, step) in self.steps.iter().enumerate() {
            let removed: Vec<&str> = step.removed.iter().map(|&j| self.feature_names[j].as_str()).collect();
            w.write_record([
                (s + 1).to_string(),
                removed.join(";"),
                step.n_features.to_string(),
                step.cv_mse_mean.to_string(),
                step.cv_mse_std.to_string(),
                step.explained_variance.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// The importance measures usable for elimination.
pub fn importance_fn(method: Method) -> Result<Box<ImportanceFn<'static>>> {
    let f: Box<ImportanceFn<'static>> = match method {
        Method::Bc => Box::new(|f, d, r| {
            let ctx = OobContext::new(f, d)?;
            (0..d.p()).map(|j| ctx.bc(j, &r.stream(j as u64))).collect()
        }),
        Method::Ik => Box::new(|f, d, r| {
            let ctx = OobContext::new(f, d)?;
            (0..d.p()).map(|j| ctx.ik(j, &r.stream(j as u64), usize::MAX)).collect()
        }),
        Method::Sobol => Box::new(|f, d, _| {
            let ctx = OobContext::new(f, d)?;
            (0..d.p()).map(|j| ctx.sobol(j)).collect()
        }),
        Method::Retrain => Box::new(|f, d, _| {
            (0..d.p())
                .map(|j| crate::retrain::retrain_sobol_with(f, d, j, 0))
                .collect()
        }),
        other => {
            return Err(Error::InvalidConfig(format!(
                "{other} cannot drive elimination; use bc, ik, sobol or retrain"
            )))
        }
    };
    Ok(f)
}

/// Model sizes visited by the elimination, largest first.
fn schedule(p: usize, batch: bool) -> Vec<usize> {
    let mut sizes = vec![p];
    let mut k = p;
    while k > 1 {
        let drop = if batch { (k as f64 * 0.05).ceil() as usize } else { 1 };
        k -= drop.min(k - 1);
        sizes.push(k);
    }
    sizes
}

/// Positions (within `values`) of the `count` smallest values; ties go to
/// the lower position.
fn smallest(values: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}

/// One elimination run on `train`. Calls `score(step, forest, columns)`
/// with the forest of every step before anything is removed. Returns the
/// original indices removed at each step.
fn eliminate(
    train: &Dataset,
    config: &ForestConfig,
    sizes: &[usize],
    importance: &ImportanceFn<'_>,
    rng: &Rng,
    mut score: impl FnMut(usize, &Forest, &[usize]) -> Result<()>,
) -> Result<Vec<Vec<usize>>> {
    let mut current: Vec<usize> = (0..train.p()).collect();
    let mut removed = Vec::with_capacity(sizes.len());
    for (step, &size) in sizes.iter().enumerate() {
        debug_assert_eq!(current.len(), size);
        let data = train.select_columns(&current)?;
        let cfg = ForestConfig {
            seed: rng.substream(&[step as u64, 0]).seed(),
            mtry: config.mtry.map(|m| m.min(size)),
            ..config.clone()
        };
        let forest = Forest::fit(&data, &cfg)?;
        score(step, &forest, &current)?;
        let out = match sizes.get(step + 1) {
            None => vec![0],
            Some(&next) => {
                let values = importance(&forest, &data, &rng.substream(&[step as u64, 1]))?;
                smallest(&values, size - next)
            }
        };
        let mut gone: Vec<usize> = out.iter().map(|&k| current[k]).collect();
        gone.sort_unstable();
        current.retain(|c| !gone.contains(c));
        removed.push(gone);
    }
    Ok(removed)
}

/// Row indices of each fold for repetition `repeat`.
pub fn fold_assignment(n: usize, folds: usize, repeat: usize, rng: &Rng) -> Vec<Vec<usize>> {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng.substream(&[1, repeat as u64]));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in rows.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Recursive feature elimination driven by `method`.
pub fn rfe(data: &Dataset, config: &ForestConfig, method: Method, opts: &RfeOptions, rng: &Rng) -> Result<RfeTrace> {
    let f = importance_fn(method)?;
    let mut trace = rfe_with(data, config, f.as_ref(), opts, rng)?;
    trace.method = Some(method);
    Ok(trace)
}

/// The elimination order [`rfe`] would report, without the cross-validated
/// error curve.
pub fn elimination_order(
    data: &Dataset,
    config: &ForestConfig,
    method: Method,
    batch: bool,
    rng: &Rng,
) -> Result<Vec<usize>> {
    let f = importance_fn(method)?;
    let sizes = schedule(data.p(), batch);
    Ok(eliminate(data, config, &sizes, f.as_ref(), &rng.stream(0), |_, _, _| Ok(()))?.concat())
}

/// [`rfe`] with an arbitrary importance function.
pub fn rfe_with(
    data: &Dataset,
    config: &ForestConfig,
    importance: &ImportanceFn<'_>,
    opts: &RfeOptions,
    rng: &Rng,
) -> Result<RfeTrace> {
    let n = data.n();
    if opts.folds < 2 {
        return Err(Error::InvalidConfig("rfe needs at least 2 folds".into()));
    }
    if n / opts.folds < 2 {
        return Err(Error::InvalidConfig(format!(
            "{} folds of {n} rows leave a fold with fewer than 2 rows",
            opts.folds
        )));
    }
    let var_y = data.response_variance();
    let sizes = schedule(data.p(), opts.batch);
    let repeats = opts.repeats.max(1);

    let full = eliminate(data, config, &sizes, importance, &rng.stream(0), |_, _, _| Ok(()))?;

    let jobs: Vec<(usize, usize)> = (0..repeats)
        .flat_map(|r| (0..opts.folds).map(move |k| (r, k)))
        .collect();
    let errors: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(r, k)| {
            let folds = fold_assignment(n, opts.folds, r, rng);
            let held = &folds[k];
            let train_rows: Vec<usize> = (0..n).filter(|i| held.binary_search(i).is_err()).collect();
            let train = data.subset_rows(&train_rows)?;
            let test = data.subset_rows(held)?;
            let mut mse = vec![0.0; sizes.len()];
            let fit_rng = rng.substream(&[2, r as u64, k as u64]);
            eliminate(&train, config, &sizes, importance, &fit_rng, |step, forest, cols| {
                let test = test.select_columns(cols)?;
                mse[step] = forest.mse(&test);
                Ok(())
            })?;
            Ok(mse)
        })
        .collect::<Result<_>>()?;

    let steps = sizes
        .iter()
        .enumerate()
        .map(|(s, &size)| {
            let col: Vec<f64> = errors.iter().map(|e| e[s]).collect();
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            let std = if col.len() > 1 { crate::data::variance(&col).sqrt() } else { 0.0 };
            RfeStep {
                n_features: size,
                removed: full[s].clone(),
                cv_mse_mean: mean,
                cv_mse_std: std,
                explained_variance: 1.0 - mean / var_y,
            }
        })
        .collect();
    Ok(RfeTrace {
        method: None,
        folds: opts.folds,
        repeats,
        elimination_order: full.concat(),
        steps,
        feature_names: data.feature_names().to_vec(),
    })
}
