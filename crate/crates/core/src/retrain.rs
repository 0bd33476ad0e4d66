//! Brute-force total Sobol index: refit the forest without a covariate and
//! compare out-of-bag errors.

use rayon::prelude::*;

use crate::config::ForestConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::importance::{ImportanceOptions, ImportanceReport, Method};
use crate::rng::Rng;

/// Config of the forest refit without covariate `j`, seeded from its own stream.
fn reduced_config(config: &ForestConfig, p: usize, j: usize, rep: u64) -> ForestConfig {
    let seed = Rng::new(config.seed).substream(&[rep, j as u64 + 1]).seed();
    ForestConfig {
        mtry: config.mtry.map(|m| m.min(p - 1)),
        seed,
        ..config.clone()
    }
}

fn check(data: &Dataset, j: usize) -> Result<f64> {
    data.check_feature(j)?;
    if data.p() < 2 {
        return Err(Error::InvalidData("retraining without a covariate needs p >= 2".into()));
    }
    let var_y = data.response_variance();
    if !(var_y > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(var_y)
}

fn reduced_error(data: &Dataset, config: &ForestConfig, j: usize, rep: u64) -> Result<f64> {
    let reduced = data.drop_column(j)?;
    let cfg = reduced_config(config, data.p(), j, rep);
    Ok(Forest::fit(&reduced, &cfg)?.oob_error(&reduced)?.mse)
}

/// `(OOB error without j - OOB error with j) / V̂[Y]`, fitting both forests.
pub fn retrain_sobol(data: &Dataset, config: &ForestConfig, j: usize) -> Result<f64> {
    let var_y = check(data, j)?;
    let full = Forest::fit(data, config)?.oob_error(data)?.mse;
    Ok((reduced_error(data, config, j, 0)? - full) / var_y)
}

/// Like [`retrain_sobol`], reusing an already fitted forest on `data`.
pub fn retrain_sobol_with(forest: &Forest, data: &Dataset, j: usize, rep: u64) -> Result<f64> {
    let var_y = check(data, j)?;
    let full = forest.oob_error(data)?.mse;
    Ok((reduced_error(data, forest.config(), j, rep)? - full) / var_y)
}

/// Retrain estimate for every covariate. Each repetition refits the reduced
/// forests with fresh seeds; the full forest is shared.
pub fn retrain_report(forest: &Forest, data: &Dataset, opts: &ImportanceOptions) -> Result<ImportanceReport> {
    forest.check_training_data(data)?;
    let var_y = data.response_variance();
    let per_rep = (0..opts.repetitions.max(1) as u64)
        .map(|r| {
            (0..data.p())
                .into_par_iter()
                .map(|j| retrain_sobol_with(forest, data, j, r))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut report = ImportanceReport::from_reps(Method::Retrain, data.feature_names().to_vec(), per_rep, var_y);
    if !opts.keep_per_rep {
        report.per_rep_values = None;
    }
    Ok(report)
}
