//! Gaussian-covariate simulators with a known regression function.

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::analytic::{analytic_example1, analytic_linear, to_matrix, AnalyticDecomposition, Example1Params};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Size of the pilot sample used to estimate `V[m]` when no closed form exists.
pub const PILOT_SIZE: usize = 100_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressionFn {
    /// `alpha X1 X2 1{X3 > 0} + beta X4 X5 1{X3 < 0}`; covariates past the
    /// fifth are pure noise.
    Example1 { alpha: f64, beta: f64 },
    /// `2 X1 + X41 + X81 + X121 + X161`.
    Example2,
    Linear { coefs: Vec<f64> },
}

impl RegressionFn {
    fn min_dim(&self) -> usize {
        match self {
            RegressionFn::Example1 { .. } => 5,
            RegressionFn::Example2 => 161,
            RegressionFn::Linear { coefs } => coefs.len(),
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            RegressionFn::Example1 { alpha, beta } => {
                let mut m = 0.0;
                if x[2] > 0.0 {
                    m += alpha * x[0] * x[1];
                }
                if x[2] < 0.0 {
                    m += beta * x[3] * x[4];
                }
                m
            }
            RegressionFn::Example2 => 2.0 * x[0] + x[40] + x[80] + x[120] + x[160],
            RegressionFn::Linear { coefs } => coefs.iter().zip(x).map(|(b, v)| b * v).sum(),
        }
    }
}

/// Centred Gaussian covariates, a regression function and a noise share
/// `V[eps] / V[Y]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianSpec {
    pub p: usize,
    pub cov: Vec<Vec<f64>>,
    pub regression_fn: RegressionFn,
    pub noise_ratio: f64,
}

impl GaussianSpec {
    /// Interaction model with `extra` independent standard-normal noise covariates appended.
    pub fn example1(params: &Example1Params, extra: usize) -> Result<Self> {
        params.validate()?;
        let p = 5 + extra;
        let mut cov = vec![vec![0.0; p]; p];
        for (a, row) in params.covariance().into_iter().enumerate() {
            cov[a][..5].copy_from_slice(&row);
        }
        for j in 5..p {
            cov[j][j] = 1.0;
        }
        let spec = GaussianSpec {
            p,
            cov,
            regression_fn: RegressionFn::Example1 {
                alpha: params.alpha,
                beta: params.beta,
            },
            noise_ratio: params.noise_ratio,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Five blocks of 40 unit-variance covariates, correlation 0.8 within a block.
    pub fn example2(noise_ratio: f64) -> Result<Self> {
        Self::block_linear(RegressionFn::Example2, 5, 40, 0.8, noise_ratio)
    }

    pub fn block_linear(
        regression_fn: RegressionFn,
        blocks: usize,
        block_size: usize,
        rho: f64,
        noise_ratio: f64,
    ) -> Result<Self> {
        let p = blocks * block_size;
        let cov = (0..p)
            .map(|a| {
                (0..p)
                    .map(|b| match (a == b, a / block_size == b / block_size) {
                        (true, _) => 1.0,
                        (false, true) => rho,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        let spec = GaussianSpec {
            p,
            cov,
            regression_fn,
            noise_ratio,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `Y = coefs . X + eps` with independent standard-normal covariates.
    pub fn independent_linear(coefs: Vec<f64>, noise_ratio: f64) -> Result<Self> {
        let p = coefs.len();
        let cov = (0..p)
            .map(|a| (0..p).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect();
        let spec = GaussianSpec {
            p,
            cov,
            regression_fn: RegressionFn::Linear { coefs },
            noise_ratio,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: GaussianSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.cholesky()?;
        if !(0.0..1.0).contains(&self.noise_ratio) {
            return Err(Error::InvalidConfig(format!(
                "noise_ratio must lie in [0, 1), got {}",
                self.noise_ratio
            )));
        }
        if self.p < self.regression_fn.min_dim() {
            return Err(Error::InvalidConfig(format!(
                "regression function needs at least {} covariates, spec has {}",
                self.regression_fn.min_dim(),
                self.p
            )));
        }
        if let RegressionFn::Linear { coefs } = &self.regression_fn {
            if coefs.len() != self.p || coefs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidConfig("linear coefficients must be p finite values".into()));
            }
        }
        Ok(())
    }

    fn cholesky(&self) -> Result<DMatrix<f64>> {
        if self.p == 0 {
            return Err(Error::InvalidConfig("p must be positive".into()));
        }
        let m = to_matrix(&self.cov, self.p)?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("covariance has non-finite entries".into()));
        }
        Ok(m.cholesky().ok_or(Error::NotPositiveDefinite)?.unpack())
    }

    fn linear_coefs(&self) -> Option<Vec<f64>> {
        match &self.regression_fn {
            RegressionFn::Linear { coefs } => Some(coefs.clone()),
            RegressionFn::Example2 => {
                let mut c = vec![0.0; self.p];
                c[0] = 2.0;
                for j in [40, 80, 120, 160] {
                    c[j] = 1.0;
                }
                Some(c)
            }
            RegressionFn::Example1 { .. } => None,
        }
    }

    fn example1_params(&self) -> Option<Example1Params> {
        let RegressionFn::Example1 { alpha, beta } = self.regression_fn else {
            return None;
        };
        let c = &self.cov;
        let sigma = [0, 1, 2, 3, 4].map(|j| c[j][j].sqrt());
        // the closed forms need (X1, X2), X3 and (X4, X5) mutually independent
        // and independent of any further covariates
        let allowed = |a: usize, b: usize| a == b || matches!((a.min(b), a.max(b)), (0, 1) | (3, 4));
        for a in 0..self.p {
            for b in 0..self.p {
                if (a < 5 || b < 5) && !allowed(a, b) && c[a][b] != 0.0 {
                    return None;
                }
            }
        }
        Some(Example1Params {
            alpha,
            beta,
            sigma,
            rho12: c[0][1] / (sigma[0] * sigma[1]),
            rho45: c[3][4] / (sigma[3] * sigma[4]),
            noise_ratio: self.noise_ratio,
        })
    }

    /// Closed-form decomposition, when one is available for this spec.
    /// Covariates without an effect get all-zero terms.
    pub fn analytic(&self) -> Option<AnalyticDecomposition> {
        if let Some(coefs) = self.linear_coefs() {
            return analytic_linear(&coefs, &self.cov, self.noise_ratio).ok();
        }
        let params = self.example1_params()?;
        let mut d = analytic_example1(&params).ok()?;
        let zero = crate::analytic::CovariateTerms {
            mda_star: 0.0,
            mda1: 0.0,
            mda2: 0.0,
            mda3: 0.0,
            st: 0.0,
            st_mg: 0.0,
        };
        d.terms.resize(self.p, zero);
        Some(d)
    }

    /// `V[m(X)]`: closed form when available, else a pilot-sample estimate.
    pub fn var_m(&self, rng: &Rng) -> Result<f64> {
        if let Some(d) = self.analytic() {
            return Ok(d.var_m);
        }
        let l = self.cholesky()?;
        let mut r = rng.stream(u64::MAX);
        let mut x = vec![0.0; self.p];
        let m: Vec<f64> = (0..PILOT_SIZE)
            .map(|_| {
                draw_row(&l, &mut r, &mut x);
                self.regression_fn.evaluate(&x)
            })
            .collect();
        Ok(crate::data::variance(&m))
    }
}

fn draw_row(l: &DMatrix<f64>, rng: &mut Rng, out: &mut [f64]) {
    let p = out.len();
    let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
    for a in 0..p {
        out[a] = (0..=a).map(|b| l[(a, b)] * z[b]).sum();
    }
}

/// Draws `n` rows `(X, m(X) + eps)`; the noise variance is set so that
/// `V[eps] / (V[m] + V[eps]) = noise_ratio`.
pub fn sample_gaussian(spec: &GaussianSpec, n: usize, rng: &mut Rng) -> Result<Dataset> {
    spec.validate()?;
    let var_m = spec.var_m(rng)?;
    let f = |x: &[f64]| spec.regression_fn.evaluate(x);
    sample_with(spec, var_m, &f, n, rng)
}

/// Like [`sample_gaussian`] with an arbitrary regression function; the
/// spec's own function is ignored and `V[m]` comes from a pilot sample.
pub fn sample_gaussian_custom(
    spec: &GaussianSpec,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    n: usize,
    rng: &mut Rng,
) -> Result<Dataset> {
    let l = spec.cholesky()?;
    if !(0.0..1.0).contains(&spec.noise_ratio) {
        return Err(Error::InvalidConfig("noise_ratio must lie in [0, 1)".into()));
    }
    let mut r = rng.stream(u64::MAX);
    let mut x = vec![0.0; spec.p];
    let m: Vec<f64> = (0..PILOT_SIZE)
        .map(|_| {
            draw_row(&l, &mut r, &mut x);
            f(&x)
        })
        .collect();
    sample_with(spec, crate::data::variance(&m), f, n, rng)
}

fn sample_with(
    spec: &GaussianSpec,
    var_m: f64,
    f: &dyn Fn(&[f64]) -> f64,
    n: usize,
    rng: &mut Rng,
) -> Result<Dataset> {
    let l = spec.cholesky()?;
    let p = spec.p;
    let sd_eps = (spec.noise_ratio / (1.0 - spec.noise_ratio) * var_m).sqrt();
    let mut x = vec![0.0; n * p];
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let row = &mut x[i * p..(i + 1) * p];
        draw_row(&l, rng, row);
        let eps: f64 = rng.sample(StandardNormal);
        y.push(f(row) + sd_eps * eps);
    }
    Dataset::new(x, y, p)
}
