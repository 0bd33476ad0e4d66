//! Closed-form sensitivity quantities for Gaussian covariates.
//!
//! For each covariate `j` the permutation-MDA limit splits as
//! `mda_star = mda1 + mda2 + mda3`, with `mda1 = V[Y] ST` (total Sobol
//! index), `mda2 = V[Y] ST_mg` (marginal total Sobol index) and `mda3`
//! the dependence term, which vanishes for independent covariates. The
//! Ishwaran-Kogalur MDA drops the `mda2` term.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateTerms {
    pub mda_star: f64,
    pub mda1: f64,
    pub mda2: f64,
    pub mda3: f64,
    pub st: f64,
    pub st_mg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticDecomposition {
    pub var_m: f64,
    pub var_y: f64,
    pub terms: Vec<CovariateTerms>,
}

impl AnalyticDecomposition {
    fn from_parts(var_m: f64, noise_ratio: f64, parts: Vec<(f64, f64, f64, f64)>) -> Self {
        let var_y = var_m / (1.0 - noise_ratio);
        let terms = parts
            .into_iter()
            .map(|(mda_star, mda1, mda2, mda3)| CovariateTerms {
                mda_star,
                mda1,
                mda2,
                mda3,
                st: mda1 / var_y,
                st_mg: mda2 / var_y,
            })
            .collect();
        AnalyticDecomposition { var_m, var_y, terms }
    }

    /// Limit of the Breiman-Cutler (and Train/Test) MDA divided by `2 V[Y]`.
    pub fn bc_normalized(&self, j: usize) -> f64 {
        self.terms[j].mda_star / (2.0 * self.var_y)
    }

    /// Limit of the Ishwaran-Kogalur MDA divided by `V[Y]`.
    pub fn ik_normalized(&self, j: usize) -> f64 {
        (self.terms[j].mda1 + self.terms[j].mda3) / self.var_y
    }

    pub fn st(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.st).collect()
    }

    pub fn write_table<W: std::io::Write>(&self, mut w: W, names: &[String]) -> std::io::Result<()> {
        writeln!(w, "# V[m] = {:.6}, V[Y] = {:.6}", self.var_m, self.var_y)?;
        writeln!(
            w,
            "{:<10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>12} {:>12}",
            "feature", "mda_star", "mda1", "mda2", "mda3", "st", "st_mg", "bc/2V[Y]", "ik/V[Y]"
        )?;
        for (j, t) in self.terms.iter().enumerate() {
            let name = names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1));
            writeln!(
                w,
                "{:<10} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>12.4} {:>12.4}",
                name,
                t.mda_star,
                t.mda1,
                t.mda2,
                t.mda3,
                t.st,
                t.st_mg,
                self.bc_normalized(j),
                self.ik_normalized(j)
            )?;
        }
        Ok(())
    }
}

/// Parameters of the interaction model
/// `m(X) = alpha X1 X2 1{X3 > 0} + beta X4 X5 1{X3 < 0}`
/// with Gaussian covariates, `Cov(X1, X2) = rho12 s1 s2`,
/// `Cov(X4, X5) = rho45 s4 s5` and every other covariance zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example1Params {
    pub alpha: f64,
    pub beta: f64,
    pub sigma: [f64; 5],
    pub rho12: f64,
    pub rho45: f64,
    pub noise_ratio: f64,
}

impl Default for Example1Params {
    fn default() -> Self {
        Example1Params {
            alpha: 1.5,
            beta: 1.0,
            sigma: [1.0; 5],
            rho12: 0.9,
            rho45: 0.6,
            noise_ratio: 0.1,
        }
    }
}

impl Example1Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho12.abs() < 1.0 && self.rho45.abs() < 1.0) {
            return Err(Error::InvalidConfig("correlations must lie in (-1, 1)".into()));
        }
        if self.sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidConfig("standard deviations must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.noise_ratio) {
            return Err(Error::InvalidConfig("noise_ratio must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn var_m(&self) -> f64 {
        let [s1, s2, _, s4, s5] = self.sigma;
        let (a, b) = (self.alpha, self.beta);
        let (r12, r45) = (self.rho12, self.rho45);
        a * a / 2.0 * (1.0 + 1.5 * r12 * r12) * s1 * s1 * s2 * s2
            + b * b / 2.0 * (1.0 + 1.5 * r45 * r45) * s4 * s4 * s5 * s5
            - 0.5 * a * b * r12 * s1 * s2 * r45 * s4 * s5
    }

    pub fn covariance(&self) -> Vec<Vec<f64>> {
        let s = self.sigma;
        let mut cov = vec![vec![0.0; 5]; 5];
        for j in 0..5 {
            cov[j][j] = s[j] * s[j];
        }
        cov[0][1] = self.rho12 * s[0] * s[1];
        cov[1][0] = cov[0][1];
        cov[3][4] = self.rho45 * s[3] * s[4];
        cov[4][3] = cov[3][4];
        cov
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        let mut m = 0.0;
        if x[2] > 0.0 {
            m += self.alpha * x[0] * x[1];
        }
        if x[2] < 0.0 {
            m += self.beta * x[3] * x[4];
        }
        m
    }
}

/// Decomposition for the interaction model of [`Example1Params`].
pub fn analytic_example1(params: &Example1Params) -> Result<AnalyticDecomposition> {
    params.validate()?;
    let [s1, s2, s3, s4, s5] = params.sigma;
    let _ = s3;
    let (a, b) = (params.alpha, params.beta);
    let (r12, r45) = (params.rho12, params.rho45);
    let g12 = (a * s1 * s2).powi(2);
    let g45 = (b * s4 * s5).powi(2);

    let pair = |g: f64, r: f64| {
        let mda1 = 0.5 * g * (1.0 - r * r);
        let mda2 = 0.5 * g;
        let mda3 = 1.5 * r * r * g;
        let star = g * (1.0 + r * r);
        (star, mda1, mda2, mda3)
    };

    let var_m = params.var_m();
    // X3 is independent of the rest: E[m | X^(-3)] = (alpha X1 X2 + beta X4 X5) / 2
    let var_cond3 = 0.25 * a * a * (1.0 + r12 * r12) * s1 * s1 * s2 * s2
        + 0.25 * b * b * (1.0 + r45 * r45) * s4 * s4 * s5 * s5;
    let mda1_3 = var_m - var_cond3;
    let star3 = 0.5 * g12 * (1.0 + r12 * r12)
        + 0.5 * g45 * (1.0 + r45 * r45)
        + 0.5 * (a * r12 * s1 * s2 - b * r45 * s4 * s5).powi(2);

    let parts = vec![
        pair(g12, r12),
        pair(g12, r12),
        (star3, mda1_3, mda1_3, 0.0),
        pair(g45, r45),
        pair(g45, r45),
    ];
    Ok(AnalyticDecomposition::from_parts(var_m, params.noise_ratio, parts))
}

/// Decomposition for `m(X) = coefs . X` with `X ~ N(0, cov)`.
pub fn analytic_linear(coefs: &[f64], cov: &[Vec<f64>], noise_ratio: f64) -> Result<AnalyticDecomposition> {
    let p = coefs.len();
    let sigma = to_matrix(cov, p)?;
    if !(0.0..1.0).contains(&noise_ratio) {
        return Err(Error::InvalidConfig("noise_ratio must lie in [0, 1)".into()));
    }
    let chol = sigma.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    let precision = chol.inverse();
    let beta = nalgebra::DVector::from_column_slice(coefs);
    let var_m = (beta.transpose() * &sigma * &beta)[(0, 0)];
    let parts = (0..p)
        .map(|j| {
            let b2 = coefs[j] * coefs[j];
            let var_j = sigma[(j, j)];
            let cond_var = 1.0 / precision[(j, j)];
            let mda1 = b2 * cond_var;
            let mda2 = b2 * var_j;
            let mda3 = b2 * (var_j - cond_var);
            (2.0 * b2 * var_j, mda1, mda2, mda3)
        })
        .collect();
    Ok(AnalyticDecomposition::from_parts(var_m, noise_ratio, parts))
}

pub(crate) fn to_matrix(cov: &[Vec<f64>], p: usize) -> Result<DMatrix<f64>> {
    if cov.len() != p || cov.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidConfig(format!("covariance must be {p} x {p}")));
    }
    for a in 0..p {
        for b in 0..a {
            let (u, v) = (cov[a][b], cov[b][a]);
            if (u - v).abs() > 1e-12 * (1.0 + u.abs().max(v.abs())) {
                return Err(Error::InvalidConfig("covariance is not symmetric".into()));
            }
        }
    }
    Ok(DMatrix::from_fn(p, p, |a, b| cov[a][b]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use rand::Rng as _;

    #[test]
    fn decomposition_sums_to_limit() {
        let mut r = Rng::new(17);
        for _ in 0..1000 {
            let params = Example1Params {
                alpha: r.random_range(-3.0..3.0),
                beta: r.random_range(-3.0..3.0),
                sigma: [(); 5].map(|_| r.random_range(0.2..3.0)),
                rho12: r.random_range(-0.99..0.99),
                rho45: r.random_range(-0.99..0.99),
                noise_ratio: r.random_range(0.0..0.9),
            };
            let d = analytic_example1(&params).unwrap();
            for t in &d.terms {
                let sum = t.mda1 + t.mda2 + t.mda3;
                assert!((sum - t.mda_star).abs() <= 1e-12 * t.mda_star.abs().max(1.0), "{t:?}");
                assert!(t.mda1 >= 0.0 && t.mda2 >= 0.0 && t.mda3 >= 0.0);
            }
        }
    }

    #[test]
    fn independence_removes_third_term() {
        let params = Example1Params {
            rho12: 0.0,
            rho45: 0.0,
            ..Default::default()
        };
        let d = analytic_example1(&params).unwrap();
        for t in &d.terms {
            assert_eq!(t.mda3, 0.0);
            assert_eq!(t.st, t.st_mg);
        }
    }

    #[test]
    fn third_term_dominates_above_threshold() {
        for (rho, dominates) in [(0.70, false), (0.71, true), (0.9, true)] {
            let d = analytic_example1(&Example1Params {
                rho12: rho,
                rho45: 0.0,
                ..Default::default()
            })
            .unwrap();
            let t = d.terms[0];
            assert_eq!(t.mda3 > t.mda1 + t.mda2, dominates, "rho = {rho}");
        }
    }

    #[test]
    fn zero_coefficient_zeroes_both_indices() {
        for (alpha, beta) in [(0.0, 1.0), (1.0, 0.0), (0.0, 2.0)] {
            let d = analytic_example1(&Example1Params {
                alpha,
                beta,
                ..Default::default()
            })
            .unwrap();
            for t in &d.terms {
                assert_eq!(t.st == 0.0, t.st_mg == 0.0);
            }
            assert_eq!(d.terms[0].st == 0.0, alpha == 0.0);
            assert_eq!(d.terms[3].st == 0.0, beta == 0.0);
        }
    }

    #[test]
    fn monte_carlo_check_of_example1_variance() {
        use crate::simulate::{sample_gaussian, GaussianSpec};
        let params = Example1Params::default();
        let spec = GaussianSpec::example1(&params, 0).unwrap();
        let n = 200_000;
        let d = sample_gaussian(
            &GaussianSpec {
                noise_ratio: 0.0,
                ..spec
            },
            n,
            &mut Rng::new(2),
        )
        .unwrap();
        let v = crate::data::variance(d.y());
        assert!((v - params.var_m()).abs() < 0.05 * params.var_m(), "{v}");
    }

    #[test]
    fn linear_marginal_index_dominates() {
        let mut r = Rng::new(4);
        for _ in 0..200 {
            let p = 4;
            let a: Vec<f64> = (0..p * p).map(|_| r.random_range(-1.0..1.0)).collect();
            // A A^T + 0.1 I is positive definite
            let cov: Vec<Vec<f64>> = (0..p)
                .map(|i| {
                    (0..p)
                        .map(|k| {
                            (0..p).map(|l| a[i * p + l] * a[k * p + l]).sum::<f64>()
                                + if i == k { 0.1 } else { 0.0 }
                        })
                        .collect()
                })
                .collect();
            let coefs: Vec<f64> = (0..p).map(|_| r.random_range(-2.0..2.0)).collect();
            let d = analytic_linear(&coefs, &cov, 0.2).unwrap();
            for (j, t) in d.terms.iter().enumerate() {
                assert!(t.st_mg >= t.st - 1e-12);
                let expect = coefs[j] * coefs[j] * cov[j][j] / d.var_y;
                assert!((t.st_mg - expect).abs() < 1e-12);
                assert!((t.mda1 + t.mda2 + t.mda3 - t.mda_star).abs() < 1e-9 * t.mda_star.max(1.0));
            }
        }
    }

    #[test]
    fn linear_independent_is_squared_coefficient_share() {
        let cov = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let d = analytic_linear(&[2.0, 1.0], &cov, 0.0).unwrap();
        assert!((d.terms[0].st - 0.8).abs() < 1e-12);
        assert!((d.terms[1].st - 0.2).abs() < 1e-12);
        assert_eq!(d.terms[0].mda3, 0.0);
        let bad = vec![vec![1.0, 2.0], vec![2.0, 1.0]];
        assert!(matches!(analytic_linear(&[1.0, 1.0], &bad, 0.0), Err(Error::NotPositiveDefinite)));
    }
}
