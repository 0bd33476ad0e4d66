//! Regression random forests with a full suite of variable importance
//! measures: permutation MDA in its Train/Test, Breiman-Cutler and
//! Ishwaran-Kogalur forms, the Sobol-MDA computed with projected trees,
//! a weighted-traversal variant, and a brute-force retrain estimator of the
//! total Sobol index.
//!
//! The crate also ships Gaussian simulators with closed-form sensitivity
//! oracles, and recursive feature elimination driven by any of the
//! importance measures.
//!
//! Covariates are numeric. The consistency theory behind these estimators
//! assumes covariates supported on the unit hypercube; nothing here rescales
//! inputs, since CART splits are invariant to monotone per-axis transforms.

pub mod analytic;
pub mod cart;
pub mod config;
pub mod data;
pub mod error;
pub mod forest;
pub mod importance;
pub mod projected;
pub mod retrain;
pub mod rng;
pub mod selection;
pub mod simulate;

pub use cart::{fit_tree, grow_tree, Node, NodeKind, Tree};
pub use config::ForestConfig;
pub use data::Dataset;
pub use error::{Error, Result};
pub use forest::{Forest, OobError, OobPrediction};
pub use importance::{ImportanceReport, Method};
pub use rng::Rng;
