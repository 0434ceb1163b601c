//! Order-invariant Bayesian estimation of sparse precision matrices.
//!
//! Gaussian DAG models are fitted with DAG-Wishart priors under many random
//! variable orderings. Each ordering gets its own DAG selection and posterior
//! mode; the back-permuted Cholesky factors are averaged and optionally
//! hard-thresholded with a BIC-type criterion.
//!
//! Module map:
//! - [`linalg`]: dense symmetric matrices and the modified Cholesky decomposition.
//! - [`graph`]: parent-ordered DAGs.
//! - [`dagwishart`]: prior/posterior densities, DAG scores, MAP and MLE factors.
//! - [`selection`]: candidate generation, hill-climbing search, DAG selection.
//! - [`ensemble`]: permutation ensemble and threshold selection.
//! - [`simbench`]: simulation scenarios, losses and the benchmark runner.
//! - [`io`], [`config`], [`heatmap`], [`cli`]: files, run configuration, SVG output
//!   and the `dagw` command line.
//! - [`rng`]: seeded per-task random streams.

pub mod cli;
pub mod config;
pub mod dagwishart;
pub mod ensemble;
pub mod error;
pub mod graph;
pub mod heatmap;
pub mod io;
pub mod linalg;
pub mod rng;
pub mod selection;
pub mod simbench;

pub use error::{Error, Result};
pub use graph::Dag;
pub use linalg::{CholeskyParam, Matrix, SymMatrix};
