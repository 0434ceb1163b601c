//! DAG-Wishart prior on the Cholesky space of a DAG.
//!
//! All quantities are in log space. The normalizing constant factors over
//! vertices, which is what makes DAG scores local: toggling one parent of
//! vertex `j` only changes the `j`-th node term.

use std::f64::consts::{LN_2, PI};

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg::{CholeskyParam, Matrix, SymMatrix, DEFAULT_PIVOT_FLOOR};

/// Scale matrix `U` and per-vertex shapes `alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct DagWishartParams {
    pub scale: SymMatrix,
    pub alpha: Vec<f64>,
}

impl DagWishartParams {
    pub fn new(scale: SymMatrix, alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() != scale.p() {
            return Err(Error::DimensionMismatch {
                expected: scale.p(),
                found: alpha.len(),
            });
        }
        Ok(Self { scale, alpha })
    }

    pub fn p(&self) -> usize {
        self.alpha.len()
    }

    /// Requires `alpha_i - nu_i > 2` at every vertex.
    pub fn check_proper(&self, dag: &Dag) -> Result<()> {
        self.check_dims(dag)?;
        for i in 0..self.p() {
            check_shape(i, self.alpha[i], dag.parents_of(i).len())?;
        }
        Ok(())
    }

    fn check_dims(&self, dag: &Dag) -> Result<()> {
        if dag.p() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                found: dag.p(),
            });
        }
        Ok(())
    }
}

/// Hyperparameters shared by every candidate DAG: `U = scale * I` and
/// `alpha_i(D) = nu_i(D) + shape_offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorTemplate {
    pub scale: f64,
    pub shape_offset: f64,
}

impl Default for PriorTemplate {
    fn default() -> Self {
        Self {
            scale: 1.0,
            shape_offset: 10.0,
        }
    }
}

impl PriorTemplate {
    pub fn scale_matrix(&self, p: usize) -> SymMatrix {
        SymMatrix::identity(p).scale(self.scale)
    }

    pub fn params_for(&self, dag: &Dag) -> DagWishartParams {
        let p = dag.p();
        DagWishartParams {
            scale: self.scale_matrix(p),
            alpha: (0..p)
                .map(|i| dag.parents_of(i).len() as f64 + self.shape_offset)
                .collect(),
        }
    }
}

fn check_shape(vertex: usize, alpha: f64, nu: usize) -> Result<()> {
    let gap = alpha - nu as f64;
    if !(gap > 2.0) {
        return Err(Error::ImproperPrior { vertex, gap });
    }
    Ok(())
}

/// Factorization of the augmented block ordered `[pa_i..., i]`.
pub(crate) struct NodeBlock {
    /// log det of `A` restricted to `pa_i` (0 for an empty parent set).
    pub logdet_parents: f64,
    /// `A_ii - a^T B^-1 a`, the conditional term `A_{i|pa_i}`.
    pub schur: f64,
    /// `B^-1 a` where `B` is the parent block and `a` the parent column.
    pub coef: Option<Vec<f64>>,
}

/// Factors the augmented block with an in-place LDL^T. `want_coef` also
/// back-solves for the regression coefficients.
pub(crate) fn node_block(
    a: &SymMatrix,
    i: usize,
    parents: &[usize],
    want_coef: bool,
    op: &'static str,
) -> Result<NodeBlock> {
    let m = parents.len() + 1;
    let idx = |r: usize| if r < parents.len() { parents[r] } else { i };
    let mut f = vec![0.0; m * m];
    for r in 0..m {
        for c in 0..=r {
            f[r * m + c] = a[(idx(r), idx(c))];
        }
    }
    let mut logdet_parents = 0.0;
    for j in 0..m {
        let d = f[j * m + j];
        if !(d > DEFAULT_PIVOT_FLOOR) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite {
                op,
                index: idx(j),
                pivot: d,
            });
        }
        if j + 1 < m {
            logdet_parents += d.ln();
        }
        for r in j + 1..m {
            f[r * m + j] /= d;
        }
        for r in j + 1..m {
            let lrd = f[r * m + j] * d;
            for c in j + 1..=r {
                f[r * m + c] -= lrd * f[c * m + j];
            }
        }
    }
    let schur = f[(m - 1) * m + (m - 1)];
    let coef = want_coef.then(|| {
        // last row of L is w = diag(piv)^-1 L_B^-1 a; solve L_B^T x = w
        let k = m - 1;
        let mut x: Vec<f64> = (0..k).map(|c| f[k * m + c]).collect();
        for r in (0..k).rev() {
            let mut v = x[r];
            for c in r + 1..k {
                v -= f[c * m + r] * x[c];
            }
            x[r] = v;
        }
        x
    });
    Ok(NodeBlock {
        logdet_parents,
        schur,
        coef,
    })
}

/// Log of the `i`-th factor of the normalizing constant, for an explicit
/// parent list.
pub(crate) fn node_term(u: &SymMatrix, alpha: f64, i: usize, parents: &[usize]) -> Result<f64> {
    let nu = parents.len();
    check_shape(i, alpha, nu)?;
    let blk = node_block(u, i, parents, false, "log_node_score")?;
    let nu = nu as f64;
    let c = alpha / 2.0 - nu / 2.0 - 1.0;
    let logdet_aug = blk.logdet_parents + blk.schur.ln();
    Ok(ln_gamma(c) + (alpha / 2.0 - 1.0) * LN_2 + nu / 2.0 * PI.ln()
        + (c - 0.5) * blk.logdet_parents
        - c * logdet_aug)
}

/// Log of the `i`-th vertex factor of the normalizing constant.
pub fn log_node_score(i: usize, params: &DagWishartParams, dag: &Dag) -> Result<f64> {
    params.check_dims(dag)?;
    let pa = dag.parents(i)?;
    node_term(&params.scale, params.alpha[i], i, pa)
}

/// Log normalizing constant, the sum of the node scores.
pub fn log_norm_const(params: &DagWishartParams, dag: &Dag) -> Result<f64> {
    params.check_proper(dag)?;
    (0..dag.p()).try_fold(0.0, |acc, i| Ok(acc + log_node_score(i, params, dag)?))
}

/// Returns the first entry of `l` that lies outside the DAG support, if any.
fn support_violation(l: &Matrix, dag: &Dag) -> Option<(usize, usize)> {
    let p = dag.p();
    for r in 0..p {
        for c in 0..p {
            let v = l[(r, c)];
            let ok = if r == c {
                v == 1.0
            } else if r > c {
                v == 0.0 || dag.has_edge(r, c)
            } else {
                v == 0.0
            };
            if !ok {
                return Some((r, c));
            }
        }
    }
    None
}

/// Normalized log density of the DAG-Wishart at `theta`.
pub fn log_prior_density(
    theta: &CholeskyParam,
    params: &DagWishartParams,
    dag: &Dag,
) -> Result<f64> {
    params.check_proper(dag)?;
    if theta.p() != dag.p() {
        return Err(Error::DimensionMismatch {
            expected: dag.p(),
            found: theta.p(),
        });
    }
    if let Some((row, col)) = support_violation(&theta.l, dag) {
        return Err(Error::SupportViolation { row, col });
    }
    if let Some(i) = theta.d.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::InvalidArgument(format!("D[{i}] must be positive")));
    }
    let quad = theta.precision().trace_product(&params.scale);
    let logd: f64 = theta
        .d
        .iter()
        .zip(&params.alpha)
        .map(|(d, a)| a / 2.0 * d.ln())
        .sum();
    Ok(-0.5 * quad - logd - log_norm_const(params, dag)?)
}

/// Conjugate update: `(U + nS, alpha + n)`.
pub fn posterior_params(
    params: &DagWishartParams,
    s: &SymMatrix,
    n: usize,
) -> Result<DagWishartParams> {
    if n == 0 {
        return Err(Error::InvalidArgument("posterior update needs n >= 1".into()));
    }
    Ok(DagWishartParams {
        scale: params.scale.add_scaled(s, n as f64)?,
        alpha: params.alpha.iter().map(|a| a + n as f64).collect(),
    })
}

/// Zero-mean Gaussian log-likelihood of `n` observations with sample
/// covariance `s` under `Omega = L diag(D)^-1 L^T`.
pub fn gaussian_loglik(theta: &CholeskyParam, s: &SymMatrix, n: usize) -> f64 {
    let n = n as f64;
    let p = theta.p() as f64;
    let logdet_omega: f64 = -theta.d.iter().map(|d| d.ln()).sum::<f64>();
    -0.5 * n * p * (2.0 * PI).ln() + 0.5 * n * logdet_omega
        - 0.5 * n * theta.precision().trace_product(s)
}

fn closed_form(
    scale: &SymMatrix,
    dag: &Dag,
    denom: impl Fn(usize) -> f64,
    op: &'static str,
) -> Result<CholeskyParam> {
    let p = dag.p();
    let mut l = Matrix::identity(p);
    let mut d = vec![0.0; p];
    for i in 0..p {
        let pa = dag.parents_of(i);
        let blk = node_block(scale, i, pa, true, op)?;
        for (&j, b) in pa.iter().zip(blk.coef.as_deref().unwrap_or(&[])) {
            l[(j, i)] = -b;
        }
        d[i] = blk.schur / denom(i);
    }
    Ok(CholeskyParam { l, d })
}

/// Posterior mode of `(D, L)` given the prior, sample covariance and `n`.
///
/// `D_ii = U~_{i|pa_i} / (alpha_i + n)` with the prior shape `alpha_i`, and
/// `L_{pa_i, i} = -(U~^{>i})^-1 U~_{pa_i, i}`, where `U~ = U + nS`. A vertex
/// without parents keeps an empty column and `D_ii = U~_ii / (alpha_i + n)`.
pub fn map_estimate(
    prior: &DagWishartParams,
    s: &SymMatrix,
    n: usize,
    dag: &Dag,
) -> Result<CholeskyParam> {
    prior.check_dims(dag)?;
    let post_scale = prior.scale.add_scaled(s, n as f64)?;
    closed_form(&post_scale, dag, |i| prior.alpha[i] + n as f64, "map_estimate")
}

/// DAG-constrained maximum likelihood estimate: node-wise regressions on the
/// parent set, computed on `S + ridge * I`.
pub fn mle_estimate(s: &SymMatrix, dag: &Dag, ridge: f64) -> Result<CholeskyParam> {
    if dag.p() != s.p() {
        return Err(Error::DimensionMismatch {
            expected: s.p(),
            found: dag.p(),
        });
    }
    if ridge < 0.0 {
        return Err(Error::InvalidArgument("ridge must be non-negative".into()));
    }
    let reg;
    let scale = if ridge > 0.0 {
        reg = s.add_ridge(ridge);
        &reg
    } else {
        s
    };
    closed_form(scale, dag, |_| 1.0, "mle_estimate")
}

/// Unnormalized log posterior probability of a DAG:
/// `log gamma_D(U + nS, alpha + n) - log gamma_D(U, alpha)`.
pub fn log_dag_posterior(
    dag: &Dag,
    prior: &DagWishartParams,
    s: &SymMatrix,
    n: usize,
) -> Result<f64> {
    prior.check_proper(dag)?;
    if n == 0 {
        return Ok(0.0);
    }
    let post = posterior_params(prior, s, n)?;
    (0..dag.p()).try_fold(0.0, |acc, i| {
        let pa = dag.parents_of(i);
        Ok(acc + node_term(&post.scale, post.alpha[i], i, pa)?
            - node_term(&prior.scale, prior.alpha[i], i, pa)?)
    })
}
