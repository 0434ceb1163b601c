//! Permutation ensemble estimator.
//!
//! For each random ordering of the variables the data columns are permuted, a
//! DAG is selected and the posterior mode (or constrained MLE) of the Cholesky
//! factors is computed. The factors are conjugated back to the original
//! ordering and averaged separately, `L_bar = mean(L_k)`, `D_bar = mean(D_k)`,
//! giving `Omega = L_bar diag(D_bar)^-1 L_bar^T`. The averaged `L_bar` is a
//! general unit-diagonal matrix, not a triangular one.
//!
//! The sparse variant hard-thresholds the off-diagonal of `L_bar` with the
//! threshold minimizing
//! `n tr(S Omega_tau) - n log|Omega_tau| + log(n) * nnz(L_tau)`.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dagwishart::{map_estimate, mle_estimate, PriorTemplate};
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg::{compose, CholeskyParam, Ldlt, Matrix, SymMatrix, DEFAULT_PIVOT_FLOOR};
use crate::rng::stream_rng;
use crate::selection::{select_dag, SelectionConfig};

/// Bijection on `0..p`. Column `j` of the permuted data is column `sigma[j]`
/// of the original.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(sigma: Vec<usize>) -> Result<Self> {
        let p = sigma.len();
        let mut seen = vec![false; p];
        for &s in &sigma {
            if s >= p || std::mem::replace(&mut seen[s], true) {
                return Err(Error::InvalidArgument(format!(
                    "{sigma:?} is not a permutation of 0..{p}"
                )));
            }
        }
        Ok(Self(sigma))
    }

    pub fn identity(p: usize) -> Self {
        Self((0..p).collect())
    }

    pub fn random(p: usize, rng: &mut impl Rng) -> Self {
        let mut s: Vec<usize> = (0..p).collect();
        s.shuffle(rng);
        Self(s)
    }

    /// Every permutation of `0..p` in lexicographic order.
    pub fn all(p: usize) -> Vec<Permutation> {
        let mut cur: Vec<usize> = (0..p).collect();
        let mut out = vec![Self(cur.clone())];
        loop {
            let Some(i) = (1..p).rev().find(|&i| cur[i - 1] < cur[i]) else {
                return out;
            };
            let j = (i..p).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
            cur.swap(i - 1, j);
            cur[i..].reverse();
            out.push(Self(cur.clone()));
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (j, &s) in self.0.iter().enumerate() {
            inv[s] = j;
        }
        Self(inv)
    }

    /// `(self . other)(j) = self(other(j))`.
    pub fn compose(&self, other: &Permutation) -> Self {
        Self(other.0.iter().map(|&j| self.0[j]).collect())
    }

    /// `P A P^T`, i.e. `out[sigma(j)][sigma(k)] = a[j][k]`.
    pub fn conjugate(&self, a: &Matrix) -> Matrix {
        let inv = self.inverse();
        Matrix::from_fn(a.rows(), a.cols(), |r, c| a[(inv.0[r], inv.0[c])])
    }
}

/// `Y P`: column `j` of the result is column `sigma(j)` of `y`.
pub fn apply_permutation(y: &Matrix, perm: &Permutation) -> Result<Matrix> {
    if perm.len() != y.cols() {
        return Err(Error::DimensionMismatch {
            expected: y.cols(),
            found: perm.len(),
        });
    }
    Ok(y.select_cols(perm.as_slice()))
}

/// Maps factors estimated in permuted coordinates back to the original order.
pub fn unpermute_factors(theta: &CholeskyParam, perm: &Permutation) -> Result<(Matrix, Vec<f64>)> {
    if perm.len() != theta.p() {
        return Err(Error::DimensionMismatch {
            expected: theta.p(),
            found: perm.len(),
        });
    }
    let l = perm.conjugate(&theta.l);
    let mut d = vec![0.0; theta.p()];
    for (j, &s) in perm.as_slice().iter().enumerate() {
        d[s] = theta.d[j];
    }
    Ok((l, d))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Averaged {
    pub l_bar: Matrix,
    pub d_bar: Vec<f64>,
    pub omega_check: SymMatrix,
}

/// Elementwise means of the factors, summed in input order.
pub fn ensemble_average(factors: &[(Matrix, Vec<f64>)]) -> Result<Averaged> {
    let (first_l, first_d) = factors.first().ok_or(Error::EmptyEnsemble)?;
    let p = first_d.len();
    let mut l_sum = Matrix::zeros(p, p);
    let mut d_sum = vec![0.0; p];
    for (l, d) in factors {
        if d.len() != p || l.rows() != p || l.cols() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: d.len(),
            });
        }
        for r in 0..p {
            for c in 0..p {
                l_sum[(r, c)] += l[(r, c)];
            }
        }
        for (s, v) in d_sum.iter_mut().zip(d) {
            *s += v;
        }
    }
    let k = factors.len() as f64;
    let (l_bar, d_bar) = if factors.len() == 1 {
        (first_l.clone(), first_d.clone())
    } else {
        (l_sum.scale(1.0 / k), d_sum.iter().map(|x| x / k).collect())
    };
    let omega_check = compose(&l_bar, &d_bar);
    Ok(Averaged {
        l_bar,
        d_bar,
        omega_check,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Thresholded {
    pub tau: f64,
    pub l_tau: Matrix,
    pub omega_tau: SymMatrix,
    pub bic: f64,
}

/// Zeroes off-diagonal entries with `|L_ij| <= tau`.
pub fn hard_threshold(l: &Matrix, tau: f64) -> Matrix {
    Matrix::from_fn(l.rows(), l.cols(), |r, c| {
        let v = l[(r, c)];
        if r != c && v.abs() <= tau {
            0.0
        } else {
            v
        }
    })
}

fn nonzeros(m: &Matrix) -> usize {
    m.as_slice().iter().filter(|v| **v != 0.0).count()
}

/// The threshold grid: `grid_size` evenly spaced values on
/// `[0, max off-diagonal |L_ij|]`, both ends included.
pub fn threshold_grid(l_bar: &Matrix, grid_size: usize) -> Vec<f64> {
    let p = l_bar.rows();
    let top = (0..p)
        .flat_map(|r| (0..p).filter(move |&c| c != r).map(move |c| (r, c)))
        .fold(0.0_f64, |m, (r, c)| m.max(l_bar[(r, c)].abs()));
    if grid_size <= 1 {
        return vec![0.0];
    }
    (0..grid_size)
        .map(|g| {
            if g + 1 == grid_size {
                top
            } else {
                top * g as f64 / (grid_size - 1) as f64
            }
        })
        .collect()
}

/// BIC-type criterion at one threshold, or `None` when `Omega_tau` is not
/// positive definite.
pub fn bic_at(
    l_bar: &Matrix,
    d_bar: &[f64],
    s: &SymMatrix,
    n: usize,
    tau: f64,
) -> Option<(f64, Matrix, SymMatrix)> {
    let l_tau = hard_threshold(l_bar, tau);
    let omega = compose(&l_tau, d_bar);
    let logdet = Ldlt::factor(omega.as_matrix(), DEFAULT_PIVOT_FLOOR, "bic_threshold_select")
        .ok()?
        .logdet();
    let nf = n as f64;
    let bic = nf * s.trace_product(&omega) - nf * logdet + nf.ln() * nonzeros(&l_tau) as f64;
    Some((bic, l_tau, omega))
}

/// Picks the threshold minimizing the BIC-type criterion; ties go to the
/// larger threshold. Grid points with a non positive definite estimate are
/// skipped.
pub fn bic_threshold_select(
    l_bar: &Matrix,
    d_bar: &[f64],
    s: &SymMatrix,
    n: usize,
    grid_size: usize,
) -> Result<Thresholded> {
    if n < 2 {
        return Err(Error::InvalidArgument("BIC selection needs n >= 2".into()));
    }
    if grid_size < 1 {
        return Err(Error::InvalidArgument("grid_size must be >= 1".into()));
    }
    if s.p() != d_bar.len() {
        return Err(Error::DimensionMismatch {
            expected: d_bar.len(),
            found: s.p(),
        });
    }
    let mut best: Option<Thresholded> = None;
    for tau in threshold_grid(l_bar, grid_size) {
        let Some((bic, l_tau, omega_tau)) = bic_at(l_bar, d_bar, s, n, tau) else {
            continue;
        };
        if best.as_ref().map_or(true, |b| bic <= b.bic) {
            best = Some(Thresholded {
                tau,
                l_tau,
                omega_tau,
                bic,
            });
        }
    }
    best.ok_or(Error::NoValidThreshold)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Ensemble of posterior modes with BIC hard thresholding.
    DagwBic,
    /// Ensemble of posterior modes, no thresholding.
    Dagw,
    /// Ensemble of DAG-constrained maximum likelihood estimates.
    Mle,
    /// Single posterior mode in the original variable order.
    Bayes,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::DagwBic, Variant::Dagw, Variant::Mle, Variant::Bayes];

    pub fn name(self) -> &'static str {
        match self {
            Variant::DagwBic => "DAGW.BIC",
            Variant::Dagw => "DAGW",
            Variant::Mle => "MLE",
            Variant::Bayes => "BAYES",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '.'], "-").as_str() {
            "dagw-bic" => Ok(Variant::DagwBic),
            "dagw" => Ok(Variant::Dagw),
            "mle" => Ok(Variant::Mle),
            "bayes" => Ok(Variant::Bayes),
            _ => Err(Error::InvalidArgument(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    /// Number of random permutations.
    pub k: usize,
    pub selection: SelectionConfig,
    pub prior: PriorTemplate,
    pub grid_size: usize,
    /// Ridge used by the constrained MLE.
    pub mle_ridge: f64,
    /// Disable the hill-climbing search and use one fixed random stream for
    /// every permutation's selection, making each per-ordering fit a pure
    /// function of the permuted data.
    pub deterministic: bool,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            k: 100,
            selection: SelectionConfig::default(),
            prior: PriorTemplate::default(),
            grid_size: 50,
            mle_ridge: 0.0,
            deterministic: false,
        }
    }
}

const PERMUTATION_STREAM: u64 = 0;
const DETERMINISTIC_STREAM: u64 = u64::MAX;

/// Everything computed for one ordering, in permuted coordinates.
#[derive(Debug, Clone)]
pub struct PermutationFit {
    pub perm: Permutation,
    pub dag: Dag,
    pub map: CholeskyParam,
    pub mle: Option<CholeskyParam>,
}

/// Draws `k` permutations by Fisher-Yates from the run's permutation stream.
pub fn draw_permutations(p: usize, k: usize, seed: u64) -> Vec<Permutation> {
    let mut rng = stream_rng(seed, PERMUTATION_STREAM);
    (0..k).map(|_| Permutation::random(p, &mut rng)).collect()
}

/// Fits every ordering in parallel. Ordering `k` selects with stream `k + 1`
/// of `seed` (or a fixed stream in deterministic mode).
pub fn fit_permutations(
    y: &Matrix,
    perms: &[Permutation],
    cfg: &EnsembleConfig,
    seed: u64,
    with_mle: bool,
) -> Result<Vec<PermutationFit>> {
    if y.rows() < 2 {
        return Err(Error::InvalidArgument("need at least 2 observations".into()));
    }
    let mut selection = cfg.selection.clone();
    if cfg.deterministic {
        selection.sss_iters = 0;
    }
    perms
        .par_iter()
        .enumerate()
        .map(|(k, perm)| {
            let stream = if cfg.deterministic {
                DETERMINISTIC_STREAM
            } else {
                k as u64 + 1
            };
            let mut rng = stream_rng(seed, stream);
            let yp = apply_permutation(y, perm)?;
            let dag = select_dag(&yp, cfg.prior, &selection, &mut rng)?;
            let s = yp.gram_over_n();
            let prior = cfg.prior.params_for(&dag);
            let map = map_estimate(&prior, &s, yp.rows(), &dag)?;
            let mle = if with_mle {
                Some(mle_estimate(&s, &dag, cfg.mle_ridge)?)
            } else {
                None
            };
            Ok(PermutationFit {
                perm: perm.clone(),
                dag,
                map,
                mle,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleEstimate {
    pub variant: Variant,
    pub permutations: Vec<Permutation>,
    /// Selected DAG per ordering, in permuted coordinates.
    pub per_perm_dags: Vec<Dag>,
    pub l_bar: Matrix,
    pub d_bar: Vec<f64>,
    pub omega_check: SymMatrix,
    pub tau_b: f64,
    pub l_bar_tau: Matrix,
    pub omega_check_tau: SymMatrix,
    /// Criterion value at `tau_b` (thresholded variant only).
    pub bic: Option<f64>,
}

/// Combines per-ordering fits into the estimate for `variant`.
pub fn combine(
    fits: &[PermutationFit],
    variant: Variant,
    s: &SymMatrix,
    n: usize,
    grid_size: usize,
) -> Result<EnsembleEstimate> {
    let factors = fits
        .iter()
        .map(|f| {
            let theta = match variant {
                Variant::Mle => f.mle.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("fits were computed without the MLE".into())
                })?,
                _ => &f.map,
            };
            unpermute_factors(theta, &f.perm)
        })
        .collect::<Result<Vec<_>>>()?;
    let avg = ensemble_average(&factors)?;
    let (tau_b, l_bar_tau, omega_check_tau, bic) = if variant == Variant::DagwBic {
        let t = bic_threshold_select(&avg.l_bar, &avg.d_bar, s, n, grid_size)?;
        (t.tau, t.l_tau, t.omega_tau, Some(t.bic))
    } else {
        (0.0, avg.l_bar.clone(), avg.omega_check.clone(), None)
    };
    Ok(EnsembleEstimate {
        variant,
        permutations: fits.iter().map(|f| f.perm.clone()).collect(),
        per_perm_dags: fits.iter().map(|f| f.dag.clone()).collect(),
        l_bar: avg.l_bar,
        d_bar: avg.d_bar,
        omega_check: avg.omega_check,
        tau_b,
        l_bar_tau,
        omega_check_tau,
        bic,
    })
}

/// Runs the estimator on an explicit list of orderings.
pub fn estimate_with_permutations(
    y: &Matrix,
    perms: &[Permutation],
    cfg: &EnsembleConfig,
    variant: Variant,
    seed: u64,
) -> Result<EnsembleEstimate> {
    if perms.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let fits = fit_permutations(y, perms, cfg, seed, variant == Variant::Mle)?;
    combine(&fits, variant, &y.gram_over_n(), y.rows(), cfg.grid_size)
}

/// Full pipeline on data `y` (rows are observations). `Bayes` ignores `k`
/// and uses the identity ordering only.
pub fn estimate(
    y: &Matrix,
    cfg: &EnsembleConfig,
    variant: Variant,
    seed: u64,
) -> Result<EnsembleEstimate> {
    let perms = if variant == Variant::Bayes {
        vec![Permutation::identity(y.cols())]
    } else {
        if cfg.k < 1 {
            return Err(Error::EmptyEnsemble);
        }
        draw_permutations(y.cols(), cfg.k, seed)
    };
    estimate_with_permutations(y, &perms, cfg, variant, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_validation_and_enumeration() {
        assert!(Permutation::new(vec![1, 0, 2]).is_ok());
        assert!(Permutation::new(vec![1, 1, 2]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
        let all = Permutation::all(4);
        assert_eq!(all.len(), 24);
        let set: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(set.len(), 24);
        assert_eq!(Permutation::all(1).len(), 1);
    }

    #[test]
    fn apply_examples() {
        let y = Matrix::from_rows(&[[1.0, 2.0]]);
        assert_eq!(apply_permutation(&y, &Permutation::identity(2)).unwrap(), y);
        let swap = Permutation::new(vec![1, 0]).unwrap();
        assert_eq!(
            apply_permutation(&y, &swap).unwrap(),
            Matrix::from_rows(&[[2.0, 1.0]])
        );
        assert!(apply_permutation(&y, &Permutation::identity(3)).is_err());
    }

    #[test]
    fn permute_then_inverse_restores() {
        let mut rng = stream_rng(4, 0);
        let y = Matrix::from_fn(7, 5, |_, _| rng.gen_range(-1.0..1.0));
        let perm = Permutation::random(5, &mut rng);
        let there = apply_permutation(&y, &perm).unwrap();
        assert_eq!(apply_permutation(&there, &perm.inverse()).unwrap(), y);
        // S_sigma[j][k] = S[sigma(j)][sigma(k)]
        let s = y.gram_over_n();
        let sp = there.gram_over_n();
        for j in 0..5 {
            for k in 0..5 {
                let v = s[(perm.as_slice()[j], perm.as_slice()[k])];
                assert!((sp[(j, k)] - v).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unpermute_examples() {
        let theta = CholeskyParam {
            l: Matrix::from_rows(&[[1.0, 0.0], [0.7, 1.0]]),
            d: vec![2.0, 3.0],
        };
        let (l, d) = unpermute_factors(&theta, &Permutation::identity(2)).unwrap();
        assert_eq!((l, d), (theta.l.clone(), theta.d.clone()));
        let (l, d) = unpermute_factors(&theta, &Permutation::new(vec![1, 0]).unwrap()).unwrap();
        assert_eq!(l, Matrix::from_rows(&[[1.0, 0.7], [0.0, 1.0]]));
        assert_eq!(d, vec![3.0, 2.0]);
    }

    #[test]
    fn unpermuted_precision_is_conjugated() {
        let mut rng = stream_rng(8, 0);
        for p in 1..=6 {
            let mut l = Matrix::identity(p);
            for i in 0..p {
                for j in 0..i {
                    l[(i, j)] = rng.gen_range(-1.0..1.0);
                }
            }
            let theta = CholeskyParam {
                l,
                d: (0..p).map(|_| rng.gen_range(0.5..2.0)).collect(),
            };
            let perm = Permutation::random(p, &mut rng);
            let (lh, dh) = unpermute_factors(&theta, &perm).unwrap();
            assert!((0..p).all(|i| lh[(i, i)] == 1.0));
            let direct = compose(&lh, &dh);
            let conj = perm.conjugate(theta.precision().as_matrix());
            assert!(direct.as_matrix().max_abs_diff(&conj) < 1e-12);
        }
    }

    #[test]
    fn averaging_examples() {
        let one = vec![(Matrix::identity(2), vec![1.0, 1.0])];
        let avg = ensemble_average(&one).unwrap();
        assert_eq!(avg.d_bar, vec![1.0, 1.0]);
        assert_eq!(avg.omega_check, SymMatrix::identity(2));
        let twice = vec![one[0].clone(), one[0].clone()];
        assert_eq!(ensemble_average(&twice).unwrap(), avg);

        let pair = vec![
            (Matrix::identity(2), vec![1.0, 1.0]),
            (Matrix::identity(2), vec![3.0, 1.0]),
        ];
        let avg = ensemble_average(&pair).unwrap();
        assert_eq!(avg.d_bar, vec![2.0, 1.0]);
        assert_eq!(avg.omega_check, SymMatrix::diag(&[0.5, 1.0]));
        assert!(matches!(ensemble_average(&[]), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn bic_identity_value() {
        let t = bic_threshold_select(&Matrix::identity(2), &[1.0, 1.0], &SymMatrix::identity(2), 10, 50)
            .unwrap();
        assert!((t.bic - (20.0 + 2.0 * 10f64.ln())).abs() < 1e-12);
        assert!((t.bic - 24.605170185988092).abs() < 1e-9);
        assert_eq!(t.omega_tau, SymMatrix::identity(2));
    }

    #[test]
    fn bic_prefers_dropping_negligible_entries() {
        let l = Matrix::from_rows(&[[1.0, 0.0], [1e-9, 1.0]]);
        let t = bic_threshold_select(&l, &[1.0, 1.0], &SymMatrix::identity(2), 100, 50).unwrap();
        assert!(t.tau >= 1e-9);
        assert_eq!(t.l_tau, Matrix::identity(2));
    }

    #[test]
    fn single_point_grid_is_unthresholded() {
        let l = Matrix::from_rows(&[[1.0, 0.0], [0.4, 1.0]]);
        let t = bic_threshold_select(&l, &[1.0, 2.0], &SymMatrix::identity(2), 10, 1).unwrap();
        assert_eq!(t.tau, 0.0);
        assert_eq!(t.l_tau, l);
        assert_eq!(t.omega_tau, compose(&l, &[1.0, 2.0]));
    }

    #[test]
    fn singular_average_has_no_valid_threshold() {
        // rows are equal, so every thresholded factor is singular at tau = 0
        let l = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(
            bic_threshold_select(&l, &[1.0, 1.0], &SymMatrix::identity(2), 10, 1),
            Err(Error::NoValidThreshold)
        ));
    }

    #[test]
    fn nonzero_count_is_monotone_in_tau() {
        let mut rng = stream_rng(2, 0);
        let p = 6;
        let l = Matrix::from_fn(p, p, |r, c| if r == c { 1.0 } else { rng.gen_range(-0.5..0.5) });
        let grid = threshold_grid(&l, 20);
        let counts: Vec<usize> = grid.iter().map(|&t| nonzeros(&hard_threshold(&l, t))).collect();
        assert!(counts.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(*counts.last().unwrap(), p);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("dagw-bic".parse::<Variant>().unwrap(), Variant::DagwBic);
        assert_eq!("DAGW.BIC".parse::<Variant>().unwrap(), Variant::DagwBic);
        assert_eq!("bayes".parse::<Variant>().unwrap(), Variant::Bayes);
        assert!("lasso".parse::<Variant>().is_err());
    }
}
