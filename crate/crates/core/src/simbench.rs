//! Simulation scenarios, loss metrics and the benchmark runner.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{combine, draw_permutations, fit_permutations, EnsembleConfig, Permutation, Variant};
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg::{mcd, spd_inverse, Ldlt, Matrix, SymMatrix, DEFAULT_PIVOT_FLOOR};
use crate::rng::stream_rng;

/// Entries of the true factor below this magnitude are not part of the true DAG.
pub const SUPPORT_TOL: f64 = 1e-10;

/// Scenario generation retries when the smallest LDL pivot falls below this.
pub const MIN_PIVOT: f64 = 1e-8;

const MAX_RETRIES: usize = 100;
const DATA_STREAM: u64 = u64::MAX - 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    /// Diagonal 1, first sub-diagonal 0.5, second sub-diagonal 0.3.
    Banded,
    /// Covariance `0.5^|i-j|`.
    Ar,
    /// `L0 L0^T` with 3% of the strictly lower entries drawn from U(0, 1).
    Sparse,
    /// 10x10 block with unit diagonal and 0.5 off-diagonal, identity elsewhere.
    Compound,
    /// The compound matrix under a random simultaneous row/column permutation.
    PermutedCompound,
}

impl Case {
    pub const ALL: [Case; 5] = [
        Case::Banded,
        Case::Ar,
        Case::Sparse,
        Case::Compound,
        Case::PermutedCompound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Case::Banded => "banded",
            Case::Ar => "ar",
            Case::Sparse => "sparse",
            Case::Compound => "compound",
            Case::PermutedCompound => "permuted-compound",
        }
    }

    /// Cases 3 and 5 draw a new truth every repetition.
    pub fn is_random(self) -> bool {
        matches!(self, Case::Sparse | Case::PermutedCompound)
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "1" | "banded" => Ok(Case::Banded),
            "2" | "ar" | "autoregressive" => Ok(Case::Ar),
            "3" | "sparse" | "sparse3pct" => Ok(Case::Sparse),
            "4" | "compound" => Ok(Case::Compound),
            "5" | "permuted-compound" | "permutedcompound" => Ok(Case::PermutedCompound),
            _ => Err(Error::InvalidSpec(format!("unknown case {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub case: Case,
    pub p: usize,
    pub n: usize,
    #[serde(default = "default_reps")]
    pub reps: usize,
    pub seed: u64,
}

fn default_reps() -> usize {
    20
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let min_p = match self.case {
            Case::Banded => 3,
            Case::Compound | Case::PermutedCompound => 10,
            Case::Ar | Case::Sparse => 1,
        };
        if self.p < min_p {
            return Err(Error::InvalidSpec(format!(
                "case {} needs p >= {min_p}, got {}",
                self.case, self.p
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidSpec("n must be >= 2".into()));
        }
        if self.reps < 1 {
            return Err(Error::InvalidSpec("reps must be >= 1".into()));
        }
        Ok(())
    }
}

/// A true precision matrix with the DAG implied by its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub omega: SymMatrix,
    pub dag: Dag,
    /// Generation attempts discarded for a small pivot.
    pub retries: usize,
}

fn banded(p: usize) -> SymMatrix {
    SymMatrix::symmetrize(&Matrix::from_fn(p, p, |i, j| match i.abs_diff(j) {
        0 => 1.0,
        1 => 0.5,
        2 => 0.3,
        _ => 0.0,
    }))
}

/// Exact inverse of the AR(1) correlation matrix `rho^|i-j|`.
fn ar_precision(p: usize, rho: f64) -> SymMatrix {
    let c = 1.0 / (1.0 - rho * rho);
    SymMatrix::symmetrize(&Matrix::from_fn(p, p, |i, j| {
        if i == j {
            if p == 1 {
                1.0
            } else if i == 0 || i == p - 1 {
                c
            } else {
                (1.0 + rho * rho) * c
            }
        } else if i.abs_diff(j) == 1 {
            -rho * c
        } else {
            0.0
        }
    }))
}

fn compound(p: usize) -> SymMatrix {
    SymMatrix::symmetrize(&Matrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if i < 10 && j < 10 {
            0.5
        } else {
            0.0
        }
    }))
}

fn sparse(p: usize, rng: &mut impl Rng) -> SymMatrix {
    let slots: Vec<(usize, usize)> = (0..p)
        .flat_map(|j| (j + 1..p).map(move |i| (i, j)))
        .collect();
    let count = (0.03 * slots.len() as f64).round() as usize;
    let mut l = Matrix::identity(p);
    for idx in sample(rng, slots.len(), count).into_vec() {
        let (i, j) = slots[idx];
        l[(i, j)] = rng.gen_range(0.0..1.0);
    }
    SymMatrix::symmetrize(&l.matmul(&l.transpose()).expect("square"))
}

fn min_pivot(a: &SymMatrix) -> f64 {
    Ldlt::factor(a.as_matrix(), f64::NEG_INFINITY, "make_omega")
        .map(|f| f.pivots.iter().cloned().fold(f64::INFINITY, f64::min))
        .unwrap_or(f64::NEG_INFINITY)
}

/// DAG implied by the nonzero pattern of the precision's Cholesky factor.
pub fn true_dag(omega: &SymMatrix) -> Result<Dag> {
    let l = mcd(omega)?.l;
    Ok(Dag::from_cholesky_support(&l, SUPPORT_TOL))
}

/// Generates the true precision matrix for a scenario.
pub fn make_omega(spec: &ScenarioSpec, rng: &mut impl Rng) -> Result<Truth> {
    spec.validate()?;
    let p = spec.p;
    let mut retries = 0;
    let omega = loop {
        let omega = match spec.case {
            Case::Banded => banded(p),
            Case::Ar => ar_precision(p, 0.5),
            Case::Sparse => sparse(p, rng),
            Case::Compound => compound(p),
            Case::PermutedCompound => {
                let perm = Permutation::random(p, rng);
                SymMatrix::symmetrize(&perm.conjugate(compound(p).as_matrix()))
            }
        };
        if min_pivot(&omega) >= MIN_PIVOT {
            break omega;
        }
        retries += 1;
        if !spec.case.is_random() || retries >= MAX_RETRIES {
            return Err(Error::NotPositiveDefinite {
                op: "make_omega",
                index: 0,
                pivot: min_pivot(&omega),
            });
        }
    };
    let dag = true_dag(&omega)?;
    Ok(Truth {
        omega,
        dag,
        retries,
    })
}

/// `n` zero-mean Gaussian rows with covariance `omega^-1`, as `Z R^T` with
/// `R R^T = omega^-1`.
pub fn sample_gaussian(omega: &SymMatrix, n: usize, rng: &mut impl Rng) -> Result<Matrix> {
    let sigma = spd_inverse(omega)?;
    let f = Ldlt::factor(sigma.as_matrix(), DEFAULT_PIVOT_FLOOR, "sample_gaussian")?;
    let p = omega.p();
    let root = Matrix::from_fn(p, p, |i, j| f.l[(i, j)] * f.pivots[j].sqrt());
    let z = Matrix::from_fn(n, p, |_, _| rng.sample(StandardNormal));
    z.matmul(&root.transpose())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Stein's loss `tr(est Sigma0) - log det(est Sigma0) - p`.
    pub l1: f64,
    /// Absolute error summed over the true DAG's edge positions.
    pub l2: f64,
    /// Squared error summed over the true DAG's edge positions.
    pub l3: f64,
    /// Absolute error summed over all entries.
    pub l4: f64,
    /// Squared error summed over all entries.
    pub l5: f64,
}

impl LossReport {
    pub const NAMES: [&'static str; 5] = ["L1", "L2", "L3", "L4", "L5"];

    pub fn values(&self) -> [f64; 5] {
        [self.l1, self.l2, self.l3, self.l4, self.l5]
    }
}

pub fn stein_loss(est: &SymMatrix, omega0: &SymMatrix) -> Result<f64> {
    if est.p() != omega0.p() {
        return Err(Error::DimensionMismatch {
            expected: omega0.p(),
            found: est.p(),
        });
    }
    let sigma0 = spd_inverse(omega0)?;
    let ld_est = Ldlt::factor(est.as_matrix(), DEFAULT_PIVOT_FLOOR, "losses")?.logdet();
    let ld_true = Ldlt::factor(omega0.as_matrix(), DEFAULT_PIVOT_FLOOR, "losses")?.logdet();
    let v = est.trace_product(&sigma0) - (ld_est - ld_true) - est.p() as f64;
    Ok(v.max(0.0))
}

pub fn losses(est: &SymMatrix, omega0: &SymMatrix, dag0: &Dag) -> Result<LossReport> {
    let l1 = stein_loss(est, omega0)?;
    if dag0.p() != omega0.p() {
        return Err(Error::DimensionMismatch {
            expected: omega0.p(),
            found: dag0.p(),
        });
    }
    let (mut l2, mut l3) = (0.0, 0.0);
    for (j, i) in dag0.edges() {
        let e = omega0[(j, i)] - est[(j, i)];
        l2 += e.abs();
        l3 += e * e;
    }
    let (mut l4, mut l5) = (0.0, 0.0);
    for (a, b) in omega0.as_matrix().as_slice().iter().zip(est.as_matrix().as_slice()) {
        let e = a - b;
        l4 += e.abs();
        l5 += e * e;
    }
    Ok(LossReport { l1, l2, l3, l4, l5 })
}

/// Estimates and losses of every method for one repetition.
#[derive(Debug, Clone)]
pub struct RepResult {
    pub rep: usize,
    pub truth_retries: usize,
    pub methods: Vec<(Variant, LossReport, SymMatrix)>,
    pub omega0: SymMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub case: Case,
    pub p: usize,
    pub n: usize,
    pub method: Variant,
    pub loss: &'static str,
    pub mean: f64,
    /// Standard error of the mean; `None` for a single repetition.
    pub se: Option<f64>,
    pub reps: usize,
    pub seed: u64,
}

/// Seed of repetition `rep`.
pub fn rep_seed(seed: u64, rep: usize) -> u64 {
    seed ^ rep as u64
}

/// Runs one repetition: truth, data, and every requested method.
pub fn run_rep(
    spec: &ScenarioSpec,
    methods: &[Variant],
    cfg: &EnsembleConfig,
    rep: usize,
) -> Result<RepResult> {
    let seed = rep_seed(spec.seed, rep);
    let mut rng = stream_rng(seed, DATA_STREAM);
    let truth = make_omega(spec, &mut rng)?;
    let y = sample_gaussian(&truth.omega, spec.n, &mut rng)?;
    let s = y.gram_over_n();
    let ensemble_methods: Vec<Variant> = methods
        .iter()
        .copied()
        .filter(|m| *m != Variant::Bayes)
        .collect();
    let fits = if ensemble_methods.is_empty() {
        Vec::new()
    } else {
        let perms = draw_permutations(spec.p, cfg.k, seed);
        fit_permutations(&y, &perms, cfg, seed, ensemble_methods.contains(&Variant::Mle))?
    };
    let mut out = Vec::with_capacity(methods.len());
    for &m in methods {
        let est = if m == Variant::Bayes {
            let single = fit_permutations(&y, &[Permutation::identity(spec.p)], cfg, seed, false)?;
            combine(&single, m, &s, spec.n, cfg.grid_size)?
        } else {
            combine(&fits, m, &s, spec.n, cfg.grid_size)?
        };
        let report = losses(&est.omega_check_tau, &truth.omega, &truth.dag)?;
        out.push((m, report, est.omega_check_tau));
    }
    Ok(RepResult {
        rep,
        truth_retries: truth.retries,
        methods: out,
        omega0: truth.omega,
    })
}

/// Mean and standard error (sample sd over `sqrt(k)`).
pub fn mean_se(xs: &[f64]) -> (f64, Option<f64>) {
    let k = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / k;
    if xs.len() < 2 {
        return (mean, None);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (k - 1.0);
    (mean, Some((var / k).sqrt()))
}

pub fn summarize(spec: &ScenarioSpec, methods: &[Variant], reps: &[RepResult]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for (mi, &m) in methods.iter().enumerate() {
        for (li, &name) in LossReport::NAMES.iter().enumerate() {
            let xs: Vec<f64> = reps.iter().map(|r| r.methods[mi].1.values()[li]).collect();
            let (mean, se) = mean_se(&xs);
            rows.push(SummaryRow {
                case: spec.case,
                p: spec.p,
                n: spec.n,
                method: m,
                loss: name,
                mean,
                se,
                reps: reps.len(),
                seed: spec.seed,
            });
        }
    }
    rows
}

/// Runs all repetitions, `batch` at a time in parallel. `on_rep` sees each
/// finished repetition in repetition order.
pub fn run_benchmark(
    spec: &ScenarioSpec,
    methods: &[Variant],
    cfg: &EnsembleConfig,
    batch: usize,
    mut on_rep: impl FnMut(&RepResult) -> Result<()>,
) -> Result<Vec<SummaryRow>> {
    spec.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidArgument("no methods requested".into()));
    }
    let batch = batch.max(1);
    let mut done = Vec::with_capacity(spec.reps);
    let mut start = 0;
    while start < spec.reps {
        let end = (start + batch).min(spec.reps);
        let chunk: Vec<RepResult> = (start..end)
            .into_par_iter()
            .map(|r| run_rep(spec, methods, cfg, r))
            .collect::<Result<_>>()?;
        for r in chunk {
            on_rep(&r)?;
            done.push(r);
        }
        start = end;
    }
    Ok(summarize(spec, methods, &done))
}

pub const CSV_HEADER: &str = "case,p,n,method,loss,mean,se,reps,seed";

pub fn csv_row(r: &SummaryRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.case,
        r.p,
        r.n,
        r.method,
        r.loss,
        r.mean,
        r.se.map(|s| s.to_string()).unwrap_or_default(),
        r.reps,
        r.seed
    )
}
