//! DAG selection.
//!
//! Candidates come from thresholding the modified Cholesky factor of the
//! ridge-regularized inverse sample covariance over a quantile grid. Each
//! candidate seeds a greedy single-edge hill climb, and the whole procedure
//! is repeated on leave-one-fold-out subsamples. The pooled candidates are
//! then scored on the full data and the best one wins.

use std::collections::HashSet;
use std::sync::RwLock;

use rand::seq::SliceRandom;
use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dagwishart::{node_block, PriorTemplate};
use crate::error::{Error, Result};
use crate::graph::Dag;
use crate::linalg::{mcd, spd_inverse, Matrix, SymMatrix, DEFAULT_PIVOT_FLOOR};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectionConfig {
    /// Ridge added to the sample covariance before inversion.
    pub ridge: f64,
    pub n_thresholds: usize,
    /// Hill-climbing moves per seed graph; 0 disables the search.
    pub sss_iters: usize,
    /// Number of searched (non-seed) graphs retained per search.
    pub sss_pool: usize,
    pub cv_folds: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            ridge: 0.1,
            n_thresholds: 3000,
            sss_iters: 50,
            sss_pool: 200,
            cv_folds: 10,
        }
    }
}

impl SelectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) {
            return Err(Error::InvalidArgument("ridge must be >= 0".into()));
        }
        if self.n_thresholds < 1 {
            return Err(Error::InvalidArgument("n_thresholds must be >= 1".into()));
        }
        if self.cv_folds < 2 {
            return Err(Error::InvalidArgument("cv_folds must be >= 2".into()));
        }
        Ok(())
    }
}

/// Log of one node factor of the normalizing constant when `U = scale * I`.
fn identity_node_term(scale: f64, alpha: f64, nu: usize) -> f64 {
    let nu = nu as f64;
    let c = alpha / 2.0 - nu / 2.0 - 1.0;
    let ls = scale.ln();
    ln_gamma(c)
        + (alpha / 2.0 - 1.0) * std::f64::consts::LN_2
        + nu / 2.0 * std::f64::consts::PI.ln()
        + (c - 0.5) * nu * ls
        - c * (nu + 1.0) * ls
}

const INLINE_WORDS: usize = 4;

#[derive(Default)]
struct RowScratch {
    f: Vec<f64>,
    piv: Vec<f64>,
    inv: Vec<f64>,
    y: Vec<f64>,
    z: Vec<f64>,
}

/// Parent set as a bitmask, written into `buf`.
fn parent_mask<'a>(parents: &[usize], words: usize, buf: &'a mut [u64]) -> &'a [u64] {
    let key = &mut buf[..words];
    key.fill(0);
    for &j in parents {
        key[j / 64] |= 1 << (j % 64);
    }
    key
}

/// Node-decomposed log posterior DAG score for one dataset, with a cache keyed
/// by `(vertex, parent set)`.
pub struct DagScorer {
    post_scale: SymMatrix,
    /// Posterior gamma argument, the same for every parent count.
    shape: f64,
    /// Parent-count dependent part of the node score, prior term included.
    base: Vec<f64>,
    words: usize,
    cache: Vec<RwLock<FxHashMap<Box<[u64]>, f64>>>,
}

impl DagScorer {
    pub fn new(s: &SymMatrix, n: usize, template: PriorTemplate) -> Result<Self> {
        if !(template.scale > 0.0) {
            return Err(Error::InvalidArgument("prior scale must be positive".into()));
        }
        if !(template.shape_offset > 2.0) {
            return Err(Error::ImproperPrior {
                vertex: 0,
                gap: template.shape_offset,
            });
        }
        let p = s.p();
        let post_scale = template.scale_matrix(p).add_scaled(s, n as f64)?;
        let shape = (template.shape_offset + n as f64) / 2.0 - 1.0;
        let lg = ln_gamma(shape);
        let base = (0..p)
            .map(|nu| {
                let nu_f = nu as f64;
                let alpha = nu_f + template.shape_offset + n as f64;
                lg + (alpha / 2.0 - 1.0) * std::f64::consts::LN_2
                    + nu_f / 2.0 * std::f64::consts::PI.ln()
                    - identity_node_term(template.scale, nu_f + template.shape_offset, nu)
            })
            .collect();
        Ok(Self {
            post_scale,
            shape,
            base,
            words: p.div_ceil(64).max(1),
            cache: (0..p).map(|_| RwLock::new(FxHashMap::default())).collect(),
        })
    }

    pub fn p(&self) -> usize {
        self.post_scale.p()
    }

    fn value(&self, nu: usize, logdet_parents: f64, schur: f64) -> f64 {
        self.base[nu] - 0.5 * logdet_parents - self.shape * schur.ln()
    }

    fn compute_node(&self, i: usize, parents: &[usize]) -> Result<f64> {
        let blk = node_block(&self.post_scale, i, parents, false, "log_dag_posterior")?;
        Ok(self.value(parents.len(), blk.logdet_parents, blk.schur))
    }

    /// Node score of `to` under `parents`, and in `out[f]` the node score
    /// after toggling the edge `f -> to`, for every `f > to`.
    ///
    /// Uses one factorization of the augmented parent block plus rank-one
    /// updates, and bypasses the cache. Falls back to a direct evaluation
    /// when an update loses positivity.
    pub fn toggle_row(&self, to: usize, parents: &[usize], out: &mut [f64]) -> Result<f64> {
        self.toggle_row_with(to, parents, out, &mut RowScratch::default())
    }

    fn toggle_row_with(
        &self,
        to: usize,
        parents: &[usize],
        out: &mut [f64],
        scratch: &mut RowScratch,
    ) -> Result<f64> {
        let p = self.p();
        let u = &self.post_scale;
        let nu = parents.len();
        let m = nu + 1;
        let idx = |r: usize| if r < nu { parents[r] } else { to };

        // in-place LDL^T of the block ordered [parents..., to]
        let RowScratch { f, piv, inv, y, z } = scratch;
        f.clear();
        f.resize(m * m, 0.0);
        for r in 0..m {
            for c in 0..=r {
                f[r * m + c] = u[(idx(r), idx(c))];
            }
        }
        piv.clear();
        piv.resize(m, 0.0);
        for j in 0..m {
            let d = f[j * m + j];
            if !(d > DEFAULT_PIVOT_FLOOR) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    op: "log_dag_posterior",
                    index: idx(j),
                    pivot: d,
                });
            }
            piv[j] = d;
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
        let ld: f64 = piv[..nu].iter().map(|d| d.ln()).sum();
        let schur = piv[nu];
        let current = self.value(nu, ld, schur);

        // unit lower inverse; its columns give the diagonal of the block inverse
        inv.clear();
        inv.resize(m * m, 0.0);
        for j in 0..m {
            inv[j * m + j] = 1.0;
            for r in j + 1..m {
                let mut acc = 0.0;
                for k in j..r {
                    acc += f[r * m + k] * inv[k * m + j];
                }
                inv[r * m + j] = -acc;
            }
        }
        let kii = 1.0 / schur;
        for (r, &from) in parents.iter().enumerate() {
            let krr: f64 = (r..m).map(|k| inv[k * m + r] * inv[k * m + r] / piv[k]).sum();
            let kri = inv[nu * m + r] / schur;
            let pr = krr - kri * kri / kii;
            let s = 1.0 / (krr * kii - kri * kri) * krr;
            out[from] = if pr > 0.0 && s > 0.0 && s.is_finite() {
                self.value(nu - 1, ld + pr.ln(), s)
            } else {
                let mut rest = parents.to_vec();
                rest.remove(r);
                self.node_score(to, &rest)?
            };
        }

        // additions: z = L^-1 b against the parent block, y the same for `to`
        y.clear();
        y.extend((0..nu).map(|r| f[nu * m + r] * piv[r]));
        z.clear();
        z.resize(nu, 0.0);
        for g in to + 1..p {
            if parents.binary_search(&g).is_ok() {
                continue;
            }
            let mut dg = u[(g, g)];
            let mut cross = u[(g, to)];
            for r in 0..nu {
                let mut v = u[(parents[r], g)];
                for c in 0..r {
                    v -= f[r * m + c] * z[c];
                }
                z[r] = v;
                dg -= v * v / piv[r];
                cross -= v * y[r] / piv[r];
            }
            let s = schur - cross * cross / dg;
            out[g] = if dg > DEFAULT_PIVOT_FLOOR && s > DEFAULT_PIVOT_FLOOR {
                self.value(nu + 1, ld + dg.ln(), s)
            } else {
                let pos = parents.partition_point(|&j| j < g);
                let mut more = parents.to_vec();
                more.insert(pos, g);
                self.node_score(to, &more)?
            };
        }
        Ok(current)
    }

    /// Score contribution of vertex `i` with the given sorted parent list.
    pub fn node_score(&self, i: usize, parents: &[usize]) -> Result<f64> {
        if i >= self.p() {
            return Err(Error::IndexOutOfRange { index: i, p: self.p() });
        }
        if let Some(&j) = parents.iter().find(|&&j| j >= self.p()) {
            return Err(Error::IndexOutOfRange { index: j, p: self.p() });
        }
        let mut inline = [0u64; INLINE_WORDS];
        let mut heap = Vec::new();
        let buf: &mut [u64] = if self.words <= INLINE_WORDS {
            &mut inline
        } else {
            heap.resize(self.words, 0);
            &mut heap
        };
        let key = parent_mask(parents, self.words, buf);
        if let Some(&v) = self.cache[i].read().unwrap().get(key) {
            return Ok(v);
        }
        let v = self.compute_node(i, parents)?;
        self.cache[i].write().unwrap().entry(key.into()).or_insert(v);
        Ok(v)
    }

    /// Unnormalized log posterior probability of `dag`.
    pub fn score(&self, dag: &Dag) -> Result<f64> {
        (0..dag.p()).try_fold(0.0, |acc, i| Ok(acc + self.node_score(i, dag.parents_of(i))?))
    }

    pub fn cache_len(&self) -> usize {
        self.cache.iter().map(|c| c.read().unwrap().len()).sum()
    }
}

/// Thresholded supports of the regularized precision's Cholesky factor.
///
/// The thresholds are order statistics of the nonzero off-diagonal `|L_ij|`
/// at quantile ranks `k / n_thresholds`, plus `tau = 0`. Output is sorted
/// from sparsest to densest and de-duplicated.
pub fn candidate_graphs(s: &SymMatrix, cfg: &SelectionConfig) -> Result<Vec<Dag>> {
    cfg.validate()?;
    let p = s.p();
    let prec = spd_inverse(&s.add_ridge(cfg.ridge))?;
    let l = mcd(&prec)?.l;
    let mut vals: Vec<f64> = (0..p)
        .flat_map(|j| (j + 1..p).map(move |i| (i, j)))
        .map(|(i, j)| l[(i, j)].abs())
        .filter(|v| *v > 0.0)
        .collect();
    vals.sort_by(f64::total_cmp);
    let m = vals.len();
    let mut taus = Vec::with_capacity(cfg.n_thresholds + 1);
    if m > 0 {
        for k in (1..=cfg.n_thresholds).rev() {
            let rank = k as f64 / cfg.n_thresholds as f64;
            let idx = ((rank * m as f64).ceil() as usize).clamp(1, m) - 1;
            taus.push(vals[idx]);
        }
    }
    taus.push(0.0);
    taus.dedup();
    let mut out: Vec<Dag> = Vec::with_capacity(taus.len() + 1);
    out.push(Dag::empty(p));
    for tau in taus {
        let dag = Dag::from_cholesky_support(&l, tau);
        if out.last() != Some(&dag) {
            out.push(dag);
        }
    }
    Ok(out)
}

fn dedup_in_order(dags: &[Dag]) -> Vec<Dag> {
    let mut seen = HashSet::with_capacity(dags.len());
    dags.iter().filter(|d| seen.insert(*d)).cloned().collect()
}

/// Greedy single-edge hill climbing from every seed.
///
/// Each move takes the best-improving toggle; a climb stops at a local
/// maximum, after `sss_iters` moves, or when it reaches a graph that an
/// earlier climb already visited (the remaining path is then known). The
/// output is the de-duplicated seeds followed by the `sss_pool` best visited
/// graphs.
pub fn sss_expand(seeds: &[Dag], scorer: &DagScorer, cfg: &SelectionConfig) -> Result<Vec<Dag>> {
    let seeds = dedup_in_order(seeds);
    if cfg.sss_iters == 0 || seeds.is_empty() {
        return Ok(seeds);
    }
    let p = scorer.p();
    let words = (p * p).div_ceil(64).max(1);
    let edge_bits = |dag: &Dag| -> Box<[u64]> {
        let mut bits = vec![0u64; words];
        for (from, to) in dag.edges() {
            let b = to * p + from;
            bits[b / 64] |= 1 << (b % 64);
        }
        bits.into()
    };
    let seed_set: FxHashSet<Box<[u64]>> = seeds.iter().map(edge_bits).collect();
    let mut visited: FxHashSet<Box<[u64]>> = FxHashSet::default();
    let mut pool: Vec<(f64, Box<[u64]>)> = Vec::new();
    // delta[to * p + from] = score change of toggling from -> to
    let mut delta = vec![f64::NEG_INFINITY; p * p];
    let mut row = vec![0.0; p];
    let mut scratch = RowScratch::default();
    // parent sets that the rows of `delta` and `node` currently describe
    let mut basis: Vec<Option<Vec<usize>>> = vec![None; p];
    let mut node = vec![0.0; p];

    for seed in &seeds {
        let mut bits = edge_bits(seed);
        if !visited.insert(bits.clone()) {
            continue;
        }
        let mut state = seed.clone();
        for to in 0..p {
            let pa = state.parents_of(to);
            if basis[to].as_deref() == Some(pa) {
                continue;
            }
            node[to] = scorer.toggle_row_with(to, pa, &mut row, &mut scratch)?;
            for from in to + 1..p {
                delta[to * p + from] = row[from] - node[to];
            }
            basis[to] = Some(pa.to_vec());
        }
        let mut total: f64 = node.iter().sum();
        for _ in 0..cfg.sss_iters {
            let mut best = (0.0, usize::MAX, usize::MAX);
            for to in 0..p {
                for from in to + 1..p {
                    let d = delta[to * p + from];
                    if d > best.0 {
                        best = (d, from, to);
                    }
                }
            }
            let (gain, from, to) = best;
            if from == usize::MAX {
                break;
            }
            state.toggle_in_place(from, to)?;
            let b = to * p + from;
            bits[b / 64] ^= 1 << (b % 64);
            node[to] = scorer.toggle_row_with(to, state.parents_of(to), &mut row, &mut scratch)?;
            total += gain;
            for f in to + 1..p {
                delta[to * p + f] = row[f] - node[to];
            }
            basis[to] = Some(state.parents_of(to).to_vec());
            if !visited.insert(bits.clone()) {
                break;
            }
            if !seed_set.contains(&bits) {
                pool.push((total, bits.clone()));
            }
        }
    }
    pool.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    pool.truncate(cfg.sss_pool);
    let mut out = seeds;
    for (_, bits) in pool {
        let parents = (0..p)
            .map(|to| {
                (to + 1..p)
                    .filter(|&from| bits[(to * p + from) / 64] >> ((to * p + from) % 64) & 1 == 1)
                    .collect()
            })
            .collect();
        out.push(Dag::from_parents(p, parents)?);
    }
    Ok(out)
}

/// Leave-one-fold-out training sets. Rows keep their original order.
pub fn cv_partitions(y: &Matrix, folds: usize, rng: &mut impl Rng) -> Result<Vec<Matrix>> {
    let n = y.rows();
    if folds < 2 || folds > n {
        return Err(Error::InvalidFolds { folds, n });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let (base, extra) = (n / folds, n % folds);
    let mut fold_of = vec![0usize; n];
    let mut pos = 0;
    for k in 0..folds {
        let size = base + usize::from(k < extra);
        for &r in &idx[pos..pos + size] {
            fold_of[r] = k;
        }
        pos += size;
    }
    Ok((0..folds)
        .map(|k| {
            let keep: Vec<usize> = (0..n).filter(|&r| fold_of[r] != k).collect();
            y.select_rows(&keep)
        })
        .collect())
}

/// Candidate DAGs pooled from the full data and every CV training set.
pub fn candidate_pool(
    y: &Matrix,
    template: PriorTemplate,
    cfg: &SelectionConfig,
    rng: &mut impl Rng,
) -> Result<Vec<Dag>> {
    cfg.validate()?;
    let n = y.rows();
    if n < cfg.cv_folds {
        return Err(Error::InvalidFolds {
            folds: cfg.cv_folds,
            n,
        });
    }
    let mut subsets = vec![y.clone()];
    subsets.extend(cv_partitions(y, cfg.cv_folds, rng)?);
    let mut seen = HashSet::new();
    let mut pool = Vec::new();
    for sub in &subsets {
        let s = sub.gram_over_n();
        let scorer = DagScorer::new(&s, sub.rows(), template)?;
        let seeds = candidate_graphs(&s, cfg)?;
        for dag in sss_expand(&seeds, &scorer, cfg)? {
            if seen.insert(dag.clone()) {
                pool.push(dag);
            }
        }
    }
    Ok(pool)
}

/// `true` when `a` should be preferred over `b` at equal score.
fn tie_prefers(a: &Dag, b: &Dag) -> bool {
    (a.edge_count(), a) < (b.edge_count(), b)
}

/// Highest-scoring DAG in `candidates`; ties go to fewer edges, then to the
/// lexicographically smaller parent lists.
pub fn argmax_dag(candidates: &[Dag], scorer: &DagScorer) -> Result<(Dag, f64)> {
    let mut best: Option<(&Dag, f64)> = None;
    for dag in candidates {
        let s = scorer.score(dag)?;
        best = match best {
            None => Some((dag, s)),
            Some((b, bs)) if s > bs || (s == bs && tie_prefers(dag, b)) => Some((dag, s)),
            keep => keep,
        };
    }
    let (dag, s) = best.ok_or_else(|| Error::InvalidArgument("no candidate graphs".into()))?;
    Ok((dag.clone(), s))
}

/// Selects the DAG with the highest full-data posterior score among the
/// pooled candidates.
pub fn select_dag(
    y: &Matrix,
    template: PriorTemplate,
    cfg: &SelectionConfig,
    rng: &mut impl Rng,
) -> Result<Dag> {
    if y.cols() == 0 {
        return Err(Error::InvalidArgument("data has no columns".into()));
    }
    let pool = candidate_pool(y, template, cfg, rng)?;
    let scorer = DagScorer::new(&y.gram_over_n(), y.rows(), template)?;
    Ok(argmax_dag(&pool, &scorer)?.0)
}
