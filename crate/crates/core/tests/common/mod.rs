#![allow(dead_code)]

use std::f64::consts::PI;

use dagw::dagwishart::{
    gaussian_loglik, log_dag_posterior, log_node_score, log_norm_const, log_prior_density, map_estimate,
    posterior_params, DagWishartParams, PriorTemplate,
};
use dagw::ensemble::{estimate_with_permutations, apply_permutation, EnsembleConfig, Permutation, Variant};
use dagw::graph::Dag;
use dagw::linalg::{logdet, mcd, CholeskyParam, Matrix, SymMatrix};
use dagw::rng::stream_rng;
use dagw::selection::{select_dag, SelectionConfig};
use dagw::simbench::sample_gaussian;
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::gamma::ln_gamma;

/// Result of one check: whether it held and a one-line summary.
pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    pub fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

pub fn random_spd(p: usize, rng: &mut impl Rng) -> SymMatrix {
    let b = Matrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let bbt = b.matmul(&b.transpose()).unwrap().scale(1.0 / p as f64);
    SymMatrix::symmetrize(&bbt).add_ridge(0.5)
}

pub fn random_dag(p: usize, density: f64, rng: &mut impl Rng) -> Dag {
    let parents = (0..p)
        .map(|i| (i + 1..p).filter(|_| rng.gen_bool(density)).collect())
        .collect();
    Dag::from_parents(p, parents).unwrap()
}

/// Random Cholesky parameter supported on `dag`.
pub fn random_theta(dag: &Dag, rng: &mut impl Rng) -> CholeskyParam {
    let p = dag.p();
    let mut l = Matrix::identity(p);
    for (j, i) in dag.edges() {
        l[(j, i)] = rng.gen_range(-0.8..0.8);
    }
    let d = (0..p).map(|_| rng.gen_range(0.3..2.0)).collect();
    CholeskyParam { l, d }
}

pub fn random_params(dag: &Dag, rng: &mut impl Rng) -> DagWishartParams {
    let p = dag.p();
    let alpha = (0..p)
        .map(|i| dag.parents_of(i).len() as f64 + 2.5 + rng.gen_range(0.0..8.0))
        .collect();
    DagWishartParams::new(random_spd(p, rng), alpha).unwrap()
}

/// Node term written out from its definition with determinants of explicit
/// sub-blocks.
pub fn reference_node_term(u: &SymMatrix, alpha: f64, i: usize, pa: &[usize]) -> f64 {
    let nu = pa.len() as f64;
    let c = alpha / 2.0 - nu / 2.0 - 1.0;
    let ld_pa = if pa.is_empty() { 0.0 } else { logdet(&u.reorder(pa)).unwrap() };
    let mut aug = vec![i];
    aug.extend_from_slice(pa);
    let ld_aug = logdet(&u.reorder(&aug)).unwrap();
    ln_gamma(c) + (alpha / 2.0 - 1.0) * 2f64.ln() + nu / 2.0 * PI.ln() + (c - 0.5) * ld_pa - c * ld_aug
}

pub fn mcd_reconstruction(trials: usize, max_p: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let p = rng.gen_range(1..=max_p);
        let a = random_spd(p, &mut rng);
        let theta = mcd(&a).unwrap();
        let back = theta.precision();
        let rel = back.as_matrix().max_abs_diff(a.as_matrix()) / a.as_matrix().max_abs();
        worst = worst.max(rel);
    }
    Check::new(worst <= 1e-9, format!("{trials} matrices, worst relative error {worst:.2e}"))
}

pub fn norm_const_matches_node_sum(trials: usize, max_p: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let p = rng.gen_range(1..=max_p);
        let dag = random_dag(p, 0.3, &mut rng);
        let params = random_params(&dag, &mut rng);
        let total = log_norm_const(&params, &dag).unwrap();
        let mut sum = 0.0;
        for i in 0..p {
            let node = log_node_score(i, &params, &dag).unwrap();
            let reference = reference_node_term(&params.scale, params.alpha[i], i, dag.parents_of(i));
            worst = worst.max((node - reference).abs() / reference.abs().max(1.0));
            sum += reference;
        }
        worst = worst.max((total - sum).abs() / sum.abs().max(1.0));
    }
    Check::new(worst <= 1e-10, format!("{trials} (dag, params) pairs, worst gap {worst:.2e}"))
}

/// Posterior density minus prior density minus log-likelihood must not depend
/// on the evaluation point, and equals minus the log marginal likelihood.
pub fn conjugacy_constancy(trials: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 0);
    let n = 50;
    let mut worst_var: f64 = 0.0;
    let mut worst_marg: f64 = 0.0;
    for _ in 0..trials {
        let p = rng.gen_range(1..=4);
        let dag = random_dag(p, 0.5, &mut rng);
        let prior = PriorTemplate::default().params_for(&dag);
        let y = sample_gaussian(&random_spd(p, &mut rng), n, &mut rng).unwrap();
        let s = y.gram_over_n();
        let post = posterior_params(&prior, &s, n).unwrap();
        let vals: Vec<f64> = (0..20)
            .map(|_| {
                let theta = random_theta(&dag, &mut rng);
                log_prior_density(&theta, &post, &dag).unwrap()
                    - log_prior_density(&theta, &prior, &dag).unwrap()
                    - gaussian_loglik(&theta, &s, n)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
        worst_var = worst_var.max(var);
        let log_marginal = log_dag_posterior(&dag, &prior, &s, n).unwrap() - (n * p) as f64 / 2.0 * (2.0 * PI).ln();
        worst_marg = worst_marg.max((mean + log_marginal).abs());
    }
    Check::new(
        worst_var <= 1e-8 && worst_marg <= 1e-6,
        format!("{trials} trials x 20 points, worst variance {worst_var:.2e}, marginal gap {worst_marg:.2e}"),
    )
}

/// No small perturbation of the MAP estimate raises the posterior density.
pub fn map_mode_optimality(trials: usize, seed: u64) -> Check {
    let mut rng = stream_rng(seed, 0);
    let n = 30;
    let mut failures = 0;
    for _ in 0..trials {
        let p = rng.gen_range(1..=5);
        let dag = random_dag(p, 0.5, &mut rng);
        let prior = PriorTemplate::default().params_for(&dag);
        let y = sample_gaussian(&random_spd(p, &mut rng), n, &mut rng).unwrap();
        let s = y.gram_over_n();
        let post = posterior_params(&prior, &s, n).unwrap();
        let mode = map_estimate(&prior, &s, n, &dag).unwrap();
        let best = log_prior_density(&mode, &post, &dag).unwrap();
        let mut ok = true;
        for _ in 0..40 {
            let mut t = mode.clone();
            for (j, i) in dag.edges() {
                t.l[(j, i)] += rng.gen_range(-1e-3..1e-3);
            }
            for d in t.d.iter_mut() {
                *d *= 1.0 + rng.gen_range(-1e-3..1e-3);
            }
            if log_prior_density(&t, &post, &dag).unwrap() > best {
                ok = false;
            }
        }
        if !ok {
            failures += 1;
        }
    }
    Check::new(failures == 0, format!("{} of {trials} trials at the mode", trials - failures))
}

/// Chain 2 -> 1 -> 0 in the 0-based orientation (parents carry larger indices).
pub fn chain_truth() -> SymMatrix {
    let mut l = Matrix::identity(3);
    l[(1, 0)] = -0.7;
    l[(2, 1)] = 0.6;
    CholeskyParam { l, d: vec![0.5, 0.8, 1.0] }.precision()
}

pub fn exhaustive_selection(trials: u64, n: usize) -> Check {
    let omega = chain_truth();
    let template = PriorTemplate::default();
    let cfg = SelectionConfig::default();
    let all = Dag::enumerate_all(3);
    let mut hits = 0;
    for t in 0..trials {
        let mut rng = stream_rng(t, 0);
        let y = sample_gaussian(&omega, n, &mut rng).unwrap();
        let s = y.gram_over_n();
        let best = all
            .iter()
            .map(|d| (log_dag_posterior(d, &template.params_for(d), &s, n).unwrap(), d))
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap()
            .1;
        let chosen = select_dag(&y, template, &cfg, &mut stream_rng(t, 1)).unwrap();
        if &chosen == best {
            hits += 1;
        }
    }
    Check::new(hits >= 18 * trials / 20, format!("{hits}/{trials} trials picked the exhaustive argmax"))
}

/// Relabeling the columns conjugates the estimate when every ordering is used.
pub fn relabel_equivariance(seed: u64) -> Check {
    let p = 4;
    let mut rng = stream_rng(seed, 0);
    let omega = random_spd(p, &mut rng);
    let y = sample_gaussian(&omega, 80, &mut rng).unwrap();
    let cfg = EnsembleConfig {
        deterministic: true,
        ..EnsembleConfig::default()
    };
    let perms = Permutation::all(p);
    let mut worst: f64 = 0.0;
    for variant in [Variant::DagwBic, Variant::Dagw] {
        let base = estimate_with_permutations(&y, &perms, &cfg, variant, seed).unwrap();
        for relabel in &perms {
            let yr = apply_permutation(&y, relabel).unwrap();
            let est = estimate_with_permutations(&yr, &perms, &cfg, variant, seed).unwrap();
            let back = relabel.conjugate(est.omega_check_tau.as_matrix());
            worst = worst.max(back.max_abs_diff(base.omega_check_tau.as_matrix()));
        }
    }
    Check::new(worst <= 1e-10, format!("24 relabelings x 2 variants, worst gap {worst:.2e}"))
}
