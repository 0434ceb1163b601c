//! Command-line front end: `estimate`, `benchmark`, `heatmap` and `simulate`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{Overrides, RunConfig};
use crate::ensemble::{estimate, EnsembleEstimate, Variant};
use crate::error::{Error, Result};
use crate::heatmap::render_all;
use crate::io::{matrix_to_text, read_matrix, write_dag};
use crate::linalg::Matrix;
use crate::rng::stream_rng;
use crate::simbench::{csv_row, make_omega, run_benchmark, sample_gaussian, LossReport, ScenarioSpec, CSV_HEADER};

/// Version tag written into every estimate file.
pub const FORMAT_VERSION: u32 = 1;

const SIMULATE_STREAM: u64 = u64::MAX - 2;

#[derive(Debug, Parser)]
#[command(name = "dagw", version, about = "Order-invariant DAG-Wishart precision matrix estimation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    /// Number of random permutations.
    #[arg(long = "K", global = true)]
    pub k: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a precision matrix from a data file (rows are observations).
    Estimate {
        /// Data matrix file; overrides `estimate.input` in the config.
        input: Option<PathBuf>,
    },
    /// Run the configured simulation scenarios and write a CSV summary.
    Benchmark,
    /// Render one SVG heatmap per matrix file on a shared color scale.
    Heatmap {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Write a true precision matrix, its DAG and a sample for one scenario.
    Simulate,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Process exit code for an error: 3 for numerical failures, 2 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        3
    } else {
        2
    }
}

fn resolve_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        seed: g.seed,
        workers: g.workers,
        variant: g.variant,
        k: g.k,
        out: g.out.clone(),
    });
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn thread_pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cfg.workers {
        b = b.num_threads(w);
    }
    b.build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn comment_header(title: &str, cfg: &RunConfig) -> String {
    let mut s = format!("# {title}\n");
    if let Some(seed) = cfg.seed {
        s.push_str(&format!("# seed = {seed}\n"));
    }
    s.push_str(&format!("# config = {}\n", cfg.echo_json()));
    s
}

fn write_timing(dir: &Path, name: &str, started: Instant) -> Result<()> {
    let v = json!({ "wall_seconds": started.elapsed().as_secs_f64() });
    fs::write(dir.join(name), format!("{v}\n"))?;
    Ok(())
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// JSON document describing an estimate, with the seed and config echo.
pub fn estimate_json(est: &EnsembleEstimate, seed: u64, cfg: &RunConfig) -> serde_json::Value {
    json!({
        "format_version": FORMAT_VERSION,
        "variant": est.variant.name(),
        "seed": seed,
        "k": est.permutations.len(),
        "permutations": est.permutations,
        "per_permutation_edges": est.per_perm_dags.iter().map(|d| d.edge_count()).collect::<Vec<_>>(),
        "l_bar": rows(&est.l_bar),
        "d_bar": est.d_bar,
        "tau_b": est.tau_b,
        "bic": est.bic,
        "omega_check": rows(est.omega_check_tau.as_matrix()),
        "config": cfg.echo_json(),
    })
}

pub fn cmd_estimate(cfg: &RunConfig, input: Option<PathBuf>) -> Result<()> {
    let started = Instant::now();
    let input = input
        .or_else(|| cfg.estimate.input.clone())
        .ok_or_else(|| Error::InvalidArgument("no input data file given".into()))?;
    let seed = cfg.seed.unwrap_or(0);
    let y = read_matrix(&input)?;
    let dir = out_dir(cfg)?;
    let est = thread_pool(cfg)?.install(|| estimate(&y, &cfg.ensemble, cfg.estimate.variant, seed))?;
    let doc = estimate_json(&est, seed, cfg);
    fs::write(
        dir.join("estimate.json"),
        serde_json::to_string_pretty(&doc).expect("json") + "\n",
    )?;
    let omega = comment_header("dagw estimate: final precision matrix", cfg)
        + &matrix_to_text(est.omega_check_tau.as_matrix());
    fs::write(dir.join("omega.txt"), omega)?;
    write_timing(&dir, "estimate.timing.json", started)
}

pub fn cmd_benchmark(cfg: &RunConfig) -> Result<()> {
    let started = Instant::now();
    let specs = cfg.scenarios()?;
    let methods = cfg.benchmark.methods.clone();
    let dir = out_dir(cfg)?;
    let pool = thread_pool(cfg)?;
    let batch = pool.current_num_threads();

    let mut summary = BufWriter::new(File::create(dir.join("benchmark.csv"))?);
    summary.write_all(comment_header("dagw benchmark summary", cfg).as_bytes())?;
    writeln!(summary, "{CSV_HEADER}")?;
    summary.flush()?;
    let mut reps = BufWriter::new(File::create(dir.join("benchmark_reps.csv"))?);
    reps.write_all(comment_header("dagw benchmark repetitions", cfg).as_bytes())?;
    writeln!(reps, "case,p,n,method,rep,{},seed", LossReport::NAMES.join(","))?;
    reps.flush()?;

    for spec in &specs {
        let rows = pool.install(|| {
            run_benchmark(spec, &methods, &cfg.ensemble, batch, |r| {
                for (m, loss, _) in &r.methods {
                    let vals: Vec<String> = loss.values().iter().map(|v| v.to_string()).collect();
                    writeln!(
                        reps,
                        "{},{},{},{},{},{},{}",
                        spec.case,
                        spec.p,
                        spec.n,
                        m,
                        r.rep,
                        vals.join(","),
                        spec.seed
                    )?;
                }
                reps.flush()?;
                Ok(())
            })
        })?;
        for r in &rows {
            writeln!(summary, "{}", csv_row(r))?;
        }
        summary.flush()?;
    }
    write_timing(&dir, "benchmark.timing.json", started)
}

pub fn cmd_heatmap(cfg: &RunConfig, inputs: &[PathBuf]) -> Result<()> {
    let mats = inputs
        .iter()
        .map(|p| read_matrix(p))
        .collect::<Result<Vec<_>>>()?;
    let names: Vec<String> = inputs
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "matrix".into())
        })
        .collect();
    let dir = out_dir(cfg)?;
    let pairs: Vec<(&str, &Matrix)> = names.iter().map(String::as_str).zip(mats.iter()).collect();
    for (name, svg) in names.iter().zip(render_all(&pairs)) {
        fs::write(dir.join(format!("{name}.svg")), svg)?;
    }
    Ok(())
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.require_seed()?;
    let s = &cfg.simulate;
    let spec = ScenarioSpec {
        case: s.case,
        p: s.p,
        n: s.n,
        reps: 1,
        seed,
    };
    let mut rng = stream_rng(seed, SIMULATE_STREAM);
    let truth = make_omega(&spec, &mut rng)?;
    let y = sample_gaussian(&truth.omega, spec.n, &mut rng)?;
    let dir = out_dir(cfg)?;
    let head = comment_header("dagw simulate", cfg);
    fs::write(dir.join("omega0.txt"), head.clone() + &matrix_to_text(truth.omega.as_matrix()))?;
    fs::write(dir.join("data.txt"), head + &matrix_to_text(&y))?;
    write_dag(&dir.join("dag0.txt"), &truth.dag)
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Estimate { input } => cmd_estimate(&cfg, input),
        Command::Benchmark => cmd_benchmark(&cfg),
        Command::Heatmap { inputs } => cmd_heatmap(&cfg, &inputs),
        Command::Simulate => cmd_simulate(&cfg),
    }
}
