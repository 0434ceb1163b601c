use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use dagw::ensemble::{estimate, EnsembleConfig, Variant};
use dagw::io::{matrix_to_text, parse_matrix, write_matrix};
use dagw::linalg::{Matrix, SymMatrix};
use dagw::rng::stream_rng;
use dagw::simbench::sample_gaussian;

fn dagw(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dagw"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_data(dir: &Path, name: &str, y: &Matrix) {
    write_matrix(&dir.join(name), y).unwrap();
}

fn identity_sample(n: usize) -> Matrix {
    sample_gaussian(&SymMatrix::identity(4), n, &mut stream_rng(17, 0)).unwrap()
}

#[test]
fn missing_input_exits_2_and_names_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = dagw(&["estimate", "nope.txt"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.txt"), "{}", stderr(&o));
}

#[test]
fn malformed_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "2 2\n1 2\n").unwrap();
    assert_eq!(dagw(&["estimate", "bad.txt"], dir.path()).status.code(), Some(2));
    assert_eq!(dagw(&["heatmap", "bad.txt"], dir.path()).status.code(), Some(2));
    assert_eq!(dagw(&["estimate", "--variant", "other"], dir.path()).status.code(), Some(2));
    assert_eq!(dagw(&["simulate"], dir.path()).status.code(), Some(2));
    fs::write(dir.path().join("c.toml"), "version = 1\nbogus = 1\n").unwrap();
    assert_eq!(dagw(&["--config", "c.toml", "simulate"], dir.path()).status.code(), Some(2));
}

#[test]
fn empty_method_list_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "version = 1\nseed = 1\n[benchmark]\nmethods = []\n[[benchmark.scenarios]]\ncase = \"ar\"\np = 10\nn = 50\nreps = 1\n",
    )
    .unwrap();
    let o = dagw(&["benchmark", "--config", "c.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("method"));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let y = Matrix::from_fn(20, 2, |r, _| r as f64 - 9.5);
    write_data(dir.path(), "y.txt", &y);
    let cfg = "version = 1\n[ensemble.selection]\nridge = 0.0\n";
    fs::write(dir.path().join("c.toml"), cfg).unwrap();
    let o = dagw(&["estimate", "y.txt", "--config", "c.toml", "--K", "2"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("positive definite"), "{}", stderr(&o));
}

#[test]
fn bayes_single_ordering_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let y = identity_sample(50);
    write_data(dir.path(), "y.txt", &y);
    let o = dagw(&["estimate", "y.txt", "--K", "1", "--variant", "bayes", "--seed", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let cfg = EnsembleConfig {
        k: 1,
        ..EnsembleConfig::default()
    };
    let lib = estimate(&y, &cfg, Variant::Bayes, 4).unwrap();
    let text = fs::read_to_string(dir.path().join("omega.txt")).unwrap();
    assert!(text.ends_with(&matrix_to_text(lib.omega_check_tau.as_matrix())));
    assert!(text.starts_with("# dagw estimate"));
    assert!(text.contains("# seed = 4"));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("estimate.json")).unwrap()).unwrap();
    assert_eq!(json["variant"], "BAYES");
    assert_eq!(json["seed"], 4);
    assert_eq!(json["config"]["ensemble"]["k"], 1);
}

#[test]
fn identity_data_gives_near_identity() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), "y.txt", &identity_sample(200));
    let o = dagw(&["estimate", "y.txt", "--K", "5", "--seed", "1", "--out", "res"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let est = parse_matrix(&fs::read_to_string(dir.path().join("res/omega.txt")).unwrap()).unwrap();
    let err = est.max_abs_diff(&Matrix::identity(4));
    assert!(err <= 0.3, "max error {err}");
    assert!(dir.path().join("res/estimate.timing.json").exists());
}

#[test]
fn repeated_estimates_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_data(dir.path(), "y.txt", &identity_sample(40));
    for (out, workers) in [("a", "1"), ("b", "3")] {
        let o = dagw(
            &["estimate", "y.txt", "--K", "4", "--seed", "2", "--workers", workers, "--out", out],
            dir.path(),
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["estimate.json", "omega.txt"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn simulate_then_heatmap() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "version = 1\n[simulate]\ncase = \"banded\"\np = 12\nn = 30\n").unwrap();
    let o = dagw(&["simulate", "--config", "c.toml", "--seed", "3"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let omega = parse_matrix(&fs::read_to_string(dir.path().join("omega0.txt")).unwrap()).unwrap();
    assert_eq!(omega[(0, 1)], 0.5);
    assert_eq!(omega[(0, 2)], 0.3);
    let data = parse_matrix(&fs::read_to_string(dir.path().join("data.txt")).unwrap()).unwrap();
    assert_eq!((data.rows(), data.cols()), (30, 12));
    assert!(dir.path().join("dag0.txt").exists());

    let o = dagw(&["heatmap", "omega0.txt", "data.txt", "--out", "fig"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let svg = fs::read_to_string(dir.path().join("fig/omega0.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let again = dagw(&["heatmap", "omega0.txt", "data.txt", "--out", "fig2"], dir.path());
    assert!(again.status.success());
    assert_eq!(svg, fs::read_to_string(dir.path().join("fig2/omega0.svg")).unwrap());
}

#[test]
fn small_benchmark_smoke_run() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("c.toml"),
        "version = 1\nseed = 8\n[[benchmark.scenarios]]\ncase = \"banded\"\np = 10\nn = 100\nreps = 1\n",
    )
    .unwrap();
    let started = Instant::now();
    let o = dagw(&["benchmark", "--config", "c.toml"], dir.path());
    let secs = started.elapsed().as_secs_f64();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(secs < 60.0, "took {secs:.1} s");
    let csv = fs::read_to_string(dir.path().join("benchmark.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "case,p,n,method,loss,mean,se,reps,seed");
    assert_eq!(rows.len(), 1 + 4 * 5);
    assert!(rows[1].starts_with("banded,10,100,DAGW.BIC,L1,"));
    assert!(rows[1].ends_with(",,1,8"));
    eprintln!("smoke benchmark: {secs:.2} s");
}
