//! End-to-end runs of the `bkrylov` binary.

use std::path::Path;
use std::process::{Command, Output};

fn bkrylov(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bkrylov")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn block_parallel_cg_run_converges() {
    let o = bkrylov(&["solve", "--generator", "poisson2d:50", "--solver", "cg:classic", "--s", "8", "--algebra", "bp:8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "converged");
    assert_eq!(v["summary"]["algebra"], "b");
}

#[test]
fn missing_matrix_file_is_an_input_error() {
    let o = bkrylov(&["solve", "--matrix", "/does/not/exist.mtx"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/does/not/exist.mtx"));
}

#[test]
fn exit_codes_distinguish_failure_kinds() {
    assert_eq!(bkrylov(&["solve", "--generator", "poisson2d:20", "--max-iter", "3"]).status.code(), Some(1));
    assert_eq!(bkrylov(&["solve", "--solver", "lsqr"]).status.code(), Some(2));
    assert_eq!(bkrylov(&["solve", "--eta", "-1"]).status.code(), Some(2));
}

#[test]
fn numerical_breakdown_exits_with_its_own_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rotation.mtx");
    std::fs::write(&path, "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 2 1.0\n2 1 -1.0\n").unwrap();
    let o = bkrylov(&["solve", "--matrix", path.to_str().unwrap(), "--s", "1", "--solver", "bicgstab", "--precond", "identity"]);
    assert_eq!(o.status.code(), Some(4), "{}", stdout(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["status"], "breakdown");
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "generator = \"convdiff:12\"\ns = 4\nsolver = \"gmres:modified\"\nrestart = 20\n").unwrap();
    let out = dir.path().join("out");
    let o = bkrylov(&["solve", "--config", cfg.to_str().unwrap(), "--solver", "bicgstab:pipelined", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("solve.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["solver"], "bicgstab:pipelined");
    assert_eq!(v["config"]["generator"], "convdiff:12");
    let csv = std::fs::read_to_string(out.join("solve.csv")).unwrap();
    assert!(csv.starts_with("# bkrylov-report v1 solver=bicgstab:pipelined"));
}

fn sweep_into(dir: &Path) -> Output {
    bkrylov(&["sweep", "--generator", "poisson2d:24", "--s", "16", "--sweep", "p=1,4,16", "--out", dir.to_str().unwrap()])
}

#[test]
fn sweep_emits_one_report_per_point_and_combined_tables() {
    let dir = tempfile::tempdir().unwrap();
    let o = sweep_into(dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for p in ["1", "4", "16"] {
        assert!(dir.path().join(format!("p-{p}.csv")).exists());
        assert!(dir.path().join(format!("p-{p}.json")).exists());
    }
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut rdr = csv::Reader::from_reader(table.as_bytes());
    let headers = rdr.headers().unwrap().clone();
    let it = headers.iter().position(|h| h == "iterations").unwrap();
    let iterations: Vec<usize> = rdr.records().map(|r| r.unwrap()[it].parse().unwrap()).collect();
    assert_eq!(iterations.len(), 3);
    assert!(iterations.windows(2).all(|w| w[1] < w[0]), "{iterations:?}");
    assert!(dir.path().join("sweep_history.csv").exists());
}

#[test]
fn identical_sweeps_write_identical_csv() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    sweep_into(a.path());
    sweep_into(b.path());
    for name in ["sweep.csv", "sweep_history.csv", "p-4.csv"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn bad_sweep_axis_is_a_config_error() {
    assert_eq!(bkrylov(&["sweep", "--s", "4", "--sweep", "p=3"]).status.code(), Some(2));
    assert_eq!(bkrylov(&["sweep", "--sweep", "colour=1"]).status.code(), Some(2));
}

#[test]
fn kernel_bench_reports_model_columns() {
    let o = bkrylov(&["bench-kernels", "--n", "256", "--s", "4", "--reps", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("kernel,n,s,p,flops,values,intensity,time_us,time_per_rhs_us"));
    assert_eq!(text.lines().count(), 1 + 1 + 2 * 3);
}

#[test]
fn overlap_bench_prints_the_doubling_table() {
    let o = bkrylov(&["bench-overlap", "--ranks", "16", "--overlap", "0.99"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).lines().any(|l| l.ends_with(",0.9900")));
}

#[test]
fn check_passes_and_writes_sections() {
    let dir = tempfile::tempdir().unwrap();
    let o = bkrylov(&["check", "--trials", "30", "--s", "4", "--out", dir.path().to_str().unwrap()]);
    let text = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{text}");
    assert!(text.lines().all(|l| l.starts_with("PASS")), "{text}");
    assert!(text.contains("determinism"));
    assert!(dir.path().join("algebra.txt").exists());
}
