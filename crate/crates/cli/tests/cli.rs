use std::path::Path;
use std::process::{Command, Output};

use spike_core::band::degree_of_diagonal_dominance;
use spike_core::band::io::read_matrix;

fn spike(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spike"))
        .args(args)
        .env("SPIKE_K_CACHE", cache)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn gen_writes_requested_dominance() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("k");
    let out = dir.path().join("m.spkb");
    let o = spike(&["gen", "--n", "1000", "--k", "8", "--dd", "1.5", "--seed", "7", "--out", out.to_str().unwrap()], &cache);
    assert!(o.status.success());
    let a = read_matrix(&out).unwrap();
    assert_eq!((a.n(), a.kl(), a.ku()), (1000, 8, 8));
    assert!((degree_of_diagonal_dominance(&a) - 1.5).abs() < 1e-12);

    let mm = dir.path().join("weak.mtx");
    let o = spike(&["gen", "--n", "200", "--kl", "3", "--ku", "2", "--dd", "0.001", "--out", mm.to_str().unwrap()], &cache);
    assert!(o.status.success());
    assert!(degree_of_diagonal_dominance(&read_matrix(&mm).unwrap()) < 1.0);
}

#[test]
fn gen_without_n_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = spike(&["gen", "--k", "3", "--out", dir.path().join("x.mtx").to_str().unwrap()], &dir.path().join("k"));
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("--n"));
}

#[test]
fn calibrate_caches_and_bench_reads_it() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("sub").join("k_cache");
    let o = spike(&["calibrate", "--k", "16", "--n", "8000", "--write-cache"], &cache);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let k: f64 = stdout(&o).trim().strip_prefix("K=").unwrap().parse().unwrap();
    assert!(k > 0.0);
    assert!(std::fs::read_to_string(&cache).unwrap().starts_with("K="));

    // A corrupt cache is reported, proving bench consults it.
    std::fs::write(&cache, "K=oops\n").unwrap();
    let o = spike(&["bench", "--n", "500", "--k", "2", "--threads", "2"], &cache);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad K value"));
    // ...unless overridden on the command line.
    let o = spike(&["bench", "--n", "500", "--k", "2", "--threads", "2", "--ratio-k", "1.2"], &cache);
    assert!(o.status.success());
}

#[test]
fn calibrate_warns_on_tiny_sample() {
    let dir = tempfile::tempdir().unwrap();
    let o = spike(&["calibrate", "--n", "10", "--k", "1"], &dir.path().join("k"));
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sample too small"));
}

#[test]
fn bench_emits_one_row_per_stage_and_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let o = spike(
        &["bench", "--n", "4000", "--k", "4", "--nrhs", "4", "--threads", "1,2,4,6,8", "--transpose", "--runs", "1"],
        &dir.path().join("k"),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "stage,threads,partitions,seconds,residual,full_sweeps");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 15);
    for r in &rows {
        if r[0] != "factor" {
            assert!(r[4].parse::<f64>().unwrap() <= 1e-12);
        }
    }
    assert_eq!(rows.iter().filter(|r| r[0] == "transpose-solve").count(), 5);
}

#[test]
fn sweep_flags_calculated_point_and_accepts_single_point_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = spike(
        &["sweep-ratios", "--n", "3000", "--k", "3", "--threads", "4", "--r12", "1", "--r13", "2", "--runs", "1", "--csv", csv.to_str().unwrap()],
        &dir.path().join("k"),
    );
    assert!(o.status.success());
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("r12,r13,factor_seconds,solve_seconds,total_seconds,calculated"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",true")).count(), 1);
    assert_eq!(text.lines().count(), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains('%'));
}

#[test]
fn accuracy_on_explicit_levels() {
    let dir = tempfile::tempdir().unwrap();
    let o = spike(&["accuracy", "--n", "400", "--k", "4", "--dd", "1.5,0.5"], &dir.path().join("k"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert_eq!(text.lines().next().unwrap(), "dd,condition,solver,residual");
    assert_eq!(text.lines().count(), 7);
    for solver in ["spike-nopivot", "spike-pivot", "oracle-pivot"] {
        assert_eq!(text.matches(solver).count(), 2);
    }
}
