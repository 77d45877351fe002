use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use scaling_ot::io::{format_measure, read_measure, write_measure};
use scaling_ot::GridGeometry;
use serde_json::Value;
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scaling-ot")).current_dir(dir).args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn bump(n: usize, c: f64, w: f64) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|i| (-((i as f64 + 0.5) / n as f64 - c).powi(2) / (2.0 * w * w)).exp() + 1e-3).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn line(n: usize) -> GridGeometry {
    GridGeometry::new(vec![n], 1.0 / n as f64).unwrap()
}

/// Temp dir with a.csv and b.csv: 64-point bumps at 0.25 and 0.75.
fn workspace() -> TempDir {
    let dir = TempDir::new().unwrap();
    write_measure(&dir.path().join("a.csv"), &line(64), &bump(64, 0.25, 0.08)).unwrap();
    write_measure(&dir.path().join("b.csv"), &line(64), &bump(64, 0.75, 0.08)).unwrap();
    dir
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_converges_and_writes_outputs() {
    let dir = workspace();
    let o = run(dir.path(), &["solve", "--cost", "sqeuclid", "--mu", "a.csv", "--nu", "b.csv", "--eps-final", "0.1h2", "--out", "report.json", "--coupling", "pi.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(dir.path().join("report.json"));
    assert!(r["marginalErrorLInf"].as_f64().unwrap() <= 1e-7);
    assert!((r["finalEps"].as_f64().unwrap() - 0.1 / 4096.0).abs() < 1e-15);
    let pi = std::fs::read_to_string(dir.path().join("pi.csv")).unwrap();
    assert!(pi.starts_with("row,col,value\n"));
    let mass: f64 = pi.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((mass - 1.0).abs() < 1e-6);
}

#[test]
fn missing_file_is_a_usage_error() {
    let dir = workspace();
    let o = run(dir.path(), &["solve", "--mu", "a.csv", "--nu", "nope.csv"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope.csv"));
}

#[test]
fn parse_error_names_file_and_line() {
    let dir = workspace();
    std::fs::write(dir.path().join("bad.csv"), "# shape: 3 spacing: 0.5\n0.2\nabc\n0.3\n").unwrap();
    let o = run(dir.path(), &["solve", "--mu", "bad.csv", "--nu", "bad.csv"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.csv:3:"));
}

#[test]
fn bad_flags_exit_with_one() {
    let dir = workspace();
    assert_eq!(code(&run(dir.path(), &["solve", "--mu", "a.csv", "--nu", "b.csv", "--eps-final", "0.1h3"])), 1);
    assert_eq!(code(&run(dir.path(), &["frobnicate"])), 1);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);
}

#[test]
fn iteration_cap_gives_non_converged_report() {
    let dir = workspace();
    let o = run(dir.path(), &["solve", "--mu", "a.csv", "--nu", "b.csv", "--max-iter", "1", "--out", "r.json"]);
    assert_eq!(code(&o), 2);
    let r = json(dir.path().join("r.json"));
    assert!(r["marginalErrorLInf"].as_f64().unwrap() > 1e-7);
}

#[test]
fn config_file_supplies_defaults_and_rejects_unknown_keys() {
    let dir = workspace();
    std::fs::write(dir.path().join("run.toml"), "mu = \"a.csv\"\nnu = \"b.csv\"\nmax-iter = 1\neps-final = \"1h2\"\n").unwrap();
    assert_eq!(code(&run(dir.path(), &["solve", "--config", "run.toml"])), 2);
    let o = run(dir.path(), &["solve", "--config", "run.toml", "--max-iter", "100000", "--out", "r.json"]);
    assert_eq!(code(&o), 0);
    assert!((json(dir.path().join("r.json"))["finalEps"].as_f64().unwrap() - 1.0 / 4096.0).abs() < 1e-15);
    std::fs::write(dir.path().join("bad.toml"), "mu = \"a.csv\"\nthetta = 1e-10\n").unwrap();
    let o = run(dir.path(), &["solve", "--config", "bad.toml", "--nu", "b.csv"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("thetta"));
}

#[test]
fn unbalanced_solve_uses_gap_rule() {
    let dir = workspace();
    let o = run(dir.path(), &["solve", "--mu", "a.csv", "--nu", "b.csv", "--lambda", "1", "--eps-final", "1h2", "--tol", "1e-9", "--out", "r.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(dir.path().join("r.json"))["primalDualGap"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn barycenter_of_identical_inputs() {
    let dir = workspace();
    let o = run(dir.path(), &["barycenter", "--input", "a.csv", "--input", "a.csv", "--weights", "0.5,0.5", "--out", "bar.csv", "--report", "bar.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (_, bar) = read_measure::<f64>(&dir.path().join("bar.csv")).unwrap();
    let (_, a) = read_measure::<f64>(&dir.path().join("a.csv")).unwrap();
    let l1: f64 = bar.iter().zip(&a).map(|(x, y)| (x - y).abs()).sum();
    assert!(l1 <= 1e-3, "{l1}");
}

#[test]
fn written_measures_round_trip() {
    let dir = workspace();
    assert_eq!(code(&run(dir.path(), &["barycenter", "--input", "a.csv", "--input", "b.csv", "--out", "bar.csv"])), 0);
    let text = std::fs::read_to_string(dir.path().join("bar.csv")).unwrap();
    let (g, w) = read_measure::<f64>(&dir.path().join("bar.csv")).unwrap();
    assert_eq!(format_measure(&g, &w).unwrap(), text);
}

#[test]
fn flow_frames_conserve_mass_and_avoid_barrier() {
    let dir = TempDir::new().unwrap();
    let n = 64;
    let g = line(n);
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let pot: Vec<String> = xs.iter().map(|&x| if (0.4..0.5).contains(&x) { "inf".into() } else { (10.0 * x).to_string() }).collect();
    std::fs::write(dir.path().join("pot.csv"), format!("# shape: {n} spacing: {}\n{}\n", 1.0 / n as f64, pot.join("\n"))).unwrap();
    let m: Vec<f64> = xs.iter().map(|&x| if x >= 0.6 { 1.0 } else { 0.0 }).collect();
    let s: f64 = m.iter().sum();
    write_measure(&dir.path().join("mu0.csv"), &g, &m.iter().map(|v| v / s).collect::<Vec<_>>()).unwrap();
    let o = run(dir.path(), &["flow", "--mu0", "mu0.csv", "--potential", "pot.csv", "--steps", "4", "--out-dir", "frames"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for k in 1..=4 {
        let (_, f) = read_measure::<f64>(&dir.path().join(format!("frames/frame_{k:04}.csv"))).unwrap();
        assert!((f.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        assert!(f.iter().zip(&xs).filter(|(_, x)| (0.4..0.5).contains(*x)).all(|(v, _)| *v == 0.0));
    }
    assert_eq!(json(dir.path().join("frames/reports.json")).as_array().unwrap().len(), 4);
}

#[test]
fn auction_finds_optimal_assignment() {
    let dir = TempDir::new().unwrap();
    std::fs::write(dir.path().join("c.csv"), "3,1,4\n1,5,9\n2,6,5\n").unwrap();
    let o = run(dir.path(), &["auction", "--cost-file", "c.csv", "--out", "a.json"]);
    assert_eq!(code(&o), 0);
    let r = json(dir.path().join("a.json"));
    assert_eq!(r["value"].as_f64(), Some(7.0));
    assert_eq!(r["assignment"], serde_json::json!([1, 0, 2]));
}

#[test]
fn bench_rows_follow_the_grid() {
    let dir = workspace();
    let o = run(dir.path(), &["bench", "--mu", "a.csv", "--nu", "b.csv", "--eps-grid", "10h2,5h2,2h2,1h2", "--tol", "1e-6", "--out", "bench.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bench.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(csv.lines().next(), Some("eps,iterations,gap,converged"));
    assert_eq!(rows.len(), 4);
    let iters: Vec<usize> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(iters.windows(2).all(|w| w[0] <= w[1]), "{iters:?}");
    assert!(rows.iter().all(|r| r[3] == "true"));
}
