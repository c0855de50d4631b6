use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use leap::data::{read_records, GraphRecord};
use leap::ect::{local_ect, sample_directions, EctMode, ThresholdGrid, DEFAULT_THRESHOLD_RANGE};
use leap::Target;
use serde_json::Value;
use tempfile::TempDir;

fn leap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_leap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = leap(args);
    assert!(
        out.status.success(),
        "leap {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write_graphs(dir: &TempDir, name: &str, graphs: &[GraphRecord]) -> PathBuf {
    let path = dir.path().join(name);
    let text: String = graphs
        .iter()
        .map(|g| serde_json::to_string(g).unwrap() + "\n")
        .collect();
    fs::write(&path, text).unwrap();
    path
}

fn record(nodes: usize, edges: &[[usize; 2]], features: Vec<Vec<f64>>) -> GraphRecord {
    GraphRecord {
        nodes,
        edges: edges.to_vec(),
        features,
        target: Target::Class(0),
        pe: None,
    }
}

fn triangle() -> GraphRecord {
    record(
        3,
        &[[0, 1], [1, 2], [0, 2]],
        vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
    )
}

fn path_graph() -> GraphRecord {
    record(
        4,
        &[[0, 1], [1, 2], [2, 3]],
        vec![vec![0.1, 0.2], vec![0.5, -0.3], vec![-0.4, 0.7], vec![0.9, 0.9]],
    )
}

fn matrix(v: &Value) -> Vec<Vec<f64>> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|row| row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
        .collect()
}

#[test]
fn exact_ect_of_triangle_ends_at_euler_characteristic() {
    let dir = TempDir::new().unwrap();
    let input = write_graphs(&dir, "g.jsonl", &[triangle()]);
    let out = ok(&["ect", "--input", input.to_str().unwrap(), "--exact"]);
    let report: Value = serde_json::from_str(&out).unwrap();
    assert!(report.get("smoothed").is_none());
    for row in matrix(&report["exact"]) {
        assert_eq!(*row.last().unwrap(), 0.0);
    }
}

#[test]
fn local_ect_matches_library() {
    let dir = TempDir::new().unwrap();
    let rec = path_graph();
    let input = write_graphs(&dir, "p.jsonl", &[rec.clone()]);
    let out = ok(&[
        "--seed", "3", "ect", "--input", input.to_str().unwrap(), "--node", "0", "--hops", "1", "--dirs", "4",
        "--thresholds", "8",
    ]);
    let report: Value = serde_json::from_str(&out).unwrap();
    let g = rec.to_graph().unwrap();
    let dirs = sample_directions(2, 4, 3).unwrap();
    let (lo, hi) = DEFAULT_THRESHOLD_RANGE;
    let grid = ThresholdGrid::uniform(8, lo, hi).unwrap();
    let exact = local_ect(&g, 0, 1, &dirs, &grid, EctMode::Exact).unwrap();
    let smooth = local_ect(&g, 0, 1, &dirs, &grid, EctMode::Smoothed { sharpness: 16.0 }).unwrap();
    let ints: Vec<Vec<f64>> = exact
        .to_integers()
        .into_iter()
        .map(|r| r.into_iter().map(|x| x as f64).collect())
        .collect();
    assert_eq!(matrix(&report["exact"]), ints);
    assert_eq!(matrix(&report["smoothed"]["values"]), smooth.values.to_rows());
    assert_eq!(matrix(&report["directions"]), dirs.as_matrix().to_rows());
}

#[test]
fn missing_input_fails_without_output() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("out.json");
    let out = leap(&["ect", "--input", "/definitely/not/here.jsonl", "--out", out_path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    assert!(!out_path.exists());
}

#[test]
fn out_of_range_graph_index_is_an_error() {
    let dir = TempDir::new().unwrap();
    let input = write_graphs(&dir, "g.jsonl", &[triangle()]);
    let out = leap(&["ect", "--input", input.to_str().unwrap(), "--graph", "5"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of range"));
}

#[test]
fn rwpe_of_triangle() {
    let dir = TempDir::new().unwrap();
    let input = write_graphs(&dir, "g.jsonl", &[triangle()]);
    let out_path = dir.path().join("pe.jsonl");
    ok(&[
        "encode", "--input", input.to_str().unwrap(), "--pe", "rwpe", "--pe-dim", "2", "--out",
        out_path.to_str().unwrap(),
    ]);
    let records = read_records(&out_path).unwrap();
    assert_eq!(records[0].pe.as_ref().unwrap(), &vec![vec![0.0, 0.5]; 3]);
}

#[test]
fn lape_of_single_edge() {
    let dir = TempDir::new().unwrap();
    let input = write_graphs(&dir, "g.jsonl", &[record(2, &[[0, 1]], vec![vec![1.0], vec![2.0]])]);
    let out = ok(&["encode", "--input", input.to_str().unwrap(), "--pe", "lape", "--pe-dim", "1"]);
    let rec: GraphRecord = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    let pe = rec.pe.unwrap();
    let h = std::f64::consts::FRAC_1_SQRT_2;
    assert!((pe[0][0].abs() - h).abs() < 1e-12);
    assert!((pe[0][0] + pe[1][0]).abs() < 1e-12);
}

#[test]
fn leap_encoding_ignores_translation() {
    let dir = TempDir::new().unwrap();
    let a = path_graph();
    let mut b = a.clone();
    for f in &mut b.features {
        f[0] += 3.0;
        f[1] -= 1.5;
    }
    let input = write_graphs(&dir, "g.jsonl", &[a, b]);
    let out = ok(&["encode", "--input", input.to_str().unwrap(), "--untrained", "--hops", "1+2"]);
    let recs: Vec<GraphRecord> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let (pa, pb) = (recs[0].pe.as_ref().unwrap(), recs[1].pe.as_ref().unwrap());
    assert_eq!(pa.len(), 4);
    assert_eq!(pa[0].len(), 10);
    for (ra, rb) in pa.iter().zip(pb) {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
}

#[test]
fn leap_encoding_needs_parameters_or_untrained() {
    let dir = TempDir::new().unwrap();
    let input = write_graphs(&dir, "g.jsonl", &[triangle()]);
    let out = leap(&["encode", "--input", input.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--untrained"));
}

#[test]
fn synth_is_deterministic() {
    let a = ok(&["--seed", "5", "synth", "--count", "20"]);
    let b = ok(&["--seed", "5", "synth", "--count", "20"]);
    let c = ok(&["--seed", "6", "synth", "--count", "20"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 20);
}

#[test]
fn train_writes_report_and_parameters() {
    let dir = TempDir::new().unwrap();
    let report = dir.path().join("r.json");
    let params = dir.path().join("p.json");
    ok(&[
        "train", "--input", &fixture("letter-mini"), "--folds", "3", "--epochs", "5", "--out",
        report.to_str().unwrap(), "--params-out", params.to_str().unwrap(),
    ]);
    let r: Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    let acc = r["accuracy"]["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let out = ok(&["encode", "--input", &fixture("letter-mini"), "--params", params.to_str().unwrap()]);
    let rec: GraphRecord = serde_json::from_str(out.lines().next().unwrap()).unwrap();
    assert_eq!(rec.pe.unwrap()[0].len(), 10);
}

#[test]
fn ablation_resumes_finished_cells() {
    let dir = TempDir::new().unwrap();
    let table = dir.path().join("ablation.jsonl");
    let args = [
        "ablate", "--input", &fixture("letter-mini"), "--hops", "1,2", "--folds", "2", "--epochs", "3", "--out",
        table.to_str().unwrap(),
    ];
    ok(&args);
    let first = fs::read_to_string(&table).unwrap();
    assert_eq!(first.lines().count(), 2);
    let rows: Vec<Value> = first.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows[0]["hops"], "1");
    assert_eq!(rows[1]["hops"], "2");

    let out = leap(&args);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2 already done"));
    assert_eq!(fs::read_to_string(&table).unwrap(), first);

    // A torn final row is dropped and recomputed.
    let torn = format!("{}{}", first.lines().next().unwrap(), "\n{\"cell\":\"LET");
    fs::write(&table, torn).unwrap();
    ok(&args);
    assert_eq!(fs::read_to_string(&table).unwrap(), first);
}
