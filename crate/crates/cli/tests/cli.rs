use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rspde_core::harness::io::read_grid_field;

fn rspde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rspde"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn obstacle_solve_writes_fields_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = dir.path().join("run");
    let out = rspde(&[
        "obstacle",
        "solve",
        "--dim",
        "1",
        "--n",
        "16",
        "--barrier",
        "sine",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let z = read_grid_field(&dir.path().join("run_z.csv")).unwrap();
    let eta = read_grid_field(&dir.path().join("run_eta.csv")).unwrap();
    assert_eq!(z.len(), 15);
    assert_eq!(eta.spec().n(), 16);
    let text = fs::read_to_string(dir.path().join("run_z.csv")).unwrap();
    assert!(text.starts_with("k,i1,value\n1,1,"));
    assert!(json(&dir.path().join("run_report.json")).is_object());
}

#[test]
fn obstacle_solve_reads_barrier_file() {
    let dir = tempfile::tempdir().unwrap();
    let barrier = dir.path().join("v.json");
    fs::write(&barrier, r#"{"d":2,"n":3,"values":[-1.0,0.5,0.5,-0.2]}"#).unwrap();
    let prefix = dir.path().join("b");
    let out = rspde(&[
        "obstacle",
        "solve",
        "--barrier-file",
        barrier.to_str().unwrap(),
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let z = read_grid_field(&dir.path().join("b_z.csv")).unwrap();
    let w: Vec<f64> = z
        .values()
        .iter()
        .zip([-1.0, 0.5, 0.5, -0.2])
        .map(|(z, v)| z + v)
        .collect();
    assert!(w.iter().all(|&x| x >= -1e-12), "{w:?}");
}

#[test]
fn spde_solve_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let prefix = dir.path().join(name);
        let out = rspde(&[
            "spde",
            "solve",
            "--dim",
            "1",
            "--n",
            "32",
            "--f",
            "linear:-0.1,1",
            "--sigma",
            "const:0.1",
            "--seed",
            "5",
            "--noise-dump",
            "--out",
            prefix.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        fs::read(dir.path().join(format!("{name}_u.csv"))).unwrap()
    };
    assert_eq!(run("a"), run("b"));
    let u = read_grid_field(&dir.path().join("a_u.csv")).unwrap();
    assert!(u.values().iter().all(|&v| v >= -1e-8));
    assert_eq!(
        fs::metadata(dir.path().join("a_noise.bin")).unwrap().len(),
        32 * 8
    );
    let manifest = json(&dir.path().join("a_manifest.json"));
    assert_eq!(manifest["seed"], 5);
}

#[test]
fn convergence_det_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("det.json");
    fs::write(
        &cfg,
        r#"{"kind":"deterministic-convergence","d":1,"levels":[8,16,32],"reference":128}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = rspde(&[
        "convergence",
        "det",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let errors = fs::read_to_string(out_dir.join("errors.csv")).unwrap();
    assert!(errors.starts_with("level_n,replicate,sup_error\n"));
    assert_eq!(errors.lines().count(), 4);
    assert!(out_dir.join("manifest.json").exists());
    assert_eq!(json(&out_dir.join("report.json"))["monotone"], true);
}

#[test]
fn convergence_kind_must_match_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("det.json");
    fs::write(
        &cfg,
        r#"{"kind":"deterministic-convergence","d":1,"levels":[8],"reference":32}"#,
    )
    .unwrap();
    let out = rspde(&["convergence", "stoch", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn green_table_to_stdout() {
    let out = rspde(&["green-table", "--dim", "1", "--n", "4", "--grid", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,y1,K,Kn,Kprime,Kcaret_n"));
    assert_eq!(lines.count(), 9);
}

#[test]
fn properties_filter_and_mutation() {
    let out = rspde(&["properties", "--filter", "sign-lemma"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["verdicts"].as_array().unwrap().len(), 1);
    assert_eq!(report["passed"], true);

    let out = rspde(&[
        "properties",
        "--filter",
        "sign-lemma",
        "--invert-sign-lemma",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bad_input_exits_with_two() {
    let out = rspde(&[
        "obstacle",
        "solve",
        "--dim",
        "4",
        "--n",
        "8",
        "--barrier",
        "sine",
        "--out",
        "/tmp/x",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}
