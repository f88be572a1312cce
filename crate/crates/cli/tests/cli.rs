use std::path::Path;
use std::process::{Command, Output};

use exvmc::pretraining::{synth_hf, Selector, Structure, SynthSpec};

fn exvmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_exvmc")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) {
    std::fs::write(path, serde_json::to_string(value).unwrap()).unwrap();
}

fn chain() -> Vec<Structure> {
    [0.0, 0.1, 0.3]
        .iter()
        .enumerate()
        .map(|(id, d)| {
            synth_hf(&SynthSpec {
                id,
                nuclei: vec![[0.0; 3], [1.4 + d, 0.0, 0.0]],
                charges: vec![1.0, 1.0],
                basis_per_nucleus: 2,
                seed: 5,
            })
            .unwrap()
        })
        .collect()
}

const TINY_RUN: &str = r#"{
    "system": { "kind": "1d-harmonic", "omega": 1.0, "n_states": 2, "init": { "alpha": 0.45, "noise": 0.05 } },
    "sampler": { "n_walkers_total": 128, "decorr_steps": 2, "burn_in": 10 },
    "training": { "steps": 5, "trace_every": 1, "eval_batches": 1 },
    "seed": 3
}"#;

#[test]
fn dry_run_prints_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, TINY_RUN).unwrap();
    let o = exvmc(&["run", cfg.to_str().unwrap(), "--dry-run", "--seed", "42"]);
    assert!(o.status.success());
    let resolved: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(resolved["seed"], 42);
    assert_eq!(resolved["training"]["steps"], 5);
    assert!(resolved["training"]["grad_clip"].is_number());
}

#[test]
fn run_writes_artifacts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, TINY_RUN).unwrap();
    let mut traces = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "2")] {
        let out = dir.path().join(name);
        let o = exvmc(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap(), "--threads", threads]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(stdout(&o).contains("state 0"));
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        let e0 = report["energies"][0]["energy"].as_f64().unwrap();
        let e1 = report["energies"][1]["energy"].as_f64().unwrap();
        assert!(e0 <= e1);
        traces.push((
            std::fs::read(out.join("energy_trace.csv")).unwrap(),
            std::fs::read(out.join("overlap_trace.csv")).unwrap(),
        ));
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn too_few_walkers_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, TINY_RUN.replace("\"n_walkers_total\": 128", "\"n_walkers_total\": 3")).unwrap();
    let o = exvmc(&["run", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sampler.n_walkers_total"));
}

#[test]
fn divergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    let text = TINY_RUN.replace("\"steps\": 5", "\"steps\": 50, \"lr0\": 1e300, \"grad_clip\": 1e300");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("out");
    let o = exvmc(&["run", cfg.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("checkpoints").join("last_good.json").exists());
}

#[test]
fn selfcheck_reports_every_check_and_detects_injected_fault() {
    let o = exvmc(&["selfcheck"]);
    assert!(o.status.success());
    let text = stdout(&o);
    for name in ["pfaffian-oracle", "pfaffian-determinant", "procrustes-recovery", "msis-bound", "ess-bounds", "snap-continuity"] {
        let line = text.lines().find(|l| l.contains(name)).unwrap();
        assert!(line.starts_with("PASS") && line.contains(" ms"), "{line}");
    }
    let o = exvmc(&["selfcheck", "--inject-pfaffian-sign-fault"]);
    assert!(!o.status.success());
    assert!(stdout(&o).lines().any(|l| l.starts_with("FAIL") && l.contains("pfaffian-determinant")));
}

#[test]
fn bench_overlap_row_count_and_bound() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["bench-overlap", "--states", "1,2", "--n-batch", "400", "--batches", "200", "--repetitions", "3"];
    let o = exvmc(&[&args[..], &["--output-dir", dir.path().to_str().unwrap()]].concat());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bench_overlap.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 2 * 3);
    let header: Vec<&str> = lines[0].split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    for line in &lines[1..] {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f.iter().all(|v| v.is_finite()));
        if f[col("n_states")] == 1.0 {
            assert_eq!(f[col("var_msis")], 0.0);
            assert_eq!(f[col("var_single")], 0.0);
        } else {
            assert!(f[col("var_msis")] <= f[col("bound_msis")], "{line}");
        }
    }
}

#[test]
fn bridge_bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = exvmc(&[
        "bridge-bench",
        "--sample-sizes",
        "1000",
        "--iterations",
        "3",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("bridge_bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 3);
    let first = csv.lines().nth(1).unwrap();
    assert!(first.starts_with("identical,1000,1,1e0;1e0,"), "{first}");
}

#[test]
fn bench_config_schema_errors_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bench.json");
    std::fs::write(&cfg, r#"{ "states": [2, "x"] }"#).unwrap();
    let o = exvmc(&["bench-overlap", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("states[1]"));
}

#[test]
fn align_chain_roots_at_centre() {
    let dir = tempfile::tempdir().unwrap();
    let structures = dir.path().join("structures.json");
    write_json(&structures, &chain());
    let selectors = dir.path().join("selectors.json");
    write_json(&selectors, &vec![Selector { state: 0, occupied: vec![0, 1] }, Selector { state: 1, occupied: vec![0, 2] }]);
    let out = dir.path().join("out");
    let o = exvmc(&[
        "align",
        structures.to_str().unwrap(),
        "--selectors",
        selectors.to_str().unwrap(),
        "--output-dir",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let aligned: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("aligned.json")).unwrap()).unwrap();
    assert_eq!(aligned["graph"]["root"], 1);
    assert_eq!(aligned["graph"]["order"], serde_json::json!([1, 0, 2]));
    assert_eq!(aligned["structures"].as_array().unwrap().len(), 3);
    assert_eq!(aligned["selectors"]["violations"], serde_json::json!([]));
}

#[test]
fn align_single_structure_passes_through() {
    let dir = tempfile::tempdir().unwrap();
    let structures = dir.path().join("one.json");
    let one = vec![chain().remove(0)];
    write_json(&structures, &one);
    let out = dir.path().join("out");
    let o = exvmc(&["align", structures.to_str().unwrap(), "--output-dir", out.to_str().unwrap()]);
    assert!(o.status.success());
    let aligned: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("aligned.json")).unwrap()).unwrap();
    assert_eq!(aligned["graph"]["edges"], serde_json::json!([]));
    let c: Vec<f64> = serde_json::from_value(aligned["structures"][0]["C"].clone()).unwrap();
    for (a, b) in c.iter().zip(&one[0].c) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn align_duplicate_selectors_fail_with_pair() {
    let dir = tempfile::tempdir().unwrap();
    let structures = dir.path().join("structures.json");
    write_json(&structures, &chain());
    let selectors = dir.path().join("selectors.json");
    write_json(&selectors, &vec![Selector { state: 0, occupied: vec![0, 1] }, Selector { state: 1, occupied: vec![1, 0] }]);
    let o = exvmc(&[
        "align",
        structures.to_str().unwrap(),
        "--selectors",
        selectors.to_str().unwrap(),
        "--output-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("(0, 1)"));
}

#[test]
fn align_schema_violation_reports_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let structures = dir.path().join("bad.json");
    let mut value = serde_json::to_value(chain()).unwrap();
    value[1]["eps"] = serde_json::json!("oops");
    write_json(&structures, &value);
    let o = exvmc(&["align", structures.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/1/eps"), "{}", String::from_utf8_lossy(&o.stderr));
}
