use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fsc_core::exact::exact_value;
use fsc_core::graph::{Coord, PolicyGraph};
use fsc_core::pomdp::{make_load_unload, OBS_CORRIDOR, OBS_LOAD, OBS_UNLOAD};
use fsc_harness::io::{read_curve, save_graph, CURVE_HEADER};

fn fsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fsc")).args(args).output().unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn small_train(alpha: f64) -> String {
    format!(
        r#"{{
  "environment": {{"kind": "load_unload", "locations": 5}},
  "algorithm": "VAPS_FSC",
  "learner": {{"alpha": {alpha}, "gamma": 0.9, "error_kind": "e_policy_prime",
               "termination": "geometric", "n_trials": 2000, "eval_every": 500, "seed": 3}},
  "n_seeds": 2,
  "output": "out"
}}"#
    )
}

#[test]
fn missing_config_is_reported() {
    let out = fsc(&["train", "--config", "/nonexistent/spec.json"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("/nonexistent/spec.json"), "{err}");
}

#[test]
fn invalid_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", &small_train(-1.0));
    let out = fsc(&["train", "--config", &cfg]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("alpha"), "{err}");

    let cfg = write(dir.path(), "typo.json", &small_train(0.1).replace("n_seeds", "n_seedz"));
    let out = fsc(&["train", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_seedz"));
}

#[test]
fn train_writes_curves_next_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "spec.json", &small_train(0.1));
    let out = fsc(&["train", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = dir.path().join("out");
    for f in ["seed_0.csv", "seed_1.csv", "mean.csv", "graph_0.json", "graph_1.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let text = fs::read_to_string(run.join("seed_0.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(CURVE_HEADER));
    let points = read_curve(&run.join("seed_0.csv")).unwrap();
    assert_eq!(points.iter().map(|p| p.trial).collect::<Vec<_>>(), [0, 500, 1000, 1500, 2000]);
}

#[test]
fn zero_step_size_gives_flat_curve() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "spec.json", &small_train(0.0));
    let override_dir = dir.path().join("elsewhere");
    let out = fsc(&["train", "--config", &cfg, "--out", override_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let points = read_curve(&override_dir.join("seed_1.csv")).unwrap();
    assert!(points.len() > 1);
    assert!(points.iter().all(|p| p.performance == points[0].performance));
}

#[test]
fn seed_flag_changes_results_and_repeats_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "spec.json", &small_train(0.2));
    let run = |seed: &str, out: &str| {
        let out_dir = dir.path().join(out);
        let status = fsc(&["train", "--config", &cfg, "--seed", seed, "--out", out_dir.to_str().unwrap()]);
        assert!(status.status.success());
        fs::read(out_dir.join("seed_0.csv")).unwrap()
    };
    let a = run("11", "a");
    assert_eq!(a, run("11", "b"));
    assert_ne!(a, run("12", "c"));
}

fn shuttle_graph() -> PolicyGraph {
    let big = 60.0;
    let mut g = PolicyGraph::uniform(2, 3, 2);
    g.set_weight(Coord::Psi { node: 0, action: 1 }, big).unwrap();
    g.set_weight(Coord::Psi { node: 1, action: 0 }, big).unwrap();
    for n in 0..2 {
        g.set_weight(Coord::Eta { node: n, obs: OBS_UNLOAD, next: 0 }, big).unwrap();
        g.set_weight(Coord::Eta { node: n, obs: OBS_LOAD, next: 1 }, big).unwrap();
        g.set_weight(Coord::Eta { node: n, obs: OBS_CORRIDOR, next: n }, big).unwrap();
    }
    for o in 0..3 {
        g.set_weight(Coord::Eta0 { obs: o, node: 0 }, big).unwrap();
    }
    g
}

#[test]
fn eval_of_shuttle_graph_reaches_the_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let graph = shuttle_graph();
    save_graph(&dir.path().join("g.json"), &graph).unwrap();
    let cfg = write(
        dir.path(),
        "eval.json",
        r#"{"environment": {"kind": "load_unload"}, "graphs": ["g.json"]}"#,
    );
    let out = fsc(&["eval", "--config", &cfg, "--out", dir.path().join("res").to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("res/eval.json")).unwrap()).unwrap();
    let mean = report["mean"].as_f64().unwrap();
    let expected = exact_value(&make_load_unload(5).unwrap(), &graph).unwrap().v0;
    assert!((mean - expected).abs() < 1e-12);
    // Deterministic shuttling is optimal even with full observability.
    let optimum = report["optimal_value"].as_f64().unwrap();
    assert!((mean - optimum).abs() < 1e-9, "{mean} vs {optimum}");
}

#[test]
fn eval_rejects_mismatched_graph() {
    let dir = tempfile::tempdir().unwrap();
    save_graph(&dir.path().join("g.json"), &PolicyGraph::uniform(2, 5, 2)).unwrap();
    let cfg = write(
        dir.path(),
        "eval.json",
        r#"{"environment": {"kind": "load_unload"}, "graphs": ["g.json"]}"#,
    );
    let out = fsc(&["eval", "--config", &cfg]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn gradcheck_prints_table() {
    let cfg = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/gradcheck_two_state.json");
    let dir = tempfile::tempdir().unwrap();
    let out = fsc(&["gradcheck", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("max |z|"));
    assert!(dir.path().join("gradcheck.json").is_file());
}
