use std::path::Path;
use std::process::{Command, Output};

use gradolab::io::manifest::RunManifest;

fn gradolab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gradolab"))
        .args(args)
        .env("GRADOLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const TANK: &str = r#"{
  "reactors": [{"volume": 1.0}],
  "flow_q": 2e-5,
  "s_in": 3.0,
  "species": [{"name": "B", "mu_max": 4e-5, "k_s": 1.0, "yield": 1.0}],
  "initial": [{"S": 5.0, "B": [2.0]}]
}"#;

fn chain_config(dir: &Path) -> String {
    let p = dir.join("chain.json");
    let text = r#"{
      "reactors": [{"volume": 0.3333333333333333}, {"volume": 0.3333333333333333}, {"volume": 0.3333333333333333}],
      "flow_q": 6e-6, "s_in": 3.0,
      "species": [{"name": "B", "mu_max": 4e-5, "k_s": 1.0, "yield": 1.0}],
      "initial": [{"S": 5.0, "B": [2.0]}, {"S": 5.0, "B": [2.0]}, {"S": 5.0, "B": [2.0]}],
      "rtm": {"dt_max": 86400, "ss_tol": 1e-14}
    }"#;
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn scenario_a_writes_table_plot_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = gradolab(&["scenario", "--name", "A", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["sweep_q.csv", "delta_q.svg", "manifest.json", "config.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(dir.path().join("sweep_q.csv")).unwrap();
    assert_eq!(csv.lines().count(), 121);
    let m: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.config_digest.len(), 64);
    assert!(m.outputs.contains(&"sweep_q.csv".to_string()));
    assert_eq!(m.command_line[1..], ["scenario", "--name", "A", "--out", path(dir.path())]);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = gradolab(&["scenario", "--name", "C", "--out", path(d.path())]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["sweep_q.csv", "delta_q.svg", "biomass_q.svg", "config.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = gradolab(&["scenario", "--name", "A", "--out", "x", "--colour"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = gradolab(&["scenario", "--name", "Z", "--out", "x"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(gradolab(&["--help"]).status.code(), Some(0));
}

#[test]
fn invalid_config_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, TANK.replace("\"volume\": 1.0", "\"volume\": -1.0")).unwrap();
    let out = gradolab(&["equilibria", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("reactors[0].volume"));

    std::fs::write(&cfg, TANK.replace("\"s_in\"", "\"s_inn\"")).unwrap();
    let out = gradolab(&["equilibria", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
}

#[test]
fn missing_config_file_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = gradolab(&["equilibria", "--config", path(&missing), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn equilibria_reports_classes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tank.json");
    std::fs::write(&cfg, TANK).unwrap();
    let out = gradolab(&["equilibria", "--config", path(&cfg), "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("equilibria.json")).unwrap()).unwrap();
    let eqs = v.as_array().unwrap();
    assert_eq!(eqs.len(), 2);
    assert_eq!(eqs[0]["label"], "E1");
    assert_eq!(eqs[0]["stability"], "Unstable");
    assert_eq!(eqs[1]["label"], "E2");
    assert_eq!(eqs[1]["stability"], "ExponentiallyStable");
    // lambda = k_s D / (mu_max - D) = 1
    assert!((eqs[1]["state"][0]["S"].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn simulate_writes_trajectories_for_both_engines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = chain_config(dir.path());
    for engine in ["ode", "rtm"] {
        let out_dir = dir.path().join(engine);
        let out = gradolab(&[
            "simulate", "--config", &cfg, "--engine", engine, "--t-end", "1e5", "--out", path(&out_dir),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let text = std::fs::read_to_string(out_dir.join("trajectory.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("time,cell,S,B_B"));
        let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(last[0], 1e5);
        assert_eq!(last[1], 3.0);
    }
}

#[test]
fn sweeps_from_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = chain_config(dir.path());
    let q = dir.path().join("q");
    let out = gradolab(&[
        "sweep-q", "--config", &cfg, "--q-min", "1e-6", "--q-max", "2e-5", "--points", "5", "--log", "--out", path(&q),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(q.join("sweep_q.csv")).unwrap().lines().count(), 11);
    assert!(q.join("delta_q.svg").exists());

    let n = dir.path().join("n");
    let out = gradolab(&["sweep-cells", "--config", &cfg, "--n-min", "3", "--n-max", "6", "--out", path(&n)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(n.join("sweep_cells.csv")).unwrap().lines().count(), 9);
    assert!(n.join("delta_n.svg").exists());

    let out = gradolab(&["sweep-q", "--config", &cfg, "--q-min", "2e-5", "--q-max", "1e-6", "--points", "5", "--out", path(&q)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("stiff.json");
    // one Newton iteration cannot settle steps of at least 10 s
    let text = TANK.replace(
        "\"initial\"",
        "\"rtm\": {\"dt_init\": 1e4, \"dt_max\": 1e4, \"newton_max_iter\": 1}, \"initial\"",
    );
    std::fs::write(&cfg, text).unwrap();
    let out = gradolab(&["simulate", "--config", path(&cfg), "--engine", "rtm", "--t-end", "1e5", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
