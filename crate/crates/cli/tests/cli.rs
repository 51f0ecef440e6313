use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn stormroute(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stormroute")).args(args).env_remove("STORMROUTE_OUT").output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn desk_grid(dir: &Path) -> String {
    let path = dir.join("grid.json");
    let out = stormroute(&["generate-grid", "--seed", "2", "-o", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    path.to_str().unwrap().to_string()
}

#[test]
fn generated_grid_validates_with_exact_counts() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let out = stormroute(&[
            "generate-grid",
            "--circuits",
            "2",
            "--devices",
            "3",
            "--lines",
            "10",
            "--customers",
            "30",
            "--seed",
            "7",
            "-o",
            p.to_str().unwrap(),
        ]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let out = stormroute(&["validate", a.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = text(&out.stdout);
    for line in ["circuits 2", "segments 6", "devices 6", "lines 20", "customers 60", "connected"] {
        assert!(report.contains(line), "missing {line:?} in\n{report}");
    }
}

#[test]
fn cyclic_circuit_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cycle.json");
    let grid = r#"{
        "depot": 0,
        "circuits": [{"id": 0, "nodes": [
            {"id": 1, "parent": null, "is_device": true, "customers": 0},
            {"id": 2, "parent": 3, "is_device": false, "customers": 2},
            {"id": 3, "parent": 2, "is_device": false, "customers": 2}
        ]}],
        "road": {"nodes": [{"id": 0, "x": 0.0, "y": 0.0}, {"id": 1, "x": 1.0, "y": 0.0}],
                 "edges": [{"from": 0, "to": 1, "minutes": 5.0}]},
        "pole_map": [{"grid_node": 1, "road_node": 1}, {"grid_node": 2, "road_node": 1}, {"grid_node": 3, "road_node": 1}]
    }"#;
    fs::write(&path, grid).unwrap();
    let out = stormroute(&["validate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("form a cycle"), "{}", text(&out.stderr));
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(stormroute(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(stormroute(&["validate", "/definitely/missing.json"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let grid = desk_grid(dir.path());
    assert_eq!(stormroute(&["run-mcts", "--grid", &grid, "--alpha=-1"]).status.code(), Some(1));
    assert_eq!(stormroute(&["run-oracle", "--grid", &grid, "--solver", "magic"]).status.code(), Some(1));
    assert_eq!(stormroute(&["run-escalation", "--grid", &grid, "--rho", "2"]).status.code(), Some(1));
}

#[test]
fn run_failures_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let grid = desk_grid(dir.path());
    let out = stormroute(&["run-mcts", "--grid", &grid, "--seed", "3", "--max-candidates", "1", "--n-iter", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("enumeration cap"));
}

#[test]
fn single_runs_report_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let grid = desk_grid(dir.path());
    let tree = dir.path().join("tree.json");
    let mut hours = Vec::new();
    for cmd in ["run-oracle", "run-mcts", "run-escalation"] {
        let mut args = vec![cmd, "--grid", &grid, "--seed", "5", "--rho", "0.5", "--n-iter", "100", "--trace"];
        if cmd == "run-mcts" {
            args.extend(["--dump-tree", tree.to_str().unwrap()]);
        }
        let out = stormroute(&args);
        assert!(out.status.success(), "{cmd}: {}", text(&out.stderr));
        let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(report["seed"], 5);
        assert!(report["trace"]["decisions"].is_array());
        hours.push(report["metrics"]["outage_hours"].as_f64().unwrap());
    }
    assert!(hours[0] <= hours[1] && hours[0] <= hours[2], "{hours:?}");
    let dump: serde_json::Value = serde_json::from_str(&fs::read_to_string(tree).unwrap()).unwrap();
    assert!(dump["pre"].is_array());
}

#[test]
fn sweep_writes_deterministic_csv_to_the_env_directory() {
    let dir = tempfile::tempdir().unwrap();
    desk_grid(dir.path());
    let plan = dir.path().join("plan.json");
    fs::write(
        &plan,
        r#"{"grid": "grid.json",
            "scenario": {"storm": {"track": "random", "severity": 0.35, "diameter": 1.5, "min_prior": 0.01}, "rho": 0.1, "seed": 0},
            "rhos": [0.1, 1.0], "n_iters": [50], "seeds": [4, 9],
            "policies": ["oracle", "mcts", "escalation"]}"#,
    )
    .unwrap();
    let mut csvs = Vec::new();
    for run in ["one", "two"] {
        let out_dir = dir.path().join(run);
        let out = Command::new(env!("CARGO_BIN_EXE_stormroute"))
            .args(["sweep", plan.to_str().unwrap(), "--gnuplot-stub"])
            .env("STORMROUTE_OUT", &out_dir)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", text(&out.stderr));
        assert!(out_dir.join("summary.json").exists());
        assert!(fs::read_to_string(out_dir.join("metrics.gp")).unwrap().contains("metrics.csv"));
        csvs.push(fs::read(out_dir.join("metrics.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    let body = text(&csvs[0]);
    assert_eq!(body.lines().count(), 1 + 3 * 2 * 2);
    assert!(body.starts_with("seed,policy,rho,n_iter,outage_hours"));
}

#[test]
fn sweep_rejects_duplicate_seeds() {
    let dir = tempfile::tempdir().unwrap();
    desk_grid(dir.path());
    let plan = dir.path().join("plan.json");
    fs::write(
        &plan,
        r#"{"grid": "grid.json",
            "scenario": {"storm": {"track": "random", "severity": 0.35, "diameter": 1.5, "min_prior": 0.01}, "rho": 0.1, "seed": 0},
            "rhos": [0.1], "n_iters": [50], "seeds": [4, 4], "policies": ["oracle"]}"#,
    )
    .unwrap();
    let out = stormroute(&["sweep", plan.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("unique"));
}

#[test]
fn inspection_commands_emit_structured_output() {
    let dir = tempfile::tempdir().unwrap();
    let grid = desk_grid(dir.path());

    let out = stormroute(&["inspect-belief", "--grid", &grid, "--seed", "1", "--rho", "0.5", "--visit", "0"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let belief: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let lines = belief["belief"]["lines"].as_array().unwrap();
    assert_eq!(lines.len(), 120);
    assert!(lines.iter().filter(|l| l["segment"] == 0).all(|l| l["posterior"] == 0.0 && l["cleared"] == true));

    let out = stormroute(&["rollout-bench", "--grid", &grid, "--instances", "6", "--seed", "3"]);
    assert!(out.status.success());
    let csv = text(&out.stdout);
    assert_eq!(csv.lines().count(), 7);
    for row in csv.lines().skip(1) {
        let cols: Vec<&str> = row.split(',').collect();
        let (dp, heuristic): (f64, f64) = (cols[2].parse().unwrap(), cols[3].parse().unwrap());
        assert!(dp <= heuristic + 1e-9);
    }

    let out = stormroute(&["dump-tree", "--grid", &grid, "--seed", "1", "--n-iter", "80"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let tree: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let root_visits = tree["tree"]["pre"][0]["visits"].as_u64().unwrap();
    assert_eq!(root_visits, 80);
}

#[test]
fn field_scale_grid_loads_quickly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.json");
    let started = std::time::Instant::now();
    assert!(stormroute(&["generate-grid", "--field-scale", "-o", path.to_str().unwrap()]).status.success());
    let out = stormroute(&["validate", path.to_str().unwrap()]);
    assert!(started.elapsed().as_secs_f64() < 5.0);
    let report = text(&out.stdout);
    assert!(
        report.contains("devices 410 (41.0 per circuit)") && report.contains("lines 7240 (724.0 per circuit)"),
        "{report}"
    );
}
