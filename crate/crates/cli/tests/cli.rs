use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use windpath::oracle::{dijkstra, CostGraph, Metric};
use windpath::scenario::Scenario;
use windpath::windfield::{Direction, WindField};
use windpath::Cell;

fn windpath(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_windpath"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Desk scenario with a trainer small enough for a few seconds of work.
fn quick_scenario(dir: &TempDir) -> (Scenario, PathBuf) {
    let mut sc = Scenario::desk();
    sc.training.rollout_len = 64;
    sc.training.minibatch = 16;
    sc.training.epochs = 1;
    sc.training.hidden = vec![8, 8];
    sc.training.total_episodes = 20;
    let path = dir.path().join("scenario.json");
    sc.save(&path).unwrap();
    (sc, path)
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&windpath(&[])), 1);
    assert_eq!(code(&windpath(&["fly"])), 1);
    assert_eq!(code(&windpath(&["oracle", "--metric", "energy"])), 1);
}

#[test]
fn bad_config_values_exit_1() {
    let dir = TempDir::new().unwrap();
    let (_, sc) = quick_scenario(&dir);
    let out = dir.path().join("f.bin");
    let r = windpath(&["windgen", "--scenario", s(&sc), "--direction", "45", "--speed", "4", "--out", s(&out)]);
    assert_eq!(code(&r), 1);
    assert!(!out.exists());
}

#[test]
fn missing_or_malformed_files_exit_3() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("f.bin");
    let missing = dir.path().join("nope.json");
    let r = windpath(&["windgen", "--scenario", s(&missing), "--direction", "0", "--speed", "4", "--out", s(&out)]);
    assert_eq!(code(&r), 3);

    let (_, sc) = quick_scenario(&dir);
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a field").unwrap();
    let r = windpath(&[
        "oracle", "--scenario", s(&sc), "--field", s(&junk), "--metric", "energy", "--origin", "0,0,0",
        "--destination", "1,0,0",
    ]);
    assert_eq!(code(&r), 3);
}

#[test]
fn windgen_matches_library_field() {
    let dir = TempDir::new().unwrap();
    let (scenario, sc) = quick_scenario(&dir);
    let out = dir.path().join("d90.bin");
    let r = windpath(&["windgen", "--scenario", s(&sc), "--direction", "90", "--speed", "8", "--out", s(&out)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let map = scenario.map().unwrap();
    let expected = scenario.wind_field(&map, Direction::D90, 8.0).unwrap();
    assert_eq!(WindField::load(&out).unwrap(), expected);
}

#[test]
fn oracle_reports_library_cost_and_writes_trace() {
    let dir = TempDir::new().unwrap();
    let (scenario, sc) = quick_scenario(&dir);
    let (o, d) = scenario.od_pairs[0];
    let trace = dir.path().join("trace.jsonl");
    let origin = format!("{},{},{}", o.0[0], o.0[1], o.0[2]);
    let dest = format!("{},{},{}", d.0[0], d.0[1], d.0[2]);
    let r = windpath(&[
        "oracle", "--scenario", s(&sc), "--wind", "D0-4", "--metric", "time", "--origin", &origin,
        "--destination", &dest, "--trace", s(&trace),
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let report: serde_json::Value = serde_json::from_slice(&r.stdout).unwrap();

    let map = scenario.map().unwrap();
    let field = scenario.wind_field(&map, Direction::D0, 4.0).unwrap();
    let graph = CostGraph::build(&map, &field, &scenario.aircraft, Metric::Time).unwrap();
    let path = dijkstra(&graph, o, d).unwrap();
    assert_eq!(report["metric"], "time");
    assert_eq!(report["total"].as_f64().unwrap(), path.total);
    assert_eq!(report["cells"].as_array().unwrap().len(), path.cells.len());
    let lines = std::fs::read_to_string(&trace).unwrap();
    assert!(lines.lines().count() >= path.cells.len());
}

#[test]
fn oracle_on_building_exits_2() {
    let dir = TempDir::new().unwrap();
    let (scenario, sc) = quick_scenario(&dir);
    let map = scenario.map().unwrap();
    assert!(map.is_occupied(Cell([3, 2, 0])));
    let r = windpath(&[
        "oracle", "--scenario", s(&sc), "--wind", "D0-4", "--metric", "energy", "--origin", "3,2,0",
        "--destination", "0,0,0",
    ]);
    assert_eq!(code(&r), 2);
}

#[test]
fn eval_without_policy_exits_3() {
    let dir = TempDir::new().unwrap();
    quick_scenario(&dir);
    let spec = dir.path().join("exp.json");
    std::fs::write(&spec, r#"{"scenario": "scenario.json", "winds": ["D0-4"], "strategies": ["energy"]}"#).unwrap();
    assert_eq!(code(&windpath(&["eval", "--spec", s(&spec)])), 3);
}

#[test]
fn train_then_eval_and_export_agree() {
    let dir = TempDir::new().unwrap();
    let (_, sc) = quick_scenario(&dir);
    for strategy in ["energy", "time", "all"] {
        let out = dir.path().join(format!("{strategy}.pol"));
        let r = windpath(&[
            "--seed", "3", "train", "--scenario", s(&sc), "--strategy", strategy, "--wind", "D0-4", "--out", s(&out),
        ]);
        assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    }
    let spec = dir.path().join("exp.json");
    std::fs::write(
        &spec,
        r#"{"scenario": "scenario.json", "winds": ["D0-4"],
            "policies": {"energy": "energy.pol", "time": "time.pol", "all": "all.pol"}}"#,
    )
    .unwrap();
    let table = dir.path().join("table.csv");
    let traces = dir.path().join("eval_traces.jsonl");
    let r = windpath(&["eval", "--spec", s(&spec), "--out", s(&table), "--traces", s(&traces)]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = String::from_utf8(r.stdout).unwrap();
    assert_eq!(text, std::fs::read_to_string(&table).unwrap());
    let rows = text.lines().filter(|l| l.starts_with("D0-4,")).count();
    assert_eq!(rows, 3);

    let exported = dir.path().join("exported.jsonl");
    let r = windpath(&["export-traces", "--spec", s(&spec), "--out", s(&exported)]);
    assert_eq!(code(&r), 0);
    assert_eq!(std::fs::read(&traces).unwrap(), std::fs::read(&exported).unwrap());
}

#[test]
fn minimal_scenario_file_loads() {
    let dir = TempDir::new().unwrap();
    let sc = dir.path().join("city.json");
    std::fs::write(
        &sc,
        r#"{
  "grid": { "dims": [12, 12, 4], "mins": [0, 0, 0], "cell": [2, 2, 2] },
  "buildings": [ { "min": [3, 2, 0], "max": [4, 4, 2] } ],
  "od_pairs": [ [[0, 3, 0], [11, 2, 1]] ],
  "training": { "gamma": 0.98, "rollout_len": 1024, "minibatch": 128, "epochs": 8, "total_episodes": 20000 }
}"#,
    )
    .unwrap();
    let r = windpath(&[
        "oracle", "--scenario", s(&sc), "--wind", "D90-4", "--metric", "energy", "--origin", "0,3,0",
        "--destination", "11,2,1",
    ]);
    assert_eq!(code(&r), 0, "{}", String::from_utf8_lossy(&r.stderr));
    let loaded = Scenario::load(&sc).unwrap();
    assert_eq!(loaded.training.gamma, 0.98);
    assert_eq!(loaded.training.clip, windpath::ppo::TrainerConfig::default().clip);
}
