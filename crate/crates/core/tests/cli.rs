use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ramp_core::cli::{read_record, write_record, PLOT_SCHEMA_VERSION};
use ramp_core::sim::{desk_scenes, EpisodeResult, EpisodeTiming, Scenario};
use serde_json::json;
use tempfile::TempDir;

fn ramp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ramp"))
        .args(args)
        .env("RAMP_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write_json(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn sphere(center: [f64; 3], radius: f64, density: f64) -> serde_json::Value {
    json!({"id": 1, "shape": {"type": "sphere", "radius": radius}, "center": center, "density": density})
}

fn free_space(robot: &str, timeout: f64) -> serde_json::Value {
    json!({
        "name": "free",
        "robot": robot,
        "obstacles": [sphere([3.0, 3.0, 0.0], 0.1, 2000.0)],
        "start": [-0.6, 0.4, 0.2],
        "goal": [0.6, -0.3, 0.5],
        "timeout": timeout
    })
}

#[test]
fn run_free_space_exits_zero_and_writes_a_record() {
    let dir = TempDir::new().unwrap();
    let scenario = write_json(dir.path(), "free.json", free_space("planar3", 20.0));
    let out = dir.path().join("out");
    let o = ramp(&["run", scenario.to_str().unwrap(), "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = out.join("free_ramp_seed1.summary.json");
    let record = read_record(&summary).unwrap();
    assert!(record.summary.success);
    assert!(out.join("free_ramp_seed1.rows.jsonl").exists());
}

#[test]
fn missing_robot_file_exits_one_naming_the_path() {
    let dir = TempDir::new().unwrap();
    let scenario = write_json(dir.path(), "s.json", free_space("models/nowhere.json", 5.0));
    let o = ramp(&["run", scenario.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere.json"), "{}", stderr(&o));
}

#[test]
fn malformed_json_exits_one_with_line_and_column() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{\n  \"name\": \"x\",\n  \"robot\" \"planar3\"\n}\n").unwrap();
    let o = ramp(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let msg = stderr(&o);
    assert!(msg.contains("bad.json:3:"), "{msg}");
}

#[test]
fn teleporting_obstacle_exits_two() {
    // A sphere covering the whole workspace jumps from far away onto the
    // arm inside a 20 ms window, between two perception ticks.
    let dir = TempDir::new().unwrap();
    let mut s = free_space("planar3", 5.0);
    s["obstacles"] = json!([]);
    s["moving_obstacle"] = json!({
        "obstacle": sphere([20.0, 0.0, 0.0], 0.9, 100.0),
        "velocity": [-1000.0, 0.0, 0.0],
        "start_time": 0.11,
        "end_time": 0.13
    });
    let scenario = write_json(dir.path(), "teleport.json", s);
    let o = ramp(&["run", scenario.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn blocked_goal_exits_three() {
    // Sphere on the end effector at the goal configuration [1.2, 0.4, 0.3].
    let (a, b, c) = (1.2f64, 1.6f64, 1.9f64);
    let ee = [
        0.3 * a.cos() + 0.25 * b.cos() + 0.2 * c.cos(),
        0.3 * a.sin() + 0.25 * b.sin() + 0.2 * c.sin(),
        0.0,
    ];
    let dir = TempDir::new().unwrap();
    let s = json!({
        "name": "blocked",
        "robot": "planar3",
        "obstacles": [sphere(ee, 0.05, 3000.0)],
        "start": [-1.2, -0.3, 0.2],
        "goal": [1.2, 0.4, 0.3],
        "timeout": 2.0
    });
    let scenario = write_json(dir.path(), "blocked.json", s);
    let o = ramp(&["run", scenario.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

fn desk_fixture(dir: &Path) {
    let mut s = desk_scenes(1, 7).remove(0);
    s.timeout = 2.0;
    fs::write(dir.join(format!("{}.json", s.name)), s.to_json()).unwrap();
}

fn bench_config(dir: &Path, methods: &[&str], seeds: &[u64]) -> PathBuf {
    write_json(
        dir,
        "bench.json",
        json!({
            "scenarios": "desk_*.json",
            "methods": methods,
            "seeds": seeds,
            "out": "out",
            "write_records": true,
            "run": {"rrt": {"max_iterations": 400}}
        }),
    )
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn bench_one_method_three_seeds_gives_three_rows_and_a_summary() {
    let dir = TempDir::new().unwrap();
    desk_fixture(dir.path());
    let config = bench_config(dir.path(), &["ramp"], &[0, 1, 2]);
    let o = ramp(&["bench", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("out/bench.csv"));
    assert_eq!(rows.iter().filter(|r| &r[0] == "episode").count(), 3);
    assert_eq!(rows.iter().filter(|r| &r[0] == "summary").count(), 1);
    assert_eq!(rows.len(), 4);
}

#[test]
fn bench_methods_share_scenario_instances() {
    let dir = TempDir::new().unwrap();
    desk_fixture(dir.path());
    let config = bench_config(dir.path(), &["ramp", "rrt_star"], &[3, 4]);
    let o = ramp(&["bench", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let records = dir.path().join("out/records");
    for seed in [3, 4] {
        let a = read_record(&records.join(format!("desk_00_ramp_seed{seed}.summary.json"))).unwrap();
        let b = read_record(&records.join(format!("desk_00_rrt_star_seed{seed}.summary.json"))).unwrap();
        assert_eq!(a.meta.start, b.meta.start);
        assert_eq!(a.meta.goal, b.meta.goal);
    }
}

#[test]
fn bench_csv_is_stable_under_rerun() {
    let dir = TempDir::new().unwrap();
    desk_fixture(dir.path());
    let config = bench_config(dir.path(), &["ramp", "rrt_star"], &[5]);
    let mut outputs = Vec::new();
    for out in ["a", "b"] {
        let target = dir.path().join(out);
        let o = ramp(&["bench", config.to_str().unwrap(), "--out", target.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outputs.push(fs::read(target.join("bench.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn bench_without_matching_scenarios_exits_one() {
    let dir = TempDir::new().unwrap();
    let config = bench_config(dir.path(), &["ramp"], &[0]);
    assert_eq!(ramp(&["bench", config.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn export_plots_writes_one_csv_per_record() {
    let dir = TempDir::new().unwrap();
    let scenario = write_json(dir.path(), "free.json", free_space("planar3", 20.0));
    let records = dir.path().join("records");
    let o = ramp(&["run", scenario.to_str().unwrap(), "--out", records.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));

    // Same record with the orientation value filled in, under another seed.
    let mut rec = read_record(&records.join("free_ramp_seed0.summary.json")).unwrap();
    rec.meta.seed = 9;
    for (i, row) in rec.rows.iter_mut().enumerate() {
        row.h = Some(i as f64 * 0.5);
    }
    write_record(&records, &EpisodeResult { record: rec.clone(), timing: EpisodeTiming::default() }).unwrap();

    let plots = dir.path().join("plots");
    let o = ramp(&["export-plots", records.to_str().unwrap(), "--out", plots.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let plain = fs::read_to_string(plots.join("free_ramp_seed0.plot.csv")).unwrap();
    let mut lines = plain.lines();
    assert_eq!(lines.next(), Some(format!("# schema_version={PLOT_SCHEMA_VERSION}").as_str()));
    assert_eq!(lines.next(), Some("t,csdf,s_star,u_norm"));
    assert_eq!(lines.count(), rec.rows.len());

    let with_h = fs::read_to_string(plots.join("free_ramp_seed9.plot.csv")).unwrap();
    let header = with_h.lines().nth(1).unwrap();
    assert_eq!(header, "t,csdf,s_star,u_norm,h");
    let second = with_h.lines().nth(3).unwrap();
    assert_eq!(second.rsplit(',').next(), Some("0.5"));
}

#[test]
fn export_plots_on_an_empty_directory_exits_one() {
    let dir = TempDir::new().unwrap();
    let o = ramp(&["export-plots", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn gen_scenarios_writes_the_desk_scenes() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("scenes");
    let o = ramp(&["gen-scenarios", "--count", "3", "--seed", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    for expected in desk_scenes(3, 2) {
        let s = Scenario::from_file(out.join(format!("{}.json", expected.name))).unwrap();
        assert_eq!(s.obstacles, expected.obstacles);
        assert_eq!(s.sampling_seed, expected.sampling_seed);
    }
}

#[test]
fn unknown_method_exits_one() {
    let dir = TempDir::new().unwrap();
    let scenario = write_json(dir.path(), "free.json", free_space("planar3", 5.0));
    let o = ramp(&["run", scenario.to_str().unwrap(), "--method", "prm"]);
    assert_eq!(o.status.code(), Some(1));
}
