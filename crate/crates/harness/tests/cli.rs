use std::fs;
use std::path::Path;

use carvebot_contact::forest::ForestModel;
use carvebot_core::calib::CalibrationParams;
use carvebot_core::planner::parse_waypoints;
use carvebot_harness::cli::{execute, Cli};
use clap::Parser;

fn run(args: &[&str]) {
    let cli = Cli::try_parse_from(std::iter::once("carvebot").chain(args.iter().copied())).unwrap();
    execute(&cli).unwrap();
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn demo_inputs_drive_the_other_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    run(&["demo", "--out", p(d)]);

    let calib = d.join("calib.txt");
    run(&["calibrate", "--markers", p(&d.join("markers.txt")), "--out", p(&calib)]);
    let fit = CalibrationParams::from_kv_text(&fs::read_to_string(&calib).unwrap()).unwrap();
    assert!((fit.theta0 - 0.05).abs() < 0.01, "{fit:?}");

    let seg = d.join("seg.json");
    run(&["segment", "--scene", p(&d.join("chop.ppm")), "--out", p(&seg)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&seg).unwrap()).unwrap();
    assert!(v["meat_area"].as_u64().unwrap() > 0);
    assert!(v["fat_contour"].is_array());

    let wps = d.join("wps.txt");
    run(&["plan", "--scene", p(&d.join("loin.ppm")), "--task", "slice", "--pieces", "3", "--calibration", p(&calib), "--out", p(&wps)]);
    let parsed = parse_waypoints(&fs::read_to_string(&wps).unwrap()).unwrap();
    let cuts: std::collections::BTreeSet<usize> = parsed.iter().filter_map(|w| w.cut).collect();
    assert_eq!(cuts.len(), 2);

    let sim = d.join("sim.json");
    run(&["simulate", "--waypoints", p(&wps), "--out", p(&sim)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sim).unwrap()).unwrap();
    assert!(v["max_error_m"].as_f64().unwrap() < 5e-3);

    let mut csvs: Vec<_> = fs::read_dir(d.join("contact")).unwrap().map(|e| e.unwrap().path()).collect();
    csvs.sort();
    let model = d.join("model.json");
    let mut args = vec!["contact-train", "--trees", "5", "--out", p(&model)];
    args.extend(csvs.iter().take(2).map(|c| p(c)));
    run(&args);
    let m = ForestModel::load(fs::File::open(&model).unwrap()).unwrap();
    assert_eq!(m.n_trees, 5);
}

#[test]
fn pipeline_command_stores_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("cfg.toml");
    fs::write(&cfg, "[pipeline]\nn_slices = 3\n").unwrap();
    let summary = d.join("summary.json");
    let runs = d.join("runs");
    run(&["pipeline", "--config", p(&cfg), "--seed", "5", "--runs", p(&runs), "--out", p(&summary)]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(v["slices"], 3);
    assert!(v["conservation_error"].as_f64().unwrap() < 1e-9);
    let id = v["run_id"].as_str().unwrap();
    let log: serde_json::Value = serde_json::from_str(&fs::read_to_string(runs.join(id).join("runlog.json")).unwrap()).unwrap();
    assert_eq!(log["seed"], 5);
}

#[test]
fn bad_arguments_fail_cleanly() {
    assert!(Cli::try_parse_from(["carvebot", "plan", "--task", "sideways"]).is_err());
    let cli = Cli::try_parse_from(["carvebot", "demo"]).unwrap();
    assert!(execute(&cli).is_err());
    let cli = Cli::try_parse_from(["carvebot", "--config", "/nonexistent/cfg.toml", "calibrate"]).unwrap();
    assert!(execute(&cli).is_err());
}
