use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use twinwatch::anomaly::{AnomalyEvent, DetectorConfig};
use twinwatch::incubator::{Fault, FaultSchedule, RunConfig};
use twinwatch::pipeline::{run_pipeline, write_estimates};
use twinwatch::telemetry::{read_csv, write_csv};

fn twinwatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_twinwatch"))
        .args(args)
        .env_remove("TWINWATCH_LOG")
        .output()
        .expect("binary runs")
}

fn p(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn events(path: &str) -> Vec<AnomalyEvent> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

fn write_default_config(dir: &TempDir) -> String {
    let path = p(dir, "inc.json");
    fs::write(&path, serde_json::to_string_pretty(&RunConfig::default()).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_csv_and_sidecar() {
    let dir = TempDir::new().unwrap();
    let cfg = write_default_config(&dir);
    let run = p(&dir, "run.csv");
    let out = twinwatch(&["simulate", "--config", &cfg, "--steps", "2000", "--fault", "gbr:x10:600-660", "--seed", "7", "-o", &run]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let records = read_csv(fs::File::open(&run).unwrap()).unwrap();
    assert_eq!(records.len(), 2000);
    assert!(records.iter().all(|r| r.t_heater.is_some()));

    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(p(&dir, "run.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["seed"], 7);
    assert_eq!(meta["steps"], 2000);
    assert_eq!(meta["faults"][0]["start"], 600);
    assert_eq!(meta["faults"][0]["end"], 660);
    assert_eq!(meta["faults"][0]["factor"], 10.0);
    assert_eq!(meta["config"]["g_br"], 0.5);
}

#[test]
fn zero_steps_gives_header_only() {
    let dir = TempDir::new().unwrap();
    let run = p(&dir, "run.csv");
    let out = twinwatch(&["simulate", "--steps", "0", "-o", &run]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&run).unwrap(), "timestamp,heater_on,t_room,t_box\n");
}

#[test]
fn unreadable_config_leaves_no_output() {
    let dir = TempDir::new().unwrap();
    let run = p(&dir, "run.csv");
    let out = twinwatch(&["simulate", "--config", &p(&dir, "missing.json"), "--steps", "10", "-o", &run]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);

    let bad = p(&dir, "bad.json");
    fs::write(&bad, "{\"c_h\": -1}").unwrap();
    let out = twinwatch(&["simulate", "--config", &bad, "--steps", "10", "-o", &run]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!Path::new(&run).exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let run = p(&dir, "run.csv");
    assert_eq!(twinwatch(&[]).status.code(), Some(1));
    assert_eq!(twinwatch(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(twinwatch(&["simulate", "-o", &run]).status.code(), Some(1));
    assert_eq!(twinwatch(&["simulate", "--steps", "5", "--fault", "gbr:x10", "-o", &run]).status.code(), Some(1));
    // overlapping faults
    let out = twinwatch(&["simulate", "--steps", "5", "--fault", "gbr:x2:1-5", "--fault", "gbr:x3:4-8", "-o", &run]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!Path::new(&run).exists());
    assert_eq!(twinwatch(&["detect", "--input", &run, "--window-m", "9", "-o", &run]).status.code(), Some(1));
    assert_eq!(twinwatch(&["--help"]).status.code(), Some(0));
}

#[test]
fn file_pipeline_matches_in_process_composition() {
    let dir = TempDir::new().unwrap();
    let cfg = write_default_config(&dir);
    let (run, est, ev) = (p(&dir, "run.csv"), p(&dir, "est.csv"), p(&dir, "events.jsonl"));
    assert!(twinwatch(&["simulate", "--config", &cfg, "--steps", "1500", "--fault", "gbr:x10:600-660", "--seed", "11", "-o", &run]).status.success());
    assert!(twinwatch(&["estimate", "--telemetry", &run, "--config", &cfg, "-o", &est]).status.success());
    assert!(twinwatch(&["detect", "--input", &est, "-o", &ev]).status.success());

    let faults = FaultSchedule::new(vec![Fault::lid_open(600, 660, 10.0)]).unwrap();
    let (telemetry, rows, expected) =
        run_pipeline(&RunConfig::default(), &faults, 1500, 11, &DetectorConfig::default()).unwrap();
    let mut csv = Vec::new();
    write_csv(&telemetry, &mut csv).unwrap();
    assert_eq!(fs::read(&run).unwrap(), csv);
    let mut table = Vec::new();
    write_estimates(&rows, &mut table).unwrap();
    assert_eq!(fs::read(&est).unwrap(), table);
    assert_eq!(events(&ev), expected);

    let overlapping: Vec<_> = expected.iter().filter(|e| e.overlaps(600, 680)).collect();
    assert_eq!(overlapping.len(), 1);
    assert_eq!(expected.len(), 1);
}

#[test]
fn pipeline_is_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let mut outputs = Vec::new();
    for i in 0..2 {
        let (run, est, ev) = (p(&dir, &format!("r{i}.csv")), p(&dir, &format!("e{i}.csv")), p(&dir, &format!("v{i}.jsonl")));
        assert!(twinwatch(&["simulate", "--steps", "800", "--fault", "gbr:x10:300-360", "--seed", "5", "-o", &run]).status.success());
        assert!(twinwatch(&["estimate", "--telemetry", &run, "-o", &est]).status.success());
        assert!(twinwatch(&["detect", "--input", &est, "-o", &ev]).status.success());
        outputs.push([fs::read(&run).unwrap(), fs::read(&est).unwrap(), fs::read(&ev).unwrap()]);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn fault_free_run_has_no_events_and_low_confidence_fires() {
    let dir = TempDir::new().unwrap();
    let (run, est, ev) = (p(&dir, "run.csv"), p(&dir, "est.csv"), p(&dir, "events.jsonl"));
    assert!(twinwatch(&["simulate", "--steps", "2000", "--seed", "7", "-o", &run]).status.success());
    assert!(twinwatch(&["estimate", "--telemetry", &run, "-o", &est]).status.success());
    assert!(twinwatch(&["detect", "--input", &est, "-o", &ev]).status.success());
    assert_eq!(fs::read_to_string(&ev).unwrap(), "");

    let low = p(&dir, "low.jsonl");
    assert!(twinwatch(&["detect", "--input", &est, "--confidence", "0.5", "-o", &low]).status.success());
    assert!(!events(&low).is_empty());
}

#[test]
fn estimate_tracks_ground_truth() {
    let dir = TempDir::new().unwrap();
    let (run, est) = (p(&dir, "run.csv"), p(&dir, "est.csv"));
    assert!(twinwatch(&["simulate", "--steps", "2000", "--fault", "gbr:x10:1500-1560", "--seed", "3", "-o", &run]).status.success());
    assert!(twinwatch(&["estimate", "--telemetry", &run, "-o", &est]).status.success());
    let truth = read_csv(fs::File::open(&run).unwrap()).unwrap();
    let rows = twinwatch::pipeline::read_estimates(fs::File::open(&est).unwrap()).unwrap();
    // nominal segment before the fault
    let nominal = 1..1500;
    let mae: f64 = rows[..1499]
        .iter()
        .zip(&truth)
        .filter(|(r, _)| nominal.contains(&r.step))
        .map(|(r, t)| (r.mu_theater - t.t_heater.unwrap()).abs())
        .sum::<f64>()
        / 1499.0;
    let sensor_std = RunConfig::default().measurement_noise[(0, 0)].sqrt();
    assert!(mae < 5.0 * sensor_std, "mae {mae}");
}

#[test]
fn empty_telemetry_gives_header_only_estimate() {
    let dir = TempDir::new().unwrap();
    let (run, est) = (p(&dir, "run.csv"), p(&dir, "est.csv"));
    fs::write(&run, "timestamp,heater_on,t_room,t_box\n").unwrap();
    assert!(twinwatch(&["estimate", "--telemetry", &run, "-o", &est]).status.success());
    assert_eq!(
        fs::read_to_string(&est).unwrap(),
        "step,timestamp,mu_theater,mu_tbox,var_theater,var_tbox,innovation,nis,measured_tbox\n"
    );
}

#[test]
fn mismatched_state_dimension_is_named() {
    let dir = TempDir::new().unwrap();
    let (run, est, cfg) = (p(&dir, "run.csv"), p(&dir, "est.csv"), p(&dir, "sys.json"));
    assert!(twinwatch(&["simulate", "--steps", "10", "-o", &run]).status.success());
    fs::write(
        &cfg,
        r#"{"A":[[1,0,0],[0,1,0],[0,0,1]],"B":[[0,0],[0,0],[0,0]],"C":[[0,1,0]],
            "R":[[1,0,0],[0,1,0],[0,0,1]],"Q":[[1]],"dt":3}"#,
    )
    .unwrap();
    let out = twinwatch(&["estimate", "--telemetry", &run, "--config", &cfg, "-o", &est]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("state dimension"), "{stderr}");
    assert!(!Path::new(&est).exists());

    let mut run_cfg = serde_json::to_value(RunConfig::default()).unwrap();
    run_cfg["initial_state"] = serde_json::json!([21.0, 21.0, 21.0]);
    fs::write(&cfg, run_cfg.to_string()).unwrap();
    let out = twinwatch(&["estimate", "--telemetry", &run, "--config", &cfg, "-o", &est]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("initial_state"));
}

#[test]
fn malformed_inputs_exit_two() {
    let dir = TempDir::new().unwrap();
    let (run, est, ev) = (p(&dir, "run.csv"), p(&dir, "est.csv"), p(&dir, "ev.jsonl"));
    fs::write(&run, "timestamp,heater_on,t_room,t_box\n1.0,1,21.0,abc\n").unwrap();
    let out = twinwatch(&["estimate", "--telemetry", &run, "-o", &est]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    fs::write(&est, "step,nis\n1,0.5\n").unwrap();
    assert_eq!(twinwatch(&["detect", "--input", &est, "-o", &ev]).status.code(), Some(2));
    assert!(!Path::new(&ev).exists());
}

#[test]
fn log_level_from_environment() {
    let dir = TempDir::new().unwrap();
    let run = p(&dir, "run.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_twinwatch"))
        .args(["simulate", "--steps", "3", "-o", &run])
        .env("TWINWATCH_LOG", "info")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("wrote 3 records"));
}
