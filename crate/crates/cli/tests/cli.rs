use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use roadsearch::formats::{read_json, write_json, ResultRecord, TestCase};
use roadsearch::geometry::{reconstruct, Pose, RoadGenome};
use roadsearch::simulator::{AgentConfig, Outcome};

fn roadsearch(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roadsearch"))
        .arg("--workdir")
        .arg(workdir)
        .arg("--quiet")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write_case(dir: &Path, id: &str, curvature: f64) {
    let genome = RoadGenome::from_curvatures(vec![curvature; 50], 1.0).unwrap();
    let case = TestCase::new(id, &genome, &reconstruct(&genome, Pose::default()));
    write_json(&dir.join(format!("{id}.json")), &case).unwrap();
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path();
    assert_eq!(code(&roadsearch(work, &["--help"])), 0);
    assert_eq!(code(&roadsearch(work, &["frobnicate"])), 1);
    assert_eq!(code(&roadsearch(work, &["seed", "--n-roads", "many"])), 1);

    let bad = work.join("bad.toml");
    fs::write(&bad, "seed = 1\n[ga]\nno_such_key = 3\n").unwrap();
    let out = roadsearch(work, &["--config", bad.to_str().unwrap(), "seed"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    fs::write(&bad, "[ga]\nselect_f1 = 10\nselect_f2 = 20\n").unwrap();
    assert_eq!(code(&roadsearch(work, &["--config", bad.to_str().unwrap(), "generate"])), 1);

    // Training without a dataset is a runtime failure.
    let out = roadsearch(work, &["train"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn init_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.toml");
    let second = dir.path().join("b.toml");
    assert_eq!(code(&roadsearch(dir.path(), &["--seed", "77", "init-config", "-o", first.to_str().unwrap()])), 0);
    let args = ["--config", first.to_str().unwrap(), "init-config", "-o", second.to_str().unwrap()];
    assert_eq!(code(&roadsearch(dir.path(), &args)), 0);
    let text = fs::read_to_string(&first).unwrap();
    assert_eq!(text, fs::read_to_string(&second).unwrap());
    assert!(text.contains("seed = 77"));
}

#[test]
fn execute_classifies_fixtures_and_counts_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let tests = dir.path().join("cases");
    fs::create_dir_all(&tests).unwrap();
    write_case(&tests, "straight", 0.0);
    write_case(&tests, "tight", 0.1);
    fs::write(tests.join("broken.json"), "{ \"id\": \"broken\", ").unwrap();
    fs::write(tests.join("notes.txt"), "ignored").unwrap();

    let results = dir.path().join("out");
    let args = ["execute", "--tests", tests.to_str().unwrap(), "--results", results.to_str().unwrap()];
    let out = roadsearch(dir.path(), &args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("1 malformed"));

    let straight: ResultRecord = read_json(&results.join("straight.json")).unwrap();
    assert_eq!(straight.test_outcome, Outcome::Pass);
    assert!(straight.oob_events.is_empty() && straight.valid);
    let cruise = 50.0 / AgentConfig::default().v_max;
    assert!((straight.test_duration - cruise).abs() < 0.05 * cruise, "{}", straight.test_duration);
    let tight: ResultRecord = read_json(&results.join("tight.json")).unwrap();
    assert_eq!(tight.test_outcome, Outcome::Fail);
    assert!(!tight.oob_events.is_empty());
    assert_eq!(fs::read_dir(&results).unwrap().count(), 2);

    // A result renders with one marker per OOB event.
    let svg_path = dir.path().join("tight.svg");
    let (test_file, result_file) = (tests.join("tight.json"), results.join("tight.json"));
    let args = [
        "plot",
        "--test",
        test_file.to_str().unwrap(),
        "--result",
        result_file.to_str().unwrap(),
        "-o",
        svg_path.to_str().unwrap(),
    ];
    assert_eq!(code(&roadsearch(dir.path(), &args)), 0);
    let svg = fs::read_to_string(&svg_path).unwrap();
    assert_eq!(svg.matches("class=\"oob\"").count(), tight.oob_events.len());
    assert_eq!(svg.matches("class=\"trace\"").count(), 1);

    // Mismatched test and result are refused.
    let other = tests.join("straight.json");
    let args = [
        "plot",
        "--test",
        other.to_str().unwrap(),
        "--result",
        result_file.to_str().unwrap(),
        "-o",
        svg_path.to_str().unwrap(),
    ];
    assert_eq!(code(&roadsearch(dir.path(), &args)), 2);
}

#[test]
fn seeding_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let work = dir.path().join("run");
    assert_eq!(code(&roadsearch(&work, &["--seed", "5", "seed", "--n-roads", "40"])), 0);
    let first = fs::read(work.join("dataset.jsonl")).unwrap();
    assert_eq!(first.iter().filter(|&&b| b == b'\n').count(), 40);
    assert_eq!(code(&roadsearch(&work, &["--seed", "5", "seed", "--n-roads", "40"])), 0);
    assert_eq!(fs::read(work.join("dataset.jsonl")).unwrap(), first);
    assert!(!work.join(".roadsearch.lock").exists());
}

#[test]
fn locked_workdir_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join(".roadsearch.lock"), "").unwrap();
    let out = roadsearch(dir.path(), &["seed", "--n-roads", "5"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
    assert!(!dir.path().join("dataset.jsonl").exists());
}
