use std::fs;

use sweeper_core::scenario::{load_scenario, Scenario};
use sweeper_core::workflow::{self, Command, Flags, SolutionFile};

fn shipped(name: &str) -> String {
    format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn written_scenarios_load_back_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    for entry in fs::read_dir(format!("{}/../../scenarios", env!("CARGO_MANIFEST_DIR"))).unwrap() {
        let path = entry.unwrap().path();
        let sc = load_scenario(&path).unwrap();
        let copy = dir.path().join(path.file_name().unwrap());
        fs::write(&copy, sc.to_json()).unwrap();
        let back = load_scenario(&copy).unwrap();
        assert_eq!(back.spec, sc.spec, "{}", path.display());
        assert_eq!(back.to_json(), sc.to_json());
    }
}

#[test]
fn truncated_file_reports_a_position() {
    let text = fs::read_to_string(shipped("disk-push")).unwrap();
    let err = Scenario::from_json_str(&text[..text.len() / 2]).unwrap_err().to_string();
    assert!(err.contains("line"), "{err}");
}

#[test]
fn solution_file_survives_serialization() {
    let sc = load_scenario(shipped("slide1d")).unwrap();
    let out = workflow::run(Command::Solve, &sc, &Flags::default()).unwrap();
    let text = &out.artifact("slide1d.solution.json").unwrap().contents;
    let file: SolutionFile = serde_json::from_str(text).unwrap();
    assert_eq!(file.scenario, "slide1d");
    assert_eq!(file.bundles.len(), sc.solve_schedule.as_ref().unwrap().len());
    let again = serde_json::to_string_pretty(&file).unwrap() + "\n";
    assert_eq!(&again, text);
}

#[test]
fn sequential_and_parallel_sweeps_agree() {
    let sc = load_scenario(shipped("disk-slide")).unwrap();
    let seq = Flags { exec: sweeper_core::par::ExecMode::Sequential, ..Flags::default() };
    let a = workflow::run(Command::Sweep, &sc, &Flags::default()).unwrap();
    let b = workflow::run(Command::Sweep, &sc, &seq).unwrap();
    assert_eq!(a.artifacts, b.artifacts);
    assert_eq!(a.passed, Some(true));
}
