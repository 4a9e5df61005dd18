use std::path::PathBuf;
use std::process::{Command, Output};

use orbit_cli::load::{emit_bundle, load_scenario, parse_bundle};
use orbit_core::{Scenario, TaxSchedule};
use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_orbitgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is a JSON error object")
}

#[test]
fn solve_sym2_reports_reference_fleets() {
    let sym2 = fixture("sym2.json");
    let out = run(&["solve", "--scenario", sym2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    for s in report["fleets"].as_array().unwrap() {
        assert!((s.as_f64().unwrap() - 1.428571).abs() < 1e-6);
    }
    assert!((report["debris"]["stock"].as_f64().unwrap() - 2.857143).abs() < 1e-6);
    assert_eq!(report["assumptions"]["assumption2"], Value::Bool(true));
}

#[test]
fn strict_mode_rejects_abatement_bound_violation() {
    let sym2 = fixture("sym2.json");
    let args = ["solve", "--scenario", sym2.to_str().unwrap(), "--set", "scenario.k=0.6", "--set", "scenario.d=1"];
    let lenient = run(&args);
    assert_eq!(lenient.status.code(), Some(0));
    assert_eq!(stdout_json(&lenient)["assumptions"]["assumption2"], Value::Bool(false));

    let strict = run(&[&args[..], &["--strict"]].concat());
    assert_eq!(strict.status.code(), Some(4));
    assert_eq!(stderr_json(&strict)["error"], "assumption");
}

#[test]
fn legacy_debris_override_gives_hideb() {
    let b = load_scenario(&fixture("sym2.json"), &[("scenario.D0".into(), "5".into())]).unwrap();
    assert_eq!(b.scenario, Scenario::hideb());
    let hideb = load_scenario(&fixture("hideb.json"), &[]).unwrap();
    assert_eq!(b, hideb);
}

#[test]
fn cost_length_mismatch_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    let text = std::fs::read_to_string(fixture("sym2.json"))
        .unwrap()
        .replace("\"m\": [1.0, 1.0]", "\"m\": [1.0]");
    std::fs::write(&path, text).unwrap();
    let out = run(&["solve", "--scenario", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "validation");
    let fields: Vec<&str> = err["violations"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["field"].as_str().unwrap())
        .collect();
    assert!(fields.contains(&"m"), "{err}");
}

#[test]
fn unknown_override_is_reported() {
    let sym2 = fixture("sym2.json");
    let out = run(&["solve", "--scenario", sym2.to_str().unwrap(), "--set", "scenario.kappa=1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"], "override");
}

#[test]
fn bundles_round_trip_at_full_precision() {
    let scenario = Scenario {
        prices: vec![0.1 + 0.2, 1.0 / 3.0],
        costs: vec![std::f64::consts::PI, 1e-300 + 7.0],
        collision_coeff: 0.123_456_789_012_345_67,
        ..Scenario::sym2()
    };
    let taxes = TaxSchedule::new(vec![vec![0.1, 2.0 / 3.0], vec![0.0, 1.0 / 7.0]]).unwrap();
    let text = emit_bundle(&orbit_cli::load::Bundle {
        scenario,
        taxes,
        abatement: 0.3,
    });
    let once = parse_bundle(&text, &[]).unwrap();
    let twice = parse_bundle(&emit_bundle(&once), &[]).unwrap();
    assert_eq!(once, twice);
    assert_eq!(emit_bundle(&once), text);
}

#[test]
fn sweep_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let sym2 = fixture("sym2.json");
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let out = run(&[
            "sweep", "--scenario", sym2.to_str().unwrap(), "--sweep", "D0:0:8:9",
            "--format", "csv", "--out", path.to_str().unwrap(), "--seed", "7",
        ]);
        assert_eq!(out.status.code(), Some(0));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("D0,S_1,S_2,D,W_1,W_2,qbar,"));
    assert!(header.ends_with("averting_model,averting_closed,self_enforcing_model,self_enforcing_closed,assumptions,status"));
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn sweep_requires_two_steps() {
    let sym2 = fixture("sym2.json");
    let out = run(&["sweep", "--scenario", sym2.to_str().unwrap(), "--sweep", "D0:0:8:1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_emits_digest_of_every_suite() {
    let sym2 = fixture("sym2.json");
    let out = run(&["verify", "--scenario", sym2.to_str().unwrap(), "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0));
    let digest = stdout_json(&out);
    let suites = digest["batch_suites"].as_array().unwrap();
    let ids: Vec<u64> = suites.iter().map(|s| s["suite"].as_u64().unwrap()).collect();
    assert_eq!(ids, (1..=10).collect::<Vec<_>>());
    assert!(suites.iter().all(|s| s["passed"].is_boolean()));
    for part in digest["scenario_suite"].as_array().unwrap() {
        assert_eq!(part["passed"], Value::Bool(true), "{part}");
    }

    let again = run(&["verify", "--scenario", sym2.to_str().unwrap(), "--seed", "42"]);
    assert_eq!(again.stdout, out.stdout);
}

#[test]
fn verify_needs_a_seed() {
    let sym2 = fixture("sym2.json");
    let out = run(&["verify", "--scenario", sym2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn treaty_reports_both_variants_and_divergence() {
    let sym2 = fixture("sym2.json");
    let out = run(&["treaty", "--scenario", sym2.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["analyses"].as_array().unwrap().len(), 2);
    let div = &report["divergence"][0];
    assert!((div["closed"]["beta"].as_f64().unwrap() - 5.0 / 756.0).abs() < 1e-12);
    assert!((div["model"]["beta"].as_f64().unwrap() + 2.0 / 49.0).abs() < 1e-9);
}

#[test]
fn regulate_solo_stays_untaxed() {
    let solo = fixture("solo.json");
    let out = run(&["regulate", "--scenario", solo.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["result"]["converged"], Value::Bool(true));
    assert_eq!(report["result"]["taxes"][0][0].as_f64(), Some(0.0));
}
