use std::collections::HashMap;
use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/figure1.json")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_policy-choice"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn predict_reproduces_worked_example() {
    let fx = fixture();
    let text = stdout(&["predict", fx.to_str().unwrap(), "--model", "both"]);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(
        reader.headers().unwrap(),
        vec!["model", "kind", "key", "value"]
    );
    let mut sequences: HashMap<(String, String), f64> = HashMap::new();
    let mut paths = HashMap::new();
    for row in reader.records() {
        let row = row.unwrap();
        let value: f64 = row[3].parse().unwrap();
        match &row[1] {
            "sequence" => {
                sequences.insert((row[0].to_string(), row[2].to_string()), value);
            }
            "path" => {
                paths.insert((row[0].to_string(), row[2].to_string()), value);
            }
            _ => {}
        }
    }
    let key = |model: &str, tail: &str| (model.to_string(), format!("(0 0 {{0 1}}) {tail}"));
    let expected = [
        ("recursive", "(1 1 {0}) (2 4 {0})", 0.1345),
        ("recursive", "(1 1 {1}) (2 3 {1})", 0.25),
        ("recursive", "(1 1 {0}) (3 3 {0})", 0.3655),
        ("recursive", "(1 1 {1}) (3 3 {1})", 0.25),
        ("nonrecursive", "(1 1 {0}) (2 4 {0})", 0.1888),
        ("nonrecursive", "(1 1 {1}) (2 3 {1})", 0.25),
        ("nonrecursive", "(1 1 {0}) (3 3 {0})", 0.3112),
        ("nonrecursive", "(1 1 {1}) (3 3 {1})", 0.25),
    ];
    for (model, tail, want) in expected {
        let got = sequences[&key(model, tail)];
        assert!((got - want).abs() < 5e-5, "{model} {tail}: {got}");
    }
    assert!((paths[&("nonrecursive".to_string(), "1-2".to_string())] - 0.4388).abs() < 5e-5);
    assert!((paths[&("nonrecursive".to_string(), "1-3".to_string())] - 0.5612).abs() < 5e-5);
}

#[test]
fn enumerate_lists_four_policies() {
    let fx = fixture();
    let text = stdout(&["enumerate-policies", fx.to_str().unwrap()]);
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(doc[0]["count"], 4);
    let utilities: Vec<f64> = doc[0]["policies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["expected_utility"].as_f64().unwrap())
        .collect();
    assert_eq!(utilities, vec![-3.5, -3.5, -3.0, -3.0]);
}

#[test]
fn validate_names_the_broken_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(fixture())
        .unwrap()
        .replacen("0.5", "0.4", 1);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, text).unwrap();
    let out = run(&["validate", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("probabilities sum to"), "{err}");

    let broken = dir.path().join("broken.json");
    fs::write(&broken, "{\n  \"nodes\": [\"a\",\n").unwrap();
    let out = run(&["validate", broken.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let ok = stdout(&["validate", fixture().to_str().unwrap()]);
    assert!(ok.starts_with("valid: 4 links, 2 support points"), "{ok}");
}

#[test]
fn bad_flags_are_usage_errors() {
    let out = run(&[
        "predict",
        fixture().to_str().unwrap(),
        "--model",
        "sideways",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["predict", fixture().to_str().unwrap(), "--mu", "0"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--mu"));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let fx = fixture();
    let fx = fx.to_str().unwrap();
    for args in [
        vec!["simulate", fx, "--count", "200", "--seed", "9"],
        vec![
            "simulate",
            fx,
            "--model",
            "nonrecursive",
            "--count",
            "200",
            "--seed",
            "9",
        ],
        vec!["predict", fx],
        vec![
            "compare",
            "--sweep",
            "--x-range=-1:2:4",
            "--y-range=-1:2:4",
            "--p-range",
            "0.2:0.8:3",
        ],
    ] {
        assert_eq!(stdout(&args), stdout(&args), "{args:?}");
    }
    assert_ne!(
        stdout(&["simulate", fx, "--count", "50", "--seed", "1"]),
        stdout(&["simulate", fx, "--count", "50", "--seed", "2"])
    );
}

#[test]
fn simulate_then_estimate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let fx = fixture();
    let obs = dir.path().join("obs.json");
    let out = run(&[
        "simulate",
        fx.to_str().unwrap(),
        "--count",
        "3000",
        "--seed",
        "4",
        "--output",
        obs.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = stdout(&[
        "estimate",
        fx.to_str().unwrap(),
        obs.to_str().unwrap(),
        "--model",
        "recursive",
        "--beta=-0.5",
        "--json",
    ]);
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let beta = doc[0]["beta_hat"][0].as_f64().unwrap();
    assert!((beta + 1.0).abs() < 0.2, "{beta}");
    assert_eq!(doc[0]["converged"], true);
    assert_eq!(doc[0]["observations"], 3000);

    let table = stdout(&["estimate", fx.to_str().unwrap(), obs.to_str().unwrap()]);
    assert!(table.contains("model           recursive"));
    assert!(table.contains("model           nonrecursive"));
    assert!(table.contains("travel_time"));
}

#[test]
fn compare_classifies_scenarios() {
    let text = stdout(&["compare", "--a", "2", "--b", "2", "--x", "1", "--y", "2"]);
    let last = text.lines().nth(1).unwrap();
    assert!(
        last.ends_with("route2_dominant,recursive_more_extreme"),
        "{last}"
    );

    let sweep = stdout(&["compare", "--sweep"]);
    assert_eq!(sweep.lines().count(), 1 + 12 * 12 * 5);

    let fx = fixture();
    let report = stdout(&["compare", "--network", fx.to_str().unwrap()]);
    assert_eq!(report.lines().count(), 5);
    assert!(report.lines().last().unwrap().starts_with("0.0001"));
}
