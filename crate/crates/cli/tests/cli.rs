use std::io::Write;

use causal_hjb::grid_paths::SamplePath;
use causal_hjb_cli::{comparable, run, EXIT_GATE, EXIT_PASS, EXIT_USAGE};
use serde_json::Value;

fn argv(s: &str) -> Vec<String> {
    std::iter::once("causal-hjb".to_string()).chain(s.split_whitespace().map(String::from)).collect()
}

fn report(s: &str) -> (i32, Value) {
    let out = run(argv(s));
    let r = out.report.unwrap_or_else(|| panic!("{s}: no report ({:?})", out.error));
    (out.code, r)
}

fn schema() -> Value {
    serde_json::from_str(include_str!("../schema/report.schema.json")).unwrap()
}

const SMALL: &[&str] = &[
    "lift --brownian 2 --n 32",
    "lift --brownian 1,2,3 --samples 3 --n 128 --triples 50",
    "qv --levels 4 --seeds 4",
    "qv --tau identity --levels 3 --seeds 2",
    "integral --n 64,256 --seeds 4",
    "rde --n 64,256 --seeds 4",
    "derivatives --probes 4 --reconstruction-n 200",
    "ito-check --n 256 --seeds 4",
    "verify --example insider --probes 5 --probe-steps 50",
    "verify --example pathwise --skip-mc --probes 5 --counter-paths 20 --counter-steps 32",
    "verify --example frontrunner --skip-mc --probes 5",
];

#[test]
fn reports_validate_against_schema() {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    for cmd in SMALL {
        let (_, r) = report(cmd);
        let errors: Vec<String> = validator.iter_errors(&r).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{cmd}: {errors:?}");
        assert_eq!(r["schema_version"], "1.0.0");
    }
}

#[test]
fn schema_rejects_broken_reports() {
    let validator = jsonschema::validator_for(&schema()).unwrap();
    let (_, mut r) = report("lift --brownian 1 --n 16");
    r["gates"][0]["op"] = "~".into();
    assert!(!validator.is_valid(&r));
    let (_, mut r) = report("lift --brownian 1 --n 16");
    r.as_object_mut().unwrap().remove("config");
    assert!(!validator.is_valid(&r));
}

#[test]
fn config_is_fully_resolved() {
    let (_, r) = report("integral --n 64 --seeds 2");
    let cfg = &r["config"];
    for key in ["n", "seeds", "seed", "oversampling", "tolerance", "format"] {
        assert!(cfg.get(key).is_some(), "missing {key}");
    }
    assert!(cfg.get("threads").is_none());
}

#[test]
fn same_flags_same_report() {
    for cmd in ["lift --brownian 2 --n 64 --samples 4", "qv --levels 5 --seeds 8", "verify --example frontrunner --skip-mc --probes 8"] {
        let (_, a) = report(cmd);
        let (_, b) = report(cmd);
        assert_eq!(comparable(&a), comparable(&b), "{cmd}");
        let (_, c) = report(&format!("{cmd} --threads 1"));
        assert_eq!(comparable(&a), comparable(&c), "{cmd}");
    }
}

#[test]
fn lift_csv_round_trips() {
    let out = run(argv("lift --brownian 2 --n 50 --format csv"));
    assert_eq!(out.code, EXIT_PASS);
    let text = out.stdout.unwrap();
    let p = SamplePath::read_csv(text.as_bytes()).unwrap();
    assert_eq!((p.len(), p.dim()), (51, 2));
    let mut again = Vec::new();
    p.write_csv(&mut again).unwrap();
    assert_eq!(String::from_utf8(again).unwrap(), text);
}

#[test]
fn lift_reads_a_path_file() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(f, "t,x1").unwrap();
    for k in 0..=16 {
        writeln!(f, "{},{}", k as f64 / 16.0, (k as f64).sin()).unwrap();
    }
    let (code, r) = report(&format!("lift --input {}", f.path().display()));
    assert_eq!(code, EXIT_PASS);
    assert_eq!(r["body"]["lifts"][0]["steps"], 16);
    assert_eq!(r["body"]["lifts"][0]["exhaustive"], true);
}

#[test]
fn malformed_csv_is_a_usage_error_with_line() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "t,x1\n0,0\n0.5,abc\n1,1\n").unwrap();
    let out = run(argv(&format!("lift --input {}", f.path().display())));
    assert_eq!(out.code, EXIT_USAGE);
    let msg = out.error.unwrap();
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn usage_errors() {
    for cmd in [
        "lift",
        "lift --brownian 1 --threads 0",
        "verify --example insider --ablate transport",
        "qv --tau sideways",
        "qv --levels 2 --min-level 3",
        "ito-check --functional mixed --tau lookahead:0.1 --n 1024",
        "derivatives --format csv",
        "nonsense",
    ] {
        assert_eq!(run(argv(cmd)).code, EXIT_USAGE, "{cmd}");
    }
    assert_eq!(run(argv("--help")).code, EXIT_PASS);
}

#[test]
fn ablations_fail_their_gates() {
    for which in ["transport", "z-trace"] {
        let (code, r) = report(&format!("verify --example frontrunner --skip-mc --probes 10 --ablate {which}"));
        assert_eq!(code, EXIT_GATE, "{which}");
        let failed: Vec<&str> = r["gates"].as_array().unwrap().iter().filter(|g| g["pass"] == false).map(|g| g["name"].as_str().unwrap()).collect();
        assert!(failed.contains(&"max_parabolic_residual"), "{which}: {failed:?}");
    }
}

#[test]
fn config_file_merges_under_flags() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "# sweep\nseeds = 3\nn = 64,128\nseed = 9\n").unwrap();
    let (_, r) = report(&format!("integral --config {} --seed 4", f.path().display()));
    assert_eq!(r["config"]["seeds"], 3);
    assert_eq!(r["config"]["seed"], 4);
    assert_eq!(r["config"]["n"], serde_json::json!([64, 128]));

    let mut bad = tempfile::NamedTempFile::new().unwrap();
    write!(bad, "seeds = 3\nthis line is wrong\n").unwrap();
    let out = run(argv(&format!("integral --config {}", bad.path().display())));
    assert_eq!(out.code, EXIT_USAGE);
    assert!(out.error.unwrap().contains('2'));
}

#[test]
fn out_file_receives_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    let out = run(argv(&format!("verify --example insider --probes 4 --probe-steps 40 --out {}", path.display())));
    assert_eq!(out.code, EXIT_PASS);
    assert!(out.stdout.is_none());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(v["passed"], true);
}
