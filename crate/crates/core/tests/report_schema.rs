use std::path::PathBuf;

use tensor_colombeau::catalog::Catalog;
use tensor_colombeau::harness::{self, ExperimentConfig, Overrides};

fn workspace() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn validator() -> jsonschema::Validator {
    let text = std::fs::read_to_string(workspace().join("schemas/report.schema.json")).unwrap();
    let schema: serde_json::Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn assert_valid(v: &jsonschema::Validator, report: &serde_json::Value, what: &str) {
    let errors: Vec<String> = v.iter_errors(report).map(|e| format!("{} at {}", e, e.instance_path())).collect();
    assert!(errors.is_empty(), "{what}: {errors:#?}");
}

#[test]
fn shipped_config_reports_validate() {
    let v = validator();
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(workspace().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let out = dir.path().join(&name);
        harness::run(&path, &out, Overrides::default(), &Catalog::builtin()).unwrap();
        let report: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
        assert_valid(&v, &report, &name);
        assert_eq!(report["passed"], true, "{name}");
    }
}

#[test]
fn failed_run_report_validates() {
    let cfg = ExperimentConfig::from_json(
        r#"{"name":"overflow","kind":"scaling","dim":1,"point":[0.9],
            "element":{"iota":"dirac@0"},"eps_grid":[0.5,0.25,0.1,0.05]}"#,
    )
    .unwrap();
    let out = harness::run_config(&cfg, Overrides::default(), &Catalog::builtin()).unwrap();
    assert!(out.report.error.is_some());
    assert_valid(&validator(), &serde_json::to_value(&out.report).unwrap(), "failed run");
}

#[test]
fn schema_rejects_a_malformed_report() {
    let v = validator();
    let bad = serde_json::json!({ "tool": "tcolombeau", "passed": "yes" });
    assert!(!v.is_valid(&bad));
}
