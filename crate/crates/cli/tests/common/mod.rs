#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_pacrobust")
}

/// Three pedestrians moving in straight lines over frames 0, 10, ..., 290.
pub fn linear_dataset(dir: &Path) -> PathBuf {
    let mut text = String::new();
    for f in (0..300).step_by(10) {
        let t = f as f64 / 10.0;
        text.push_str(&format!("{f}\t1\t{:.6}\t{:.6}\n", 0.4 * t, 0.0));
        text.push_str(&format!("{f}\t2\t{:.6}\t{:.6}\n", 0.35 * t + 0.5, 1.5));
        text.push_str(&format!("{f}\t3\t{:.6}\t{:.6}\n", 12.0 - 0.3 * t, -2.0 + 0.05 * t));
    }
    let path = dir.join("linear.txt");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("launch pacrobust")
}

/// Runs and returns (exit code, parsed report) for commands writing into `out`.
pub fn run_report(args: &[&str], out: &Path) -> (i32, Value) {
    let output = run(args);
    let code = output.status.code().unwrap_or(-1);
    let path = out.join("report.json");
    assert!(
        path.exists(),
        "no report (exit {code}); stderr:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    let doc = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    (code, doc)
}

pub fn schema_validator() -> jsonschema::Validator {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("schema/report.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    jsonschema::options()
        .should_validate_formats(true)
        .build(&schema)
        .expect("schema compiles")
}

pub fn assert_valid(doc: &Value) {
    let v = schema_validator();
    let errors: Vec<String> = v.iter_errors(doc).map(|e| format!("{} at {}", e, e.instance_path)).collect();
    assert!(errors.is_empty(), "report violates schema: {errors:#?}");
}

pub fn adapter_cmd(extra: &str) -> String {
    format!("'{}' serve-builtin {extra}", bin())
}
