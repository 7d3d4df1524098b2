#![allow(dead_code)]

pub mod csp_gen;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn toy_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/toy")
}

pub fn toy_instances() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(toy_dir().join("instances"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csp"))
        .collect();
    v.sort();
    v
}

pub fn cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csp-portfolio")).args(args).current_dir(cwd).output().expect("spawn cli")
}

pub fn cli_ok(args: &[&str], cwd: &Path) -> Output {
    let out = cli(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}\n{}", out.status, String::from_utf8_lossy(&out.stderr));
    out
}

/// Writes a verdict line straight to stderr so it shows up even when the
/// harness captures test output.
pub fn verdict(criterion: &str, pass: bool, detail: &str) {
    let line = format!("\nacceptance {criterion}: {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
}
