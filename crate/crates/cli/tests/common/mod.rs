#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

pub fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic")
}

pub fn replyclass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_replyclass"))
        .args(args)
        .output()
        .expect("spawn replyclass")
}

/// Runs `args` and panics with the captured stderr on a non-zero exit.
pub fn ok(args: &[&str]) -> String {
    let out = replyclass(args);
    assert!(
        out.status.success(),
        "replyclass {args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Every stage from ingest to evaluate on the bundled synthetic corpus, with
/// the scripted merge in place of a labeller.
pub fn run_pipeline(work: &Path, extra: &[&str]) -> Duration {
    let data = data_dir();
    let config = data.join("replyclass.toml");
    let truth = data.join("truth.json");
    let mut base = vec![
        "--config",
        config.to_str().unwrap(),
        "--work-dir",
        work.to_str().unwrap(),
    ];
    base.extend_from_slice(extra);
    let start = Instant::now();
    for stage in ["ingest", "embed", "candidates", "score", "cluster"] {
        ok(&[&[stage], &base[..]].concat());
    }
    ok(&[&["script-merge", "--truth", truth.to_str().unwrap()], &base[..]].concat());
    for stage in ["export-catalog", "dataset", "train", "evaluate"] {
        ok(&[&[stage], &base[..]].concat());
    }
    start.elapsed()
}

pub fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}
