#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn default_config() -> PathBuf {
    workspace_root().join("configs/default.toml")
}

/// Runs the binary in `cwd` with logging quietened.
pub fn ensan(cwd: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ensan"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .env_remove("ENSAN_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

pub fn ok(cwd: &Path, args: &[&str]) {
    let out = ensan(cwd, args);
    assert!(
        out.status.success(),
        "ensan {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// The structured error line of a failed run, as `(kind, message)`.
pub fn error_line(out: &Output) -> (String, String) {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr
        .lines()
        .find_map(|l| l.strip_prefix("error: "))
        .unwrap_or_else(|| panic!("no error line in {stderr}"));
    let v: serde_json::Value = serde_json::from_str(line).expect("error line is JSON");
    (v["kind"].as_str().unwrap().to_string(), v["message"].as_str().unwrap().to_string())
}

pub fn tree_bytes(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Rows of a score dump: `(predictor, san_member, image_id, label, score)`.
pub fn read_dump(path: &Path) -> Vec<(String, String, String, u8, f64)> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.deserialize().map(|row| row.unwrap()).collect()
}

/// Rows grouped by `(predictor, san_member)`.
pub fn grouped(rows: &[(String, String, String, u8, f64)]) -> BTreeMap<(String, String), Vec<(bool, f64)>> {
    let mut m: BTreeMap<(String, String), Vec<(bool, f64)>> = BTreeMap::new();
    for (p, s, _, l, v) in rows {
        m.entry((p.clone(), s.clone())).or_default().push((*l == 1, *v));
    }
    m
}

/// Twice the pairwise AUC count: 2 per ordered win, 1 per tie.
pub fn pairwise_count(scores: &[(bool, f64)]) -> (u64, u64) {
    let (mut num, mut pairs) = (0, 0);
    for &(lp, sp) in scores.iter().filter(|x| x.0) {
        debug_assert!(lp);
        for &(_, sn) in scores.iter().filter(|x| !x.0) {
            pairs += 1;
            num += if sp > sn {
                2
            } else if sp == sn {
                1
            } else {
                0
            };
        }
    }
    (num, 2 * pairs)
}

pub fn pairwise_auc(scores: &[(bool, f64)]) -> f64 {
    let (n, d) = pairwise_count(scores);
    n as f64 / d as f64
}
