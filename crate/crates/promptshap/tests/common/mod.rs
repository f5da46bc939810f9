#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use promptshap::core::ensemble::{PredictionMatrix, ValidationSet};
use promptshap::formats::{self, PromptEntry, PromptManifest};

pub fn ids(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Three always-correct prompts and three that always vote the same wrong
/// label, over 10 binary instances with gold label 0.
pub fn adversarial() -> (PredictionMatrix, ValidationSet) {
    let rows = (0..6).map(|p| vec![usize::from(p >= 3); 10]).collect();
    let m = PredictionMatrix::hard(ids("p", 6), ids("x", 10), 2, rows).unwrap();
    let v = ValidationSet::new(ids("x", 10).into_iter().map(|i| (i, 0)).collect(), 2).unwrap();
    (m, v)
}

/// Writes the adversarial fixture and a vote-mode config into `dir`.
pub fn write_adversarial_run(dir: &Path) -> PathBuf {
    let (m, v) = adversarial();
    formats::write_string(&dir.join("matrix.csv"), &formats::matrix_csv(&m)).unwrap();
    formats::write_string(&dir.join("validation.csv"), &formats::validation_csv(&v)).unwrap();
    let cfg = serde_json::json!({
        "schema_version": 1,
        "task": "classification",
        "utility": {"mode": "matrix-vote", "tie_rule": "abstain"},
        "paths": {"matrix": "matrix.csv", "validation": "validation.csv", "utility_cache": "utility_cache.jsonl"},
        "game": {"method": "exact", "seed": 7}
    });
    let path = dir.join("run.json");
    formats::write_string(&path, &serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

pub fn manifest(n: usize) -> PromptManifest {
    PromptManifest::new(
        (0..n).map(|i| PromptEntry { id: format!("p{i}"), text: format!("Exemplar {i}."), rationale: i % 2 == 0 }).collect(),
    )
    .unwrap()
}

pub fn manifest_jsonl(m: &PromptManifest) -> String {
    formats::jsonl_string(m.prompts())
}

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_promptshap"))
}

pub fn run_bin(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut c = bin();
    c.args(args).env_remove(promptshap::client::API_KEY_ENV);
    for (k, v) in envs {
        c.env(k, v);
    }
    c.output().unwrap()
}

pub fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not an error document ({e}): {text}"))
}
