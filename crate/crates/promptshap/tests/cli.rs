mod common;

use std::path::Path;

use promptshap::core::learn::EmbeddingMatrix;
use promptshap::core::{rng, Method, ShapleyResult};
use promptshap::formats::{self, ValuesDoc};
use serde_json::Value;

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = common::run_bin(args, &[]);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn value_on_adversarial_fixture_is_efficient() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_adversarial_run(dir.path());
    let doc: ValuesDoc = serde_json::from_str(&ok(&["value", "--config", path_str(&cfg)])).unwrap();
    assert_eq!(doc.method, Method::Exact);
    assert_eq!(doc.n, 6);
    let total: f64 = doc.values().iter().sum();
    assert!((total - (doc.u_full - doc.u_empty)).abs() < 1e-9);
    assert_eq!(doc.u_full, 0.0);
    let v = doc.values();
    assert!(v[..3].iter().all(|&x| x > 0.0) && v[3..].iter().all(|&x| x < 0.0));
    // Cache file was populated with all 63 non-empty coalitions.
    let cache = std::fs::read_to_string(dir.path().join("utility_cache.jsonl")).unwrap();
    assert_eq!(cache.lines().count(), 63);
}

#[test]
fn value_methods_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_adversarial_run(dir.path());
    let c = path_str(&cfg);
    let mc: Value = serde_json::from_str(&ok(&["value", "--config", c, "--method", "mc", "--seed", "11", "--permutations", "200"])).unwrap();
    assert_eq!(mc["method"], "monte_carlo");
    assert_eq!((mc["seed"].as_u64(), mc["samples"].as_u64()), (Some(11), Some(200)));
    let loo: Value = serde_json::from_str(&ok(&["value", "--config", c, "--method", "loo"])).unwrap();
    assert_eq!(loo["method"], "leave_one_out");
    assert!(loo.get("seed").is_none());
}

#[test]
fn curve_is_deterministic_and_shows_the_small_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_adversarial_run(dir.path());
    let c = path_str(&cfg);
    let values = dir.path().join("values.json");
    let loo = dir.path().join("loo.json");
    ok(&["value", "--config", c, "--out", path_str(&values)]);
    ok(&["value", "--config", c, "--method", "loo", "--out", path_str(&loo)]);
    let out_dir = dir.path().join("out");
    let args = ["curve", "--config", c, "--values", path_str(&values), "--values", path_str(&loo), "--out-dir", path_str(&out_dir)];
    let first = ok(&args);
    let csv1 = std::fs::read(out_dir.join("curve_shapley.csv")).unwrap();
    let json1 = std::fs::read(out_dir.join("curve_shapley.json")).unwrap();
    let second = ok(&args);
    assert_eq!(first, second);
    assert_eq!(csv1, std::fs::read(out_dir.join("curve_shapley.csv")).unwrap());
    assert_eq!(json1, std::fs::read(out_dir.join("curve_shapley.json")).unwrap());
    assert!(out_dir.join("curve_loo.csv").exists());

    let summary: Value = serde_json::from_str(&first).unwrap();
    let sv = &summary[0];
    assert_eq!(sv["label"], "shapley");
    let utilities: Vec<f64> = sv["points"].as_array().unwrap().iter().map(|p| p["utility"].as_f64().unwrap()).collect();
    assert_eq!(utilities, vec![1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
    assert_eq!(sv["best_prefix"]["k"], 1);
    assert_eq!(sv["best_prefix"]["utility"], 1.0);
    let csv = String::from_utf8(csv1).unwrap();
    assert!(csv.starts_with("k,added_prompt_id,utility\n1,p0,1.0\n"));
}

#[test]
fn curve_rejects_values_for_another_game() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_adversarial_run(dir.path());
    let values = dir.path().join("values.json");
    let result = ShapleyResult {
        method: Method::Exact,
        values: vec![0.0; 2],
        stderr: vec![0.0; 2],
        samples: 0,
        seed: None,
        u_full: 0.0,
        u_empty: 0.0,
    };
    formats::write_string(&values, &formats::to_json_pretty(&ValuesDoc::new(&result, &common::ids("q", 2)))).unwrap();
    let out = common::run_bin(&["curve", "--config", path_str(&cfg), "--values", path_str(&values)], &[]);
    assert_eq!(out.status.code(), Some(5));
    assert_eq!(common::stderr_json(&out)["error"], "input");
}

fn write_linear_problem(dir: &Path, n: usize, d: usize) -> (std::path::PathBuf, std::path::PathBuf, Vec<f64>) {
    let mut r = rng::stream_rng(5, 0);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng::unit_f64(&mut r) * 2.0 - 1.0).collect()).collect();
    let w: Vec<f64> = (0..d).map(|j| 0.3 - 0.1 * j as f64).collect();
    let y: Vec<f64> = rows.iter().map(|x| 0.05 + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()).collect();
    let ids = common::ids("p", n);
    let emb = dir.join("emb.jsonl");
    formats::write_string(&emb, &formats::embeddings_jsonl(&EmbeddingMatrix::new(ids.clone(), rows).unwrap())).unwrap();
    let result = ShapleyResult {
        method: Method::Exact,
        values: y.clone(),
        stderr: vec![0.0; n],
        samples: 0,
        seed: None,
        u_full: y.iter().sum(),
        u_empty: 0.0,
    };
    let values = dir.join("values.json");
    formats::write_string(&values, &formats::to_json_pretty(&ValuesDoc::new(&result, &ids))).unwrap();
    (emb, values, y)
}

#[test]
fn learn_then_predict_interpolates_noiseless_linear_values() {
    let dir = tempfile::tempdir().unwrap();
    let (emb, values, y) = write_linear_problem(dir.path(), 40, 3);
    let model = dir.path().join("model.json");
    let report: Value = serde_json::from_str(&ok(&[
        "learn", "--embeddings", path_str(&emb), "--values", path_str(&values), "--model", "linear", "--out", path_str(&model),
    ]))
    .unwrap();
    assert_eq!(report["model"], "linear");
    assert!((report["pearson"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!((report["n_train"].as_u64(), report["n_test"].as_u64()), (Some(32), Some(8)));
    assert_eq!(report["residuals"].as_array().unwrap().len(), 8);
    assert!(report["residuals"][0].get("true").is_some());

    let manifest = dir.path().join("manifest.jsonl");
    std::fs::write(&manifest, common::manifest_jsonl(&common::manifest(40))).unwrap();
    let preds: Vec<Value> = serde_json::from_str(&ok(&[
        "predict", "--model", path_str(&model), "--manifest", path_str(&manifest), "--embeddings", path_str(&emb),
    ]))
    .unwrap();
    assert_eq!(preds.len(), 40);
    for (p, truth) in preds.iter().zip(&y) {
        assert!((p["predicted_value"].as_f64().unwrap() - truth).abs() < 1e-6);
    }
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(doc["schema"], formats::MODEL_SCHEMA);
}

#[test]
fn learn_supports_every_regressor() {
    let dir = tempfile::tempdir().unwrap();
    let (emb, values, _) = write_linear_problem(dir.path(), 30, 2);
    for kind in ["linear", "ridge", "gp"] {
        let model = dir.path().join(format!("{kind}.json"));
        let report = dir.path().join(format!("{kind}_report.json"));
        ok(&["learn", "--embeddings", path_str(&emb), "--values", path_str(&values), "--model", kind, "--out", path_str(&model), "--report", path_str(&report)]);
        let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
        assert!(r["pearson"].as_f64().unwrap() > 0.9, "{kind}: {r}");
    }
}

#[test]
fn verify_subcommands_emit_reports() {
    let lemma: Value = serde_json::from_str(&ok(&["verify", "lemma1", "--max-n", "20"])).unwrap();
    assert_eq!(lemma["passed"], true);
    assert_eq!(lemma["cases"], 190);
    let t1: Value = serde_json::from_str(&ok(&["verify", "theorem1", "--trials", "5"])).unwrap();
    assert_eq!(t1["passed"], true);
    assert_eq!(t1["runs"].as_array().unwrap().len(), 2);
    let beta: Value = serde_json::from_str(&ok(&["verify", "beta-bounds", "--alpha", "2", "--beta", "2", "--epsilon", "0.1"])).unwrap();
    assert!((beta["rows"][0]["exact"].as_f64().unwrap() - 0.296).abs() < 1e-12);
    assert_eq!(beta["alpha"], 2.0);
}

#[test]
fn simulate_is_reproducible() {
    let args = ["simulate", "--alpha", "50", "--beta", "50", "--n-classifiers", "10", "--delta", "0.5", "--trials", "3", "--instances", "2000", "--seed", "4"];
    let a = ok(&args);
    assert_eq!(a, ok(&args));
    let r: Value = serde_json::from_str(&a).unwrap();
    assert_eq!(r["exceed_count"], 0);
    assert_eq!(r["trials"].as_array().unwrap().len(), 3);
}

#[test]
fn cache_inspect_and_compact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_adversarial_run(dir.path());
    ok(&["value", "--config", path_str(&cfg)]);
    let cache = dir.path().join("utility_cache.jsonl");
    let inspect: Value = serde_json::from_str(&ok(&["cache", "inspect", path_str(&cache)])).unwrap();
    assert_eq!(inspect["kind"], "utility");
    assert_eq!(inspect["entries"], 63);
    let compact: Value = serde_json::from_str(&ok(&["cache", "compact", path_str(&cache)])).unwrap();
    assert_eq!(compact["compacted"], true);
    // Warm-cache rerun gives byte-identical values.
    let a = ok(&["value", "--config", path_str(&cfg)]);
    assert_eq!(a, ok(&["value", "--config", path_str(&cfg)]));
}

#[test]
fn help_documents_exit_codes() {
    let help = ok(&["--help"]);
    for needle in ["Exit codes", "credential", "transport", "value", "curve", "simulate"] {
        assert!(help.contains(needle), "missing {needle}");
    }
}

#[test]
fn failures_have_distinct_exit_codes_and_json() {
    let out = common::run_bin(&["frobnicate"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(common::stderr_json(&out)["error"], "usage");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"schema_version\": 1}").unwrap();
    let out = common::run_bin(&["value", "--config", path_str(&bad)], &[]);
    assert_eq!(out.status.code(), Some(3));
    let doc = common::stderr_json(&out);
    assert_eq!((doc["error"].as_str(), doc["exit_code"].as_u64()), (Some("config"), Some(3)));

    let cfg = common::write_adversarial_run(dir.path());
    std::fs::write(dir.path().join("matrix.csv"), "prompt_id,x0\np0,zebra\n").unwrap();
    let out = common::run_bin(&["value", "--config", path_str(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(5));

    let out = common::run_bin(&["cache", "inspect", path_str(&dir.path().join("missing.jsonl"))], &[]);
    assert_eq!(out.status.code(), Some(8));

    let out = common::run_bin(&["simulate", "--alpha", "-1", "--beta", "1", "--n-classifiers", "2", "--delta", "0.1"], &[]);
    assert_eq!(out.status.code(), Some(6));
}

fn live_config(dir: &Path, url: &str) -> std::path::PathBuf {
    std::fs::write(dir.join("manifest.jsonl"), common::manifest_jsonl(&common::manifest(3))).unwrap();
    std::fs::write(dir.join("questions.jsonl"), "{\"id\":\"q0\",\"question\":\"1+1?\",\"answer\":\"2\"}\n").unwrap();
    let cfg = serde_json::json!({
        "schema_version": 1,
        "task": "numeric",
        "utility": {"mode": "live-augmentation"},
        "paths": {"manifest": "manifest.jsonl", "questions": "questions.jsonl", "response_cache": "responses.jsonl"},
        "api": {"base_url": url, "model": "stub", "backoff_base_ms": 1, "max_attempts": 2}
    });
    let path = dir.join("live.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

#[test]
fn live_mode_needs_the_credential() {
    let dir = tempfile::tempdir().unwrap();
    let server = promptshap::stub::StubServer::answering(|_| "2".into());
    let cfg = live_config(dir.path(), server.url());
    let out = common::run_bin(&["value", "--config", path_str(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(common::stderr_json(&out)["error"], "credential");
    assert_eq!(server.hits(), 0);

    let out = common::run_bin(&["value", "--config", path_str(&cfg)], &[("PROMPTSHAP_API_KEY", "k")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!((doc["u_full"].as_f64(), doc["u_empty"].as_f64()), (Some(1.0), Some(1.0)));
    assert_eq!(server.hits(), 8);
}

#[test]
fn live_transport_failures_exit_with_transport_code() {
    let dir = tempfile::tempdir().unwrap();
    let server = promptshap::stub::StubServer::start(4, |_| promptshap::stub::StubReply::Raw(503, "down".into()));
    let cfg = live_config(dir.path(), server.url());
    let out = common::run_bin(&["value", "--config", path_str(&cfg)], &[("PROMPTSHAP_API_KEY", "k")]);
    assert_eq!(out.status.code(), Some(7));
    let doc = common::stderr_json(&out);
    assert_eq!(doc["status"], 503);
}

#[test]
fn mode_conflicts_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_adversarial_run(dir.path());
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    std::fs::write(dir.path().join("q.jsonl"), "{\"id\":\"a\",\"question\":\"q\",\"answer\":\"1\"}\n").unwrap();
    v["paths"]["questions"] = "q.jsonl".into();
    std::fs::write(&cfg, v.to_string()).unwrap();
    let out = common::run_bin(&["value", "--config", path_str(&cfg)], &[]);
    assert_eq!(out.status.code(), Some(3));
    v["paths"].as_object_mut().unwrap().remove("questions");
    v["schema_version"] = 2.into();
    std::fs::write(&cfg, v.to_string()).unwrap();
    assert_eq!(common::run_bin(&["value", "--config", path_str(&cfg)], &[]).status.code(), Some(3));
}
