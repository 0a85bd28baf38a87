use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use odr_core::domain::read_corpus;
use odr_core::interpret::ExplainOptions;
use odr_service::{prediction_payload, ActiveModel, PredictionPayload};
use serde_json::Value;

fn odr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_odr")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = odr(args);
    assert!(
        out.status.success(),
        "odr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(stderr.trim_end().lines().count(), 1, "{stderr}");
    serde_json::from_str(stderr.trim_end()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, n: usize, seed: &str, jobs: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    ok(&["gen", "--n", &n.to_string(), "--seed", seed, "--jobs", jobs, "--out", s(&out)]);
    out
}

#[test]
fn gen_is_reproducible_and_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = gen(dir.path(), "a.jsonl", 200, "7", "1");
    let b = gen(dir.path(), "b.jsonl", 200, "7", "2");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(read_corpus(&a).unwrap().len(), 200);
    assert!(dir.path().join("a.rules.json").exists());
    let m: Value = serde_json::from_slice(&fs::read(dir.path().join("a.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["command"], "gen");
    assert_eq!(m["seeds"]["seed"], 7);
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
    assert!(m["argv"].as_array().unwrap().iter().any(|v| v == "--n"));
    let c = gen(dir.path(), "c.jsonl", 200, "8", "1");
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn train_explain_and_payload_shape() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen(dir.path(), "corpus.jsonl", 300, "3", "1");
    let model = dir.path().join("m.json");
    let params = r#"{"n_trees": 20}"#;
    ok(&[
        "train", "--model", "gbdt", "--params", params, "--corpus", s(&corpus), "--folds", "2", "--seed", "3", "--out",
        s(&model), "--roc-out", s(&dir.path().join("roc.csv")),
    ]);
    let eval = fs::read_to_string(dir.path().join("m.eval.csv")).unwrap();
    assert!(eval.starts_with("learner,fold,auroc,accuracy,precision,recall,f1,n,positives"));
    assert_eq!(eval.lines().count(), 4);
    assert!(fs::read_to_string(dir.path().join("roc.csv")).unwrap().starts_with("learner,fold,fpr,tpr,threshold"));

    let cases = read_corpus(&corpus).unwrap();
    let id = &cases[5].case_id;
    let out = ok(&["explain", "--model", s(&model), "--corpus", s(&corpus), "--case-id", id]);
    let printed: PredictionPayload = serde_json::from_slice(&out.stdout).unwrap();
    let active = ActiveModel::load(&model).unwrap();
    let direct = prediction_payload(&active, &cases[5], &ExplainOptions::default()).unwrap();
    assert_eq!(printed, direct);
    assert_eq!(printed.model_version, active.version());
    assert_eq!(active.file.metadata.extra["cv_folds"], 2);

    let shap = dir.path().join("shap.csv");
    let imp = dir.path().join("gain.csv");
    ok(&[
        "explain", "--model", s(&model), "--corpus", s(&corpus), "--case-id", id, "--out",
        s(&dir.path().join("e.json")), "--shap-out", s(&shap), "--shap-cases", "5", "--background", "10",
        "--permutations", "20", "--importance-out", s(&imp),
    ]);
    let shap_text = fs::read_to_string(&shap).unwrap();
    assert!(shap_text.starts_with("case_id,feature,value,phi,se"));
    assert_eq!(shap_text.lines().count(), 1 + 5 * active.pipeline.schema.len());
    assert!(fs::read_to_string(&imp).unwrap().starts_with("feature,index,family,gain,split_count"));

    let missing = odr(&["explain", "--model", s(&model), "--corpus", s(&corpus), "--case-id", "nope"]);
    assert_eq!(missing.status.code(), Some(1));
    assert_eq!(error_line(&missing)["error"]["code"], "not_found");
}

#[test]
fn usage_errors_exit_2_with_one_json_line() {
    let unknown = odr(&["gen", "--bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert_eq!(error_line(&unknown)["error"]["code"], "usage");

    let missing = odr(&["train", "--corpus", "/does/not/exist.jsonl", "--out", "/tmp/x.json"]);
    assert_eq!(missing.status.code(), Some(2));
    let line = error_line(&missing);
    assert_eq!(line["error"]["code"], "usage");
    assert!(line["error"]["message"].as_str().unwrap().contains("does not exist"));

    let dir = tempfile::tempdir().unwrap();
    let corpus = gen(dir.path(), "c.jsonl", 50, "1", "1");
    let bad = odr(&["train", "--corpus", s(&corpus), "--out", "/tmp/x.json", "--params", r#"{"nope": 1}"#]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = odr(&["eval", "--corpus", s(&corpus), "--out", "/tmp/x.json", "--models", "svm"]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = odr(&["--jobs", "0", "gen", "--out", "/tmp/x.jsonl"]);
    assert_eq!(bad.status.code(), Some(2));

    fs::write(dir.path().join("broken.jsonl"), "{not json}\n").unwrap();
    let parse = odr(&["analyze-churn", "--corpus", s(&dir.path().join("broken.jsonl")), "--out", "/tmp/x.json"]);
    assert_eq!(parse.status.code(), Some(1));
    assert_eq!(error_line(&parse)["error"]["code"], "parse");

    assert!(odr(&["--help"]).status.success());
}

#[test]
fn analysis_commands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen(dir.path(), "c.jsonl", 400, "2", "1");
    let pol = dir.path().join("pol");
    ok(&["analyze-politeness", "--corpus", s(&corpus), "--out-dir", s(&pol)]);
    let traj = fs::read_to_string(pol.join("trajectories.csv")).unwrap();
    assert!(traj.starts_with("strategy,role,winner,bin,frequency,support,low_support"));
    // 21 strategies x 2 roles x 2 sides x 10 bins
    assert_eq!(traj.lines().count(), 1 + 21 * 2 * 2 * 10);
    assert!(pol.join("correlations.csv").exists());
    assert!(pol.join("manifest.json").exists());

    let churn = dir.path().join("churn.json");
    ok(&["analyze-churn", "--corpus", s(&corpus), "--out", s(&churn)]);
    let report: Value = serde_json::from_slice(&fs::read(&churn).unwrap()).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);

    let err = dir.path().join("errors.json");
    ok(&["error-analysis", "--corpus", s(&corpus), "--learner", "nb", "--folds", "3", "--out", s(&err)]);
    let report: Value = serde_json::from_slice(&fs::read(&err).unwrap()).unwrap();
    assert!(report["accuracy"].as_f64().unwrap() > 0.5);
    assert!(dir.path().join("errors.groups.csv").exists());
}

#[test]
fn eval_search_and_ablate_small() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = gen(dir.path(), "c.jsonl", 300, "4", "1");
    let ev = dir.path().join("eval.json");
    ok(&["eval", "--corpus", s(&corpus), "--models", "majority,nb", "--folds", "2", "--out", s(&ev)]);
    let csv = fs::read_to_string(dir.path().join("eval.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);

    let se = dir.path().join("search.json");
    ok(&["search", "--model", "knn", "--corpus", s(&corpus), "--trials", "3", "--folds", "2", "--out", s(&se)]);
    let report: Value = serde_json::from_slice(&fs::read(&se).unwrap()).unwrap();
    assert_eq!(report["trials"].as_array().unwrap().len(), 3);

    let ab = dir.path().join("ab.json");
    ok(&[
        "ablate", "--model", "gbdt", "--params", r#"{"n_trees": 10}"#, "--corpus", s(&corpus), "--mode", "family",
        "--folds", "2", "--out", s(&ab),
    ]);
    let report: Value = serde_json::from_slice(&fs::read(&ab).unwrap()).unwrap();
    assert_eq!(report[0]["mode"], "feature_family");
    assert_eq!(report[0]["rows"].as_array().unwrap().len(), 11);
}
