use std::path::Path;
use std::process::{Command, Output};

use mailtriage_core::eval::synth_corpus;
use serde_json::Value;

fn mailtriage(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mailtriage"))
        .args(args)
        .env_remove("MAILTRIAGE_STORE")
        .output()
        .unwrap()
}

fn ok_json(args: &[&str]) -> Value {
    let out = mailtriage(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_line(out: &Output) -> Value {
    let stderr = String::from_utf8(out.stderr.clone()).unwrap();
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

fn synth_store(dir: &Path, preset: &str, seed: &str) -> String {
    let store = dir.join("store");
    let s = store.to_str().unwrap().to_string();
    ok_json(&["synth", "--preset", preset, "--seed", seed, "--out", &s]);
    s
}

#[test]
fn usage_and_runtime_errors_use_distinct_exit_codes() {
    let out = mailtriage(&["stats", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let out = mailtriage(&["extract", "--file", "/definitely/not/here.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_line(&out)["error"], "usage");
    let out = mailtriage(&["train", "--family", "ripper", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    let out = mailtriage(&["stats", "--store", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_line(&out);
    assert_eq!(err["error"], "store");
    assert!(err["message"].as_str().unwrap().contains("empty"));
}

#[test]
fn heuristics_without_a_question_fall_back() {
    let v = ok_json(&["extract", "--mode", "heuristics", "--text", "Mein Modem blinkt seit gestern rot. Ich habe es neu gestartet."]);
    assert_eq!(v["fallback_used"], true);
    assert_eq!(v["mode"], "heuristics");
    assert!(!v["items"].as_array().unwrap().is_empty());
    let v = ok_json(&["extract", "--mode", "morphana", "--text", "Mein Modem funktioniert nicht."]);
    assert_eq!(v["fallback_used"], false);
}

#[test]
fn train_then_predict_recovers_a_training_document() {
    let dir = tempfile::tempdir().unwrap();
    let store = synth_store(dir.path(), "small", "4");
    let stats = ok_json(&["stats", "--store", &store]);
    assert_eq!(stats["learnable"].as_array().unwrap().len(), 5);

    let model = dir.path().join("knn.json");
    let m = model.to_str().unwrap();
    let t = ok_json(&["train", "--store", &store, "--family", "knn", "--param", "k=1", "--out", m]);
    assert_eq!(t["categories"], 5);

    let corpus = synth_corpus("small", 4).unwrap();
    for doc in corpus.documents.iter().filter(|d| d.category_id.is_some()).step_by(17) {
        let v = ok_json(&["predict", "--model", m, "--json", "--text", &doc.text]);
        assert_eq!(v[0]["category"], Value::from(doc.category_id.clone().unwrap()));
        assert_eq!(v.as_array().unwrap().len(), 5);
    }
    let out = mailtriage(&["predict", "--model", m, "--text", &corpus.documents[0].text]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().next().unwrap().starts_with("1\t"));

    // same seed and inputs, same bytes
    let again = dir.path().join("knn2.json");
    ok_json(&["train", "--store", &store, "--family", "knn", "--param", "k=1", "--out", again.to_str().unwrap()]);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn evaluate_writes_identical_reports_for_a_fixed_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    let mut tables = Vec::new();
    for i in 0..2 {
        let out = dir.path().join(format!("r{i}.json"));
        let o = mailtriage(&[
            "evaluate", "--preset", "small", "--seed", "7", "--folds", "5", "--families", "svm,nb", "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        tables.push(o.stdout);
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    assert_eq!(tables[0], tables[1]);
    let report: Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(report["format"], "mailtriage-eval");
    assert_eq!(report["cells"].as_array().unwrap().len(), 6);
    let table = String::from_utf8(tables[0].clone()).unwrap();
    assert!(table.contains("overall:"));

    let csv = dir.path().join("r.csv");
    let o = mailtriage(&[
        "evaluate", "--preset", "small", "--folds", "3", "--modes", "combined", "--families", "knn", "--param",
        "knn.k=3", "--format", "csv", "--out", csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    // one cell plus the majority baseline
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 2);
    let o = mailtriage(&["evaluate", "--preset", "small", "--families", "knn", "--param", "svm.lambda=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ingest_csv_and_config_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("s");
    let cats = dir.path().join("cats.jsonl");
    std::fs::write(
        &cats,
        "{\"id\":\"a\",\"name\":\"A\",\"answer_template\":\"ta\"}\n{\"id\":\"b\",\"name\":\"B\",\"answer_template\":\"tb\"}\n",
    )
    .unwrap();
    let mut csv = String::from("id,sender,received_at,text,category\n");
    for i in 0..6 {
        let (cat, word) = if i % 2 == 0 { ("a", "Modem") } else { ("b", "Rechnung") };
        csv.push_str(&format!("d{i},s@x,2001-01-0{}T00:00:00Z,Mein {word} ist kaputt {i},{cat}\n", i + 1));
    }
    csv.push_str("d9,s@x,2001-01-09T00:00:00Z,Ohne Kategorie,zzz\n");
    let file = dir.path().join("mails.csv");
    std::fs::write(&file, csv).unwrap();
    let r = ok_json(&[
        "ingest",
        file.to_str().unwrap(),
        "--categories",
        cats.to_str().unwrap(),
        "--store",
        store.to_str().unwrap(),
    ]);
    assert_eq!(r["accepted"], 6);
    assert_eq!(r["errors"].as_array().unwrap().len(), 1);

    let config = dir.path().join("triage.toml");
    std::fs::write(&config, "store = \"s\"\nmin_docs = 3\n").unwrap();
    let cfg = config.to_str().unwrap();
    let stats = ok_json(&["stats", "--config", cfg]);
    assert_eq!(stats["total_docs"], 6);
    assert_eq!(stats["learnable"].as_array().unwrap().len(), 2);
    let stats = ok_json(&["stats", "--config", cfg, "--min-docs", "4"]);
    assert_eq!(stats["learnable"].as_array().unwrap().len(), 0);
}

#[test]
fn offline_relearn_bumps_the_saved_version() {
    let dir = tempfile::tempdir().unwrap();
    let store = synth_store(dir.path(), "small", "5");
    let model = dir.path().join("m.json");
    let m = model.to_str().unwrap();
    let a = ok_json(&["relearn", "--store", &store, "--model", m, "--family", "nb"]);
    assert_eq!(a["version"], 1);
    assert_eq!(a["previous_version"], Value::Null);
    let b = ok_json(&["relearn", "--store", &store, "--model", m, "--family", "svm"]);
    assert_eq!(b["version"], 2);
    assert_eq!(b["previous_version"], 1);
    let v = ok_json(&["predict", "--model", m, "--json", "--text", "Hallo, wie geht das?"]);
    assert_eq!(v.as_array().unwrap().len(), 5);
}
