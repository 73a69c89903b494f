use std::sync::Arc;

use chrono::{DateTime, TimeZone, Utc};
use mailtriage_core::corpus::{Category, CategoryRegistry, CorpusStore, Document};
use mailtriage_core::eval::synth_corpus;
use mailtriage_core::learners::{ClassifierSpec, Family};
use mailtriage_core::pipeline::Classifier;
use mailtriage_core::stp::{Mode, Resources};
use mailtriage_service::api::{CategoriesResponse, CategoryStatus, ClassifyResponse, HistoryResponse};
use mailtriage_service::{build_state, router, AppState, Config};
use serde_json::{json, Value};

struct Server {
    base: String,
    client: reqwest::Client,
    state: Arc<AppState>,
}

impl Server {
    async fn start(state: AppState) -> Self {
        let state = Arc::new(state);
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap();
        let app = router(Arc::clone(&state));
        tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
        Self {
            base: format!("http://{addr}"),
            client: reqwest::Client::new(),
            state,
        }
    }

    async fn get(&self, path: &str) -> (u16, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }

    async fn post(&self, path: &str, body: Value) -> (u16, Value) {
        let r = self.client.post(format!("{}{path}", self.base)).json(&body).send().await.unwrap();
        (r.status().as_u16(), r.json().await.unwrap())
    }
}

fn small_state(config: Config) -> AppState {
    let store = synth_corpus("small", 1).unwrap().store();
    AppState::new(config, store, Resources::builtin(), None)
}

fn at(secs: i64) -> DateTime<Utc> {
    Utc.timestamp_opt(1_000_000_000 + secs, 0).unwrap()
}

#[tokio::test]
async fn without_a_model_classify_is_unavailable() {
    let s = Server::start(small_state(Config::default())).await;
    let (code, body) = s.post("/classify", json!({"text": "Hallo"})).await;
    assert_eq!(code, 503);
    assert_eq!(body["error"]["code"], "no_model");
    assert_eq!(s.get("/model").await.0, 503);
    let (code, health) = s.get("/health").await;
    assert_eq!(code, 200);
    assert_eq!(health["model_loaded"], false);
}

#[tokio::test]
async fn classify_returns_five_ranked_proposals() {
    let s = Server::start(small_state(Config::default())).await;
    let (code, out) = s.post("/admin/relearn", json!({})).await;
    assert_eq!(code, 200, "{out}");
    assert_eq!(out["version"], 1);
    assert_eq!(out["n_categories"], 5);

    let text = synth_corpus("small", 1).unwrap().documents[0].text.clone();
    let (code, body) = s.post("/classify", json!({ "text": text })).await;
    assert_eq!(code, 200);
    let whole: ClassifyResponse = serde_json::from_value(body).unwrap();
    assert_eq!(whole.model_version, 1);
    assert_eq!(whole.proposals.len(), 5);
    for (i, p) in whole.proposals.iter().enumerate() {
        assert_eq!(p.rank, i + 1);
        assert!(!p.answer_template.is_empty());
    }
    assert!(whole.proposals.windows(2).all(|w| w[0].score >= w[1].score));

    let n = text.chars().count();
    let (_, body) = s.post("/classify", json!({ "text": text, "span": {"start": 0, "end": n} })).await;
    let spanned: ClassifyResponse = serde_json::from_value(body).unwrap();
    assert_eq!(spanned.proposals, whole.proposals);

    assert_eq!(s.post("/classify", json!({"text": "  \n "})).await.0, 400);
    assert_eq!(s.post("/classify", json!({"text": "abc", "span": {"start": 2, "end": 9}})).await.0, 400);
    assert_eq!(s.post("/classify", json!({"txt": "abc"})).await.0, 400);
    let (code, model) = s.get("/model").await;
    assert_eq!(code, 200);
    assert_eq!(model["version"], 1);
    assert_eq!(model["fingerprint"], whole.model_fingerprint);
}

#[tokio::test]
async fn span_classifies_only_the_marked_question() {
    let s = Server::start(small_state(Config::default())).await;
    s.post("/admin/relearn", json!({"family": "knn", "params": {"k": "1"}})).await;
    let corpus = synth_corpus("small", 1).unwrap();
    let a = &corpus.documents[0];
    let b = corpus.documents.iter().find(|d| d.category_id != a.category_id).unwrap();
    let joined = format!("{}\n\n{}", a.text, b.text);
    let start = a.text.chars().count() + 2;
    let end = joined.chars().count();
    let (_, alone) = s.post("/classify", json!({ "text": b.text })).await;
    let (_, spanned) = s.post("/classify", json!({ "text": joined, "span": {"start": start, "end": end} })).await;
    assert_eq!(alone["proposals"], spanned["proposals"]);
    assert_eq!(spanned["proposals"][0]["category_id"], json!(b.category_id));
}

#[tokio::test]
async fn classification_changes_no_persisted_state() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus("small", 2).unwrap();
    std::fs::write(dir.path().join("categories.jsonl"), corpus.categories_jsonl()).unwrap();
    std::fs::write(dir.path().join("documents.jsonl"), corpus.documents_jsonl()).unwrap();
    let config = Config {
        store: dir.path().to_path_buf(),
        model: Some(dir.path().join("model.json")),
        ..Config::default()
    };
    let s = Server::start(build_state(config.clone()).unwrap()).await;
    s.post("/admin/relearn", json!({})).await;
    let listing = || {
        let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| (p.display().to_string(), std::fs::read(&p).unwrap()))
            .collect();
        v.sort();
        v
    };
    let before = listing();
    for d in corpus.documents.iter().take(40) {
        assert_eq!(s.post("/classify", json!({ "text": d.text })).await.0, 200);
    }
    assert_eq!(listing(), before);

    // the saved bundle comes back with its version on restart
    let restarted = build_state(config).unwrap();
    let slot = restarted.model().unwrap();
    assert_eq!(slot.version, 1);
    assert_eq!(slot.fingerprint, s.state.model().unwrap().fingerprint);
}

#[tokio::test]
async fn answers_feed_history_with_elapsed_time() {
    let mut registry = CategoryRegistry::new();
    for (id, name) in [("pw", "Passwort vergessen"), ("bill", "Rechnung")] {
        registry
            .upsert(Category {
                id: id.into(),
                name: name.into(),
                answer_template: format!("Antwort zu {name}"),
                active: true,
            })
            .unwrap();
    }
    let mut store = CorpusStore::in_memory(registry);
    store
        .insert_all([(1, Document::new("m1", "kunde@example.org", at(0), "Ich habe mein Passwort vergessen.", None))])
        .unwrap();
    let state = AppState::new(Config::default(), store, Resources::builtin(), None).with_clock(Arc::new(|| at(600)));
    let s = Server::start(state).await;

    let (code, _) = s.post("/answers", json!({"doc_id": "m1", "category_id": "nope"})).await;
    assert_eq!(code, 404);
    let (code, _) = s.post("/answers", json!({"doc_id": "zz", "category_id": "pw"})).await;
    assert_eq!(code, 404);
    assert_eq!(s.post("/answers", json!({"category_id": "pw"})).await.0, 400);

    let (code, out) = s
        .post("/answers", json!({"doc_id": "m1", "category_id": "pw", "edited_text": "Sehr geehrte Kundin, ..."}))
        .await;
    assert_eq!(code, 201, "{out}");
    assert_eq!(out["elapsed_seconds"], 600);
    let record = out["record_id"].as_str().unwrap().to_string();
    let inline = "Wo finde ich meine Rechnung?";
    let (code, _) = s
        .post(
            "/answers",
            json!({"text": inline, "sender": "kunde@example.org", "received_at": at(300), "category_id": "bill"}),
        )
        .await;
    assert_eq!(code, 201);

    let (_, body) = s.get("/history/kunde@example.org").await;
    let h: HistoryResponse = serde_json::from_value(body).unwrap();
    let order: Vec<DateTime<Utc>> = h.entries.iter().map(|e| e.received_at).collect();
    assert!(order.windows(2).all(|w| w[0] >= w[1]));
    assert_eq!(h.entries[0].category_name.as_deref(), Some("Rechnung"));
    assert_eq!(h.entries[0].elapsed_seconds, Some(300));
    assert_eq!(h.entries[0].text, inline);
    let confirmed = h.entries.iter().find(|e| e.doc_id == record).unwrap();
    assert_eq!(confirmed.text, "Ich habe mein Passwort vergessen.");
    assert_eq!(confirmed.source_doc.as_deref(), Some("m1"));
    assert_eq!(confirmed.edited_text.as_deref(), Some("Sehr geehrte Kundin, ..."));
    assert_eq!(confirmed.elapsed_seconds, Some(600));
    let original = h.entries.iter().find(|e| e.doc_id == "m1").unwrap();
    assert_eq!(original.elapsed_seconds, None);

    let (code, body) = s.get("/history/nobody").await;
    assert_eq!(code, 200);
    assert_eq!(body["entries"], json!([]));
}

#[tokio::test]
async fn new_category_becomes_learnable_after_enough_answers() {
    let config = Config { min_docs: 30, ..Config::default() };
    let s = Server::start(small_state(config)).await;
    let (code, _) = s
        .post("/categories", json!({"id": "cat-new", "name": "Neu", "answer_template": "Neue Antwort"}))
        .await;
    assert_eq!(code, 200);
    assert_eq!(s.post("/categories", json!({"id": "x", "name": "x", "answer_template": " "})).await.0, 400);

    let status = |body: Value| -> CategoryStatus {
        let r: CategoriesResponse = serde_json::from_value(body).unwrap();
        r.categories.into_iter().find(|c| c.id == "cat-new").unwrap().status
    };
    assert_eq!(status(s.get("/categories").await.1), CategoryStatus::NotYetLearnable);

    s.post("/admin/relearn", json!({})).await;
    let text = "Wie kann ich den Zauberwürfel im Menü aktivieren?";
    for i in 0..30 {
        assert_eq!(s.post("/answers", json!({"text": format!("{text} Nummer {i}"), "category_id": "cat-new"})).await.0, 201);
    }
    assert_eq!(status(s.get("/categories").await.1), CategoryStatus::Learnable);
    // answers alone do not retrain
    let (_, model) = s.get("/model").await;
    assert_eq!(model["version"], 1);
    assert!(!model["classes"].as_array().unwrap().contains(&json!("cat-new")));

    let (code, out) = s.post("/admin/relearn", json!({})).await;
    assert_eq!(code, 200);
    assert_eq!(out["version"], 2);
    assert_eq!(out["n_categories"], 6);
    let (_, model) = s.get("/model").await;
    assert!(model["classes"].as_array().unwrap().contains(&json!("cat-new")));
}

#[tokio::test]
async fn failed_relearn_keeps_the_active_model() {
    let s = Server::start(small_state(Config::default())).await;
    s.post("/admin/relearn", json!({})).await;
    let (code, body) = s.post("/admin/relearn", json!({"min_docs": 1000})).await;
    assert_eq!(code, 422);
    assert_eq!(body["error"]["code"], "not_trainable");
    let (code, body) = s.post("/admin/relearn", json!({"family": "knn", "params": {"k": "0"}})).await;
    assert_eq!(code, 400, "{body}");
    assert_eq!(s.post("/admin/relearn", json!({"family": "ripper"})).await.0, 400);
    let (_, model) = s.get("/model").await;
    assert_eq!(model["version"], 1);
}

const REINSTALL_MAIL: &str = "Wie mache ich zum mein Programm total deinstalieren, und wieder neu \
instalierem, mit, wen Sie mir senden Version 4.0 ??????????????";

/// A registry where one category's mails talk about removing and reinstalling
/// the software, next to unrelated request types.
fn reinstall_fixture() -> CorpusStore {
    let topics: [(&str, &str, [&str; 3]); 5] = [
        ("reinstall", "Delete & Reinstall 4.0", ["Programm deinstalieren", "neu instalierem", "Version 4.0 wieder"]),
        ("password", "Passwort vergessen", ["Passwort vergessen", "Kennwort geht nicht", "Zugang gesperrt"]),
        ("invoice", "Rechnung erklären", ["Rechnung zu hoch", "Abbuchung Konto", "Gebühren Monat"]),
        ("modem", "Modem einrichten", ["Modem verbindet nicht", "Einwahl Fehler", "Leitung besetzt"]),
        ("cancel", "Kündigung", ["Vertrag kündigen", "Mitgliedschaft beenden", "Kündigung bestätigen"]),
    ];
    let registry = CategoryRegistry::from_categories(topics.iter().map(|(id, name, _)| Category {
        id: id.to_string(),
        name: name.to_string(),
        answer_template: format!("Zum Thema {name}: ..."),
        active: true,
    }))
    .unwrap();
    let mut store = CorpusStore::in_memory(registry);
    let mut rows = Vec::new();
    for (t, (id, _, phrases)) in topics.iter().enumerate() {
        for i in 0..12 {
            let text = format!(
                "Hallo, {} und {}. Was soll ich tun? Gruss {}",
                phrases[i % 3],
                phrases[(i + 1) % 3],
                i
            );
            let n = rows.len() + 1;
            rows.push((n, Document::new(format!("f{t}-{i}"), "s", at(n as i64), text, Some(id.to_string()))));
        }
    }
    store.insert_all(rows).unwrap();
    store
}

#[tokio::test]
async fn misspelt_reinstall_mail_gets_the_reinstall_answer() {
    let store = reinstall_fixture();
    let snapshot = store.snapshot(10).unwrap();
    let res = Resources::builtin();
    let spec = ClassifierSpec::new(Family::LinearSvmOvr, 1);
    let oracle = Classifier::train(&snapshot, Mode::Combined, &spec, 100, &res).unwrap();
    let want = oracle.classify(REINSTALL_MAIL, &res).unwrap();

    let config = Config { min_docs: 10, ..Config::default() };
    let s = Server::start(AppState::new(config, store, res, None)).await;
    assert_eq!(s.post("/admin/relearn", json!({})).await.0, 200);
    let (_, body) = s.post("/classify", json!({ "text": REINSTALL_MAIL })).await;
    let got: ClassifyResponse = serde_json::from_value(body).unwrap();
    let cats: Vec<&str> = got.proposals.iter().map(|p| p.category_id.as_str()).collect();
    assert!(cats.contains(&"reinstall"), "{cats:?}");
    assert_eq!(got.proposals[0].name, "Delete & Reinstall 4.0");
    let oracle_top: Vec<(&str, f64)> = want.top(5).iter().map(|r| (r.category.as_str(), r.score)).collect();
    let served: Vec<(&str, f64)> = got.proposals.iter().map(|p| (p.category_id.as_str(), p.score)).collect();
    assert_eq!(served, oracle_top);
}

/// Classify traffic spanning a relearn: each response names exactly one of
/// the two versions and none fail.
#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn relearn_swaps_atomically_under_load() {
    let corpus = synth_corpus("small", 3).unwrap();
    let s = Arc::new(Server::start(AppState::new(Config::default(), corpus.store(), Resources::builtin(), None)).await);
    let (_, first) = s.post("/admin/relearn", json!({})).await;
    let fp1 = first["fingerprint"].as_str().unwrap().to_string();

    let done = Arc::new(std::sync::atomic::AtomicBool::new(false));
    let started = Arc::new(tokio::sync::Barrier::new(129));
    let texts: Arc<Vec<String>> = Arc::new(corpus.documents.iter().map(|d| d.text.clone()).collect());
    let mut tasks = Vec::new();
    for w in 0..128usize {
        let (s, done, started, texts) = (Arc::clone(&s), Arc::clone(&done), Arc::clone(&started), Arc::clone(&texts));
        tasks.push(tokio::spawn(async move {
            let mut seen = Vec::new();
            let mut i = w;
            let mut barrier = Some(started);
            loop {
                let finished = done.load(std::sync::atomic::Ordering::SeqCst);
                let r = s
                    .client
                    .post(format!("{}/classify", s.base))
                    .json(&json!({"text": texts[i % texts.len()]}))
                    .send()
                    .await
                    .expect("request failed");
                assert_eq!(r.status(), 200);
                let body: ClassifyResponse = r.json().await.unwrap();
                seen.push((body.model_version, body.model_fingerprint));
                // every worker is live before the relearn starts
                if let Some(b) = barrier.take() {
                    b.wait().await;
                }
                i += 128;
                if finished {
                    return seen;
                }
            }
        }));
    }
    started.wait().await;
    let (code, second) = s.post("/admin/relearn", json!({"seed": 99, "mode": "morphana"})).await;
    assert_eq!(code, 200);
    let fp2 = second["fingerprint"].as_str().unwrap().to_string();
    assert_ne!(fp1, fp2);
    done.store(true, std::sync::atomic::Ordering::SeqCst);

    let mut total = 0;
    let mut versions = std::collections::BTreeSet::new();
    for t in tasks {
        for (v, fp) in t.await.unwrap() {
            total += 1;
            match v {
                1 => assert_eq!(fp, fp1),
                2 => assert_eq!(fp, fp2),
                other => panic!("version {other}"),
            }
            versions.insert(v);
        }
    }
    assert!(total >= 256, "{total}");
    assert_eq!(versions.into_iter().collect::<Vec<_>>(), [1, 2]);
}
