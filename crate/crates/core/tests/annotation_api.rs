//! The ranking service over HTTP.

use std::collections::BTreeMap;

use reqwest::StatusCode;
use serde_json::{json, Value};

use portal_synth::annotation::{create_tasks, router, AnnotationStore, AppState, RankingTask};
use portal_synth::corpus::{Corpus, Message, PromptRecord};

const SYSTEMS: [&str; 3] = ["zeroshot-alpha", "zeroshot-beta", "grounded-gamma"];

fn tasks() -> Vec<RankingTask> {
    let prompts: Vec<PromptRecord> = (0..20)
        .map(|i| PromptRecord::new(format!("p{i}"), "", format!("Prompt number {i}")).unwrap())
        .collect();
    let systems: BTreeMap<String, Corpus> = SYSTEMS
        .iter()
        .map(|s| {
            let msgs = (0..20)
                .map(|i| Message::new(format!("p{i}"), format!("Hi Dr, message {i} here."), *s).unwrap())
                .collect();
            (s.to_string(), Corpus::new(*s, msgs).unwrap())
        })
        .collect();
    create_tasks(&prompts, &systems, 10, 5).unwrap()
}

async fn start(store: AnnotationStore, ui: Option<std::path::PathBuf>) -> String {
    let app = router(AppState::new(store, 11), ui);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    format!("http://{addr}")
}

fn assert_blind(body: &str) {
    for s in SYSTEMS {
        assert!(!body.contains(s), "response leaks {s}: {body}");
    }
    assert!(!body.contains("blinding"));
}

#[tokio::test]
async fn tasks_are_blinded_and_submissions_flow_to_summary() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("subs.jsonl");
    let tasks = tasks();
    let base = start(AnnotationStore::open(tasks.clone(), &log).unwrap(), None).await;
    let http = reqwest::Client::new();

    let resp = http.get(format!("{base}/api/summary")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::CONFLICT);
    let body: Value = resp.json().await.unwrap();
    assert!(body["error"].is_string());

    let resp = http.get(format!("{base}/api/tasks")).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::BAD_REQUEST);

    let text = http
        .get(format!("{base}/api/tasks?annotator=ann1"))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert_blind(&text);
    let views: Vec<Value> = serde_json::from_str(&text).unwrap();
    assert_eq!(views.len(), 10);
    assert!(views.iter().all(|v| v["submitted"] == json!(false)));

    // rank the first three tasks; label A is always best
    for v in &views[..3] {
        let resp = http
            .post(format!("{base}/api/submissions"))
            .json(&json!({
                "task_id": v["task_id"],
                "annotator_id": "ann1",
                "ranks": { "A": 1, "B": 2, "C": 3 },
            }))
            .send()
            .await
            .unwrap();
        assert_eq!(resp.status(), StatusCode::CREATED);
        assert_blind(&resp.text().await.unwrap());
    }

    let views: Vec<Value> = http
        .get(format!("{base}/api/tasks?annotator=ann1"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(views.iter().filter(|v| v["submitted"] == json!(true)).count(), 3);

    let summary: Value = http
        .get(format!("{base}/api/summary"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(summary["submissions"], json!(3));
    // oracle: un-blind label A of each submitted task by hand
    let by_id: BTreeMap<&str, &RankingTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut expected: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for v in &views[..3] {
        let t = by_id[v["task_id"].as_str().unwrap()];
        for (label, rank) in [("A", 1), ("B", 2), ("C", 3)] {
            let e = expected.entry(t.blinding[label].as_str()).or_default();
            e.0 += rank;
            e.1 += 1;
        }
    }
    for (system, (sum, n)) in expected {
        assert_eq!(summary["systems"][system]["mean_rank"], json!(sum as f64 / n as f64));
    }
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);
}

#[tokio::test]
async fn invalid_submissions_are_rejected_without_naming_systems() {
    let tasks = tasks();
    let id = tasks[0].task_id.clone();
    let base = start(AnnotationStore::in_memory(tasks), None).await;
    let http = reqwest::Client::new();
    let post = |body: Value| {
        let http = http.clone();
        let url = format!("{base}/api/submissions");
        async move { http.post(url).json(&body).send().await.unwrap() }
    };

    let bad = [
        json!({ "task_id": id, "annotator_id": "a", "ranks": { "A": 1, "B": 1, "C": 3 } }),
        json!({ "task_id": id, "annotator_id": "a", "ranks": { "A": 1, "B": 2 } }),
        json!({ "task_id": id, "annotator_id": "a", "ranks": { "A": 1, "B": 2, "Z": 3 } }),
        json!({ "task_id": id, "annotator_id": "a", "ranks": { "A": 0, "B": 1, "C": 2 } }),
        json!({ "task_id": id, "annotator_id": "  ", "ranks": { "A": 1, "B": 2, "C": 3 } }),
    ];
    for body in bad {
        let resp = post(body).await;
        assert_eq!(resp.status(), StatusCode::UNPROCESSABLE_ENTITY);
        let text = resp.text().await.unwrap();
        assert_blind(&text);
        assert!(serde_json::from_str::<Value>(&text).unwrap()["error"].is_string());
    }
    let resp = post(json!({ "task_id": "task-999", "annotator_id": "a", "ranks": { "A": 1 } })).await;
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn resubmission_replaces_earlier_ranking() {
    let tasks = tasks();
    let id = tasks[0].task_id.clone();
    let a_system = tasks[0].blinding["A"].clone();
    let base = start(AnnotationStore::in_memory(tasks), None).await;
    let http = reqwest::Client::new();
    for (rank_a, replaced) in [(1, false), (3, true)] {
        let resp: Value = http
            .post(format!("{base}/api/submissions"))
            .json(&json!({
                "task_id": id,
                "annotator_id": "ann",
                "ranks": { "A": rank_a, "B": 2, "C": 4 - rank_a },
            }))
            .send()
            .await
            .unwrap()
            .json()
            .await
            .unwrap();
        assert_eq!(resp["replaced"], json!(replaced));
    }
    let summary: Value = http
        .get(format!("{base}/api/summary"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(summary["submissions"], json!(1));
    assert_eq!(summary["systems"][a_system.as_str()]["mean_rank"], json!(3.0));
}

#[tokio::test]
async fn serves_ui_bundle() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>ranker</html>").unwrap();
    let base = start(AnnotationStore::in_memory(tasks()), Some(dir.path().to_path_buf())).await;
    let body = reqwest::get(format!("{base}/index.html"))
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert_eq!(body, "<html>ranker</html>");
    let resp = reqwest::get(format!("{base}/api/tasks?annotator=x")).await.unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
}

#[tokio::test]
async fn concurrent_annotators_are_all_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("subs.jsonl");
    let tasks = tasks();
    let base = start(AnnotationStore::open(tasks.clone(), &log).unwrap(), None).await;
    let http = reqwest::Client::new();
    let mut handles = Vec::new();
    for a in 0..8 {
        for t in &tasks {
            let http = http.clone();
            let url = format!("{base}/api/submissions");
            let body =
                json!({ "task_id": t.task_id, "annotator_id": format!("ann{a}"), "ranks": { "A": 1, "B": 2, "C": 3 } });
            handles.push(tokio::spawn(async move {
                http.post(url).json(&body).send().await.unwrap().status()
            }));
        }
    }
    for h in handles {
        assert_eq!(h.await.unwrap(), StatusCode::CREATED);
    }
    let store = AnnotationStore::replay(tasks, &log).unwrap();
    assert_eq!(store.summary().unwrap().submissions, 80);
}
