// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use cbmw_cli::service::{intervene_one, router, AppState, PatientIntervention};
use cbmw_cli::{run, Cli, Workspace};
use clap::Parser;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn cli(ws: &Path, args: &[&str]) {
    let mut argv = vec!["cbmw", "--workspace", ws.to_str().unwrap()];
    argv.extend_from_slice(args);
    run(&Cli::parse_from(argv)).unwrap();
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    cli(p, &["gen-cohort", "--name", "c", "--n", "80", "--seed", "3"]);
    cli(p, &["preprocess", "--cohort", "c"]);
    cli(p, &["train", "--cohort", "c-prep", "--model", "m", "--mode", "context-aware", "--epochs", "3"]);
    dir
}

fn state(ws: &Path) -> Arc<AppState> {
    AppState::load(&Workspace::new(ws), "m", None).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header(header::CONTENT_TYPE, "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn first_test_patient(s: &AppState) -> String {
    s.cohort.split(cbmw_core::Split::Test).next().unwrap().id.clone()
}

#[tokio::test]
async fn every_endpoint_answers_with_the_schema_hash() {
    let ws = workspace();
    let s = state(ws.path());
    let hash = s.bundle.model.schema_hash.clone();
    let app = router(s.clone());
    let id = first_test_patient(&s);

    cli(ws.path(), &["eval", "--model", "m"]);
    let calls = [
        ("GET", "/patients".to_string(), None),
        ("GET", "/patients?split=test".to_string(), None),
        ("GET", format!("/patients/{id}"), None),
        ("POST", "/predict".to_string(), Some(json!({ "id": id }))),
        ("POST", "/intervene".to_string(), Some(json!({ "patient": id, "edits": [] }))),
        ("GET", "/model/meta".to_string(), None),
        ("GET", "/model/correlations".to_string(), None),
        ("GET", "/reports/latest".to_string(), None),
    ];
    for (method, uri, body) in calls {
        let (status, v) = call(&app, method, &uri, body).await;
        assert_eq!(status, StatusCode::OK, "{method} {uri}: {v}");
        assert_eq!(v["schema_hash"], hash.as_str(), "{method} {uri}");
    }

    let (_, v) = call(&app, "GET", "/patients?split=test", None).await;
    let n_test = s.cohort.split(cbmw_core::Split::Test).count();
    assert_eq!(v["patients"].as_array().unwrap().len(), n_test);
    for p in v["patients"].as_array().unwrap() {
        let (label, y) = (p["label"].as_u64().unwrap(), p["y"].as_u64().unwrap());
        let want = match (label, y) {
            (1, 1) => "TP",
            (1, 0) => "FP",
            (0, 0) => "TN",
            _ => "FN",
        };
        assert_eq!(p["status"], want);
    }

    let (_, meta) = call(&app, "GET", "/model/meta", None).await;
    let (_, corr) = call(&app, "GET", "/model/correlations", None).await;
    let width = s.bundle.model.bottleneck_width();
    assert_eq!(meta["concepts"].as_array().unwrap().len(), width);
    assert_eq!(corr["matrix"].as_array().unwrap().len(), width);
    let (_, latest) = call(&app, "GET", "/reports/latest", None).await;
    assert_eq!(latest["report"]["kind"], "eval");
}

#[tokio::test]
async fn empty_edit_list_is_a_no_op() {
    let ws = workspace();
    let s = state(ws.path());
    let app = router(s.clone());
    for patient in s.cohort.split(cbmw_core::Split::Test).take(5) {
        for mode in ["independent", "correlated"] {
            let (status, v) =
                call(&app, "POST", "/intervene", Some(json!({ "patient": patient.id, "edits": [], "mode": mode }))).await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(v["pre_bottleneck"], v["post_bottleneck"]);
            assert_eq!(v["pre_probability"], v["post_probability"]);
            assert!(v["deltas"].as_array().unwrap().iter().all(|d| d.as_f64() == Some(0.0)));
            assert!(v["clamp_flags"].as_array().unwrap().iter().all(|f| f == false));
        }
    }
}

#[tokio::test]
async fn zero_correlation_model_answers_like_independent() {
    let ws = workspace();
    let loaded = state(ws.path());
    let mut bundle = loaded.bundle.clone();
    let n = bundle.stats.correlation.len();
    bundle.stats.correlation = (0..n).map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect()).collect();
    let s = Arc::new(AppState { bundle, cohort: loaded.cohort.clone(), workspace: loaded.workspace.clone() });
    let app = router(s.clone());
    let id = first_test_patient(&s);
    let edits = json!([
        { "concept": s.bundle.model.concepts[0].name, "source": "custom", "value": 0.9 },
        { "concept": s.bundle.model.concepts[1].name, "source": "ground-truth" }
    ]);
    let (_, ind) = call(&app, "POST", "/intervene", Some(json!({ "patient": id, "edits": edits, "mode": "independent" }))).await;
    let (_, cor) = call(&app, "POST", "/intervene", Some(json!({ "patient": id, "edits": edits, "mode": "correlated" }))).await;
    for key in ["pre_bottleneck", "post_bottleneck", "deltas", "post_probability", "post_label", "clamp_flags"] {
        assert_eq!(ind[key], cor[key], "{key}");
    }
}

#[tokio::test]
async fn dry_run_reports_deltas_without_reprediction() {
    let ws = workspace();
    let s = state(ws.path());
    let app = router(s.clone());
    let id = first_test_patient(&s);
    let name = s.bundle.model.concepts[0].name.clone();
    let body = json!({ "patient": id, "edits": [{ "concept": name, "source": "custom", "value": 1.0 }], "mode": "correlated" });
    let mut dry = body.clone();
    dry["dry_run"] = json!(true);
    let (_, full) = call(&app, "POST", "/intervene", Some(body)).await;
    let (_, preview) = call(&app, "POST", "/intervene", Some(dry)).await;
    assert_eq!(preview["post_bottleneck"], full["post_bottleneck"]);
    assert_eq!(preview["deltas"], full["deltas"]);
    assert!(preview["post_probability"].is_null() && preview["post_label"].is_null());
    assert!(full["post_probability"].is_number());
    assert_eq!(full["post_bottleneck"][0], 1.0);
}

#[tokio::test]
async fn error_contract() {
    let ws = workspace();
    let s = state(ws.path());
    let hash = s.bundle.model.schema_hash.clone();
    let app = router(s.clone());
    let id = first_test_patient(&s);
    let name = s.bundle.model.concepts[0].name.clone();

    let (status, v) = call(&app, "GET", "/patients/unknown", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_record");
    assert_eq!(v["schema_hash"], hash.as_str());
    let (status, _) = call(&app, "POST", "/intervene", Some(json!({ "patient": "unknown", "edits": [] }))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let unprocessable = [
        json!({ "patient": id, "edits": [{ "concept": "nope", "source": "mean" }] }),
        json!({ "patient": id, "edits": [{ "concept": name, "source": "custom", "value": 1.5 }] }),
        json!({ "patient": id, "edits": [{ "concept": name, "source": "custom" }] }),
        json!({ "patient": id, "edits": [{ "concept": name, "source": "mean" }, { "concept": name, "source": "median" }] }),
        json!({ "patient": id, "edits": "all" }),
        json!({ "edits": [] }),
    ];
    for body in unprocessable {
        let (status, v) = call(&app, "POST", "/intervene", Some(body.clone())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}: {v}");
        assert_eq!(v["schema_hash"], hash.as_str());
    }

    let stale = json!({ "patient": id, "edits": [], "schema_hash": "f".repeat(64) });
    let (status, v) = call(&app, "POST", "/intervene", Some(stale)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "hash_mismatch");
    let (status, _) = call(&app, "POST", "/predict", Some(json!({ "id": id, "schema_hash": "0" }))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, _) = call(&app, "POST", "/predict", Some(json!({ "x": [0.5] }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/predict", Some(json!({}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let req = Request::builder().method("POST").uri("/intervene").body(Body::from("{}")).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNSUPPORTED_MEDIA_TYPE);

    let (status, _) = call(&app, "GET", "/reports/latest", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn predict_by_features_matches_predict_by_id() {
    let ws = workspace();
    let s = state(ws.path());
    let app = router(s.clone());
    let record = s.cohort.split(cbmw_core::Split::Test).next().unwrap();
    let x = record.features().unwrap();
    let text = s.bundle.model.record_text(record).unwrap();
    let (_, by_id) = call(&app, "POST", "/predict", Some(json!({ "id": record.id }))).await;
    let (_, by_x) = call(&app, "POST", "/predict", Some(json!({ "x": x, "text": text }))).await;
    assert_eq!(by_id["prediction"], by_x["prediction"]);
}

#[tokio::test]
async fn service_is_stateless_and_matches_the_cli() {
    let ws = workspace();
    let s = state(ws.path());
    let app = router(s.clone());
    let id = first_test_patient(&s);
    let name = s.bundle.model.concepts[0].name.clone();
    let body = json!({ "patient": id, "edits": [{ "concept": name, "source": "ground-truth" }], "mode": "correlated" });

    let (_, first) = call(&app, "POST", "/intervene", Some(body.clone())).await;
    let (_, again) = call(&app, "POST", "/intervene", Some(body.clone())).await;
    assert_eq!(first, again);
    let direct = intervene_one(&s, serde_json::from_value::<PatientIntervention>(body).unwrap()).unwrap();
    assert_eq!(serde_json::to_value(&direct).unwrap(), first);

    let req = json!({
        "edits": [{ "concept": name, "source": "ground-truth" }],
        "mode": "correlated",
        "target": { "kind": "ids", "ids": [id] }
    });
    std::fs::create_dir_all(ws.path().join("configs")).unwrap();
    std::fs::write(ws.path().join("configs/one.json"), req.to_string()).unwrap();
    cli(ws.path(), &["intervene", "--model", "m", "--request", "one.json"]);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(ws.path().join("reports/intervene-m-test.json")).unwrap()).unwrap();
    let rec = &report["body"]["records"][0];
    assert_eq!(rec["post_bottleneck"], first["post_bottleneck"]);
    assert_eq!(rec["post_probability"], first["post_probability"]);
    assert_eq!(rec["post_label"], first["post_label"]);
}
