use std::sync::Arc;
use std::time::Duration;

use async_trait::async_trait;
use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use ildae_core::curation::{flag_instances, RepairReport};
use ildae_core::difficulty::{compute_difficulty, EnsembleManifest};
use ildae_core::simulator::{
    cue_for, gen_ensemble_confidences, gen_instances, gen_world, CuePredictor, WorldParams, LABELS,
};
use ildae_core::types::{InstanceSet, TextField};
use ildae_service::api::{FlagPage, InstanceView};
use ildae_service::{
    router, AppState, Dataset, PredictRequest, PredictResponse, Predictor, PredictorError, PredictorHandle,
};
use serde_json::{json, Value};
use tower::ServiceExt;

const SEED: u64 = 21;

fn dataset() -> Dataset {
    let mut params = WorldParams::with_seed(SEED);
    params.n_instances = 300;
    params.n_candidates = 5;
    let world = gen_world(&params).unwrap();
    let d = compute_difficulty(&gen_ensemble_confidences(&world, &EnsembleManifest::default()).unwrap());
    let instances = InstanceSet::new(gen_instances(&world)).unwrap();
    let flags = flag_instances(&d, 50, 50).unwrap();
    Dataset::new("nli", instances, d, flags).unwrap()
}

fn app() -> AppState {
    AppState::new(dataset(), PredictorHandle::stub(SEED)).with_clock(Arc::new(|| 1_700_000_000_000))
}

async fn call(
    router: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
    headers: &[(&str, &str)],
) -> (StatusCode, Value, Option<String>) {
    let mut req = Request::builder().method(method).uri(uri);
    for (k, v) in headers {
        req = req.header(*k, *v);
    }
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let etag = resp
        .headers()
        .get(header::ETAG)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or(Value::Null)
    };
    (status, value, etag)
}

/// A trivial instance the stub currently answers correctly through a cue.
fn hardenable(data: &Dataset) -> (String, Vec<TextField>, String) {
    let labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
    let stub = CuePredictor::new(SEED);
    for id in &data.flags.trivial_ids {
        let r = data.instances.get(id).unwrap();
        let (_, pred) = stub.predict(&r.text_fields, &labels).unwrap();
        let cue = cue_for(&r.gold_label);
        if pred == r.gold_label && r.text_fields[1].text.split(' ').any(|w| w == cue) {
            let other = LABELS.iter().find(|l| **l != r.gold_label).unwrap();
            let hardened: Vec<TextField> = r
                .text_fields
                .iter()
                .map(|f| TextField::new(f.name.clone(), f.text.replace(cue, cue_for(other))))
                .collect();
            return (id.clone(), hardened, r.gold_label.clone());
        }
    }
    panic!("no hardenable trivial instance");
}

#[tokio::test]
async fn flag_queue_defaults_and_order() {
    let app = app();
    let data = dataset();
    let r = router(app);
    let (status, body, _) = call(&r, "GET", "/api/flags?kind=trivial", None, &[]).await;
    assert_eq!(status, StatusCode::OK);
    let page: FlagPage = serde_json::from_value(body).unwrap();
    assert!(page.items.len() <= 50);
    let ids: Vec<String> = page.items.iter().map(|i| i.instance_id.clone()).collect();
    assert_eq!(ids, data.flags.trivial_ids);

    let (_, body, _) = call(&r, "GET", "/api/flags?kind=erroneous&offset=45&limit=10", None, &[]).await;
    let page: FlagPage = serde_json::from_value(body).unwrap();
    assert_eq!(page.items.len(), 5);
    assert_eq!(page.items[0].instance_id, data.flags.erroneous_candidate_ids[45]);

    let (status, _, _) = call(&r, "GET", "/api/flags?kind=bogus", None, &[]).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let r = router(app());
    assert_eq!(
        call(&r, "GET", "/api/instances/nope", None, &[]).await.0,
        StatusCode::NOT_FOUND
    );
    let edit = json!({"edit_kind": "error_repair", "gold_label": "neutral", "author": "a"});
    assert_eq!(
        call(&r, "POST", "/api/instances/nope/edits", Some(edit), &[]).await.0,
        StatusCode::NOT_FOUND
    );
    let decision = json!({"status": "accepted", "author": "a"});
    assert_eq!(
        call(&r, "POST", "/api/edits/99/decision", Some(decision), &[]).await.0,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn empty_and_label_changing_edits_are_422() {
    let data = dataset();
    let r = router(app());
    let id = &data.flags.trivial_ids[0];
    let record = data.instances.get(id).unwrap();
    let uri = format!("/api/instances/{id}/edits");

    let unchanged = json!({"edit_kind": "trivial_hardening", "text_fields": record.text_fields, "author": "a"});
    let (status, body, _) = call(&r, "POST", &uri, Some(unchanged), &[]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "empty_edit");
    assert!(body["rule"].is_string());

    let spaced: Vec<TextField> = record
        .text_fields
        .iter()
        .map(|f| TextField::new(f.name.clone(), format!("  {}  ", f.text)))
        .collect();
    let whitespace = json!({"edit_kind": "trivial_hardening", "text_fields": spaced, "author": "a"});
    assert_eq!(
        call(&r, "POST", &uri, Some(whitespace), &[]).await.1["error"],
        "empty_edit"
    );

    let other = LABELS.iter().find(|l| **l != record.gold_label).unwrap();
    let relabel = json!({"edit_kind": "trivial_hardening", "gold_label": other, "author": "a"});
    let (status, body, _) = call(&r, "POST", &uri, Some(relabel), &[]).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["error"], "label_not_preserved");
    assert!(body["rule"].as_str().unwrap().contains("preserve the gold label"));
}

#[tokio::test]
async fn hardening_flow_flips_verdict_and_lowers_trivial_accuracy() {
    let data = dataset();
    let app = app();
    let r = router(app.clone());
    let (status, before, _) = call(&r, "GET", "/api/reports/repair", None, &[]).await;
    assert_eq!(status, StatusCode::OK);
    let before: RepairReport = serde_json::from_value(before).unwrap();
    assert_eq!(before.trivial.as_ref().unwrap().delta, 0.0);

    let (id, hardened, gold) = hardenable(&data);
    let edit = json!({"edit_kind": "trivial_hardening", "text_fields": hardened, "author": "ann"});
    let (status, body, etag) = call(&r, "POST", &format!("/api/instances/{id}/edits"), Some(edit), &[]).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(etag.as_deref(), Some("\"1\""));
    // Oracle: the stub called directly on the edited text.
    let labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
    let (_, direct) = CuePredictor::new(SEED).predict(&hardened, &labels).unwrap();
    assert_eq!(body["predictor_verdict"]["predicted_label"], direct.as_str());
    assert_eq!(body["predictor_verdict"]["flipped"], json!(direct != gold));
    assert_eq!(body["predictor_verdict"]["flipped"], json!(true));
    assert_eq!(body["attempt"], 1);
    let edit_id = body["edit_id"].as_u64().unwrap();

    let accept = json!({"status": "accepted", "author": "rev"});
    let uri = format!("/api/edits/{edit_id}/decision");
    let (status, body, _) = call(&r, "POST", &uri, Some(accept.clone()), &[]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "accepted");
    let (status, again, _) = call(&r, "POST", &uri, Some(accept), &[]).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again, body);
    let (status, _, _) = call(
        &r,
        "POST",
        &uri,
        Some(json!({"status": "rejected", "author": "rev"})),
        &[],
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (_, view, _) = call(&r, "GET", &format!("/api/instances/{id}"), None, &[]).await;
    let view: InstanceView = serde_json::from_value(view).unwrap();
    assert_eq!(view.instance.text_fields, hardened);
    assert_eq!(view.instance.gold_label, gold);
    assert_eq!(view.revision, 2);

    let (_, after, _) = call(&r, "GET", "/api/reports/repair", None, &[]).await;
    let after: RepairReport = serde_json::from_value(after).unwrap();
    assert!(after.trivial.unwrap().delta < 0.0);
    assert_eq!(after.erroneous, before.erroneous);
}

#[tokio::test]
async fn unflipped_hardening_cannot_be_accepted() {
    let data = dataset();
    let r = router(app());
    let (id, _, _) = hardenable(&data);
    let record = data.instances.get(&id).unwrap();
    // Appending filler keeps the cue, so the stub still answers correctly.
    let text: Vec<TextField> = record
        .text_fields
        .iter()
        .map(|f| TextField::new(f.name.clone(), format!("{} indeed", f.text)))
        .collect();
    let (status, body, _) = call(
        &r,
        "POST",
        &format!("/api/instances/{id}/edits"),
        Some(json!({"edit_kind": "trivial_hardening", "text_fields": text, "author": "a"})),
        &[],
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["predictor_verdict"]["flipped"], json!(false));
    let uri = format!("/api/edits/{}/decision", body["edit_id"]);
    let (status, body, _) = call(
        &r,
        "POST",
        &uri,
        Some(json!({"status": "accepted", "author": "r"})),
        &[],
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["rule"].is_string());
    assert_eq!(
        call(
            &r,
            "POST",
            &uri,
            Some(json!({"status": "rejected", "author": "r"})),
            &[]
        )
        .await
        .0,
        StatusCode::OK
    );
}

#[tokio::test]
async fn repair_of_erroneous_instance_raises_accuracy() {
    let data = dataset();
    let r = router(app());
    let labels: Vec<String> = LABELS.iter().map(|s| s.to_string()).collect();
    let stub = CuePredictor::new(SEED);
    let id = data
        .flags
        .erroneous_candidate_ids
        .iter()
        .find(|id| {
            let rec = data.instances.get(id).unwrap();
            stub.predict(&rec.text_fields, &labels).unwrap().1 != rec.gold_label
        })
        .unwrap()
        .clone();
    let record = data.instances.get(&id).unwrap();
    let predicted = stub.predict(&record.text_fields, &labels).unwrap().1;
    let edit = json!({"edit_kind": "error_repair", "gold_label": predicted, "author": "a", "rationale": "label disagrees with text"});
    let (status, body, _) = call(&r, "POST", &format!("/api/instances/{id}/edits"), Some(edit), &[]).await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["rationale"], "label disagrees with text");
    let uri = format!("/api/edits/{}/decision", body["edit_id"]);
    assert_eq!(
        call(
            &r,
            "POST",
            &uri,
            Some(json!({"status": "accepted", "author": "r"})),
            &[]
        )
        .await
        .0,
        StatusCode::OK
    );
    let (_, report, _) = call(&r, "GET", "/api/reports/repair", None, &[]).await;
    let report: RepairReport = serde_json::from_value(report).unwrap();
    assert!(report.erroneous.unwrap().delta > 0.0);
}

#[tokio::test]
async fn stale_if_match_is_412() {
    let data = dataset();
    let r = router(app());
    let id = &data.flags.erroneous_candidate_ids[0];
    let uri = format!("/api/instances/{id}/edits");
    let other = LABELS
        .iter()
        .find(|l| **l != data.instances.get(id).unwrap().gold_label)
        .unwrap();
    let edit = json!({"edit_kind": "error_repair", "gold_label": other, "author": "a"});
    let (status, _, _) = call(&r, "POST", &uri, Some(edit.clone()), &[("if-match", "\"0\"")]).await;
    assert_eq!(status, StatusCode::CREATED);
    let (status, body, _) = call(&r, "POST", &uri, Some(edit), &[("if-match", "\"0\"")]).await;
    assert_eq!(status, StatusCode::PRECONDITION_FAILED);
    assert_eq!(body["error"], "revision_mismatch");
}

struct Slow;

#[async_trait]
impl Predictor for Slow {
    async fn predict(&self, _: &PredictRequest) -> Result<PredictResponse, PredictorError> {
        tokio::time::sleep(Duration::from_secs(10)).await;
        Err(PredictorError::Unavailable("never".into()))
    }
}

#[tokio::test]
async fn predictor_timeout_is_502_with_retry_hint() {
    let data = dataset();
    let app = AppState::new(
        dataset(),
        PredictorHandle::new(Arc::new(Slow), Duration::from_millis(30), 2),
    );
    let r = router(app);
    let id = &data.flags.trivial_ids[0];
    let other = LABELS
        .iter()
        .find(|l| **l != data.instances.get(id).unwrap().gold_label)
        .unwrap();
    let edit = json!({"edit_kind": "error_repair", "gold_label": other, "author": "a"});
    let (status, body, _) = call(&r, "POST", &format!("/api/instances/{id}/edits"), Some(edit), &[]).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(body["error"], "predictor_timeout");
    assert!(body["retry_after_ms"].as_u64().unwrap() > 0);
}

#[tokio::test]
async fn predict_proxy_returns_predictor_output_unchanged() {
    let r = router(app());
    let req = PredictRequest {
        task_name: "nli".into(),
        text_fields: vec![TextField::new("hypothesis", "it will perhaps rain")],
        candidate_labels: LABELS.iter().map(|s| s.to_string()).collect(),
    };
    let (status, body, _) = call(
        &r,
        "POST",
        "/api/predict",
        Some(serde_json::to_value(&req).unwrap()),
        &[],
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    let proxied: PredictResponse = serde_json::from_value(body).unwrap();
    let direct = PredictorHandle::stub(SEED).predict(&req).await.unwrap();
    assert_eq!(proxied, direct);
    let (status, _, _) = call(
        &r,
        "POST",
        "/api/predict",
        Some(json!({"text_fields": [], "candidate_labels": []})),
        &[],
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let r = router(app().with_token(Some("s3cret".into())));
    assert_eq!(
        call(&r, "GET", "/api/flags?kind=trivial", None, &[]).await.0,
        StatusCode::UNAUTHORIZED
    );
    assert_eq!(
        call(
            &r,
            "GET",
            "/api/flags?kind=trivial",
            None,
            &[("authorization", "Bearer nope")]
        )
        .await
        .0,
        StatusCode::UNAUTHORIZED
    );
    assert_eq!(
        call(
            &r,
            "GET",
            "/api/flags?kind=trivial",
            None,
            &[("authorization", "Bearer s3cret")]
        )
        .await
        .0,
        StatusCode::OK
    );
}

#[tokio::test]
async fn replaying_the_log_reconstructs_state() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("edits.jsonl");
    let data = dataset();
    let snapshot = {
        let app = AppState::with_log(dataset(), PredictorHandle::stub(SEED), &log).unwrap();
        let r = router(app.clone());
        let (id, hardened, _) = hardenable(&data);
        let (_, body, _) = call(
            &r,
            "POST",
            &format!("/api/instances/{id}/edits"),
            Some(json!({"edit_kind": "trivial_hardening", "text_fields": hardened, "author": "a"})),
            &[],
        )
        .await;
        call(
            &r,
            "POST",
            &format!("/api/edits/{}/decision", body["edit_id"]),
            Some(json!({"status": "accepted", "author": "r"})),
            &[],
        )
        .await;
        let id2 = &data.flags.erroneous_candidate_ids[3];
        let other = LABELS
            .iter()
            .find(|l| **l != data.instances.get(id2).unwrap().gold_label)
            .unwrap();
        let (_, body, _) = call(
            &r,
            "POST",
            &format!("/api/instances/{id2}/edits"),
            Some(json!({"edit_kind": "error_repair", "gold_label": other, "author": "b"})),
            &[],
        )
        .await;
        call(
            &r,
            "POST",
            &format!("/api/edits/{}/decision", body["edit_id"]),
            Some(json!({"status": "rejected", "author": "r"})),
            &[],
        )
        .await;
        app.snapshot()
    };
    let reopened = AppState::with_log(dataset(), PredictorHandle::stub(SEED), &log).unwrap();
    assert_eq!(reopened.snapshot(), snapshot);
    assert_eq!(reopened.snapshot().next_id(), 5);
}
