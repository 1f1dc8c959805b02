use std::sync::Arc;

use axum::http::{Method, StatusCode};
use chrono::{TimeZone, Utc};
use fieldlab_core::domain::{validate_annotation_set, AnnotationSet, BoundingBox};
use fieldlab_service::api::REPLAYED_HEADER;
use fieldlab_service::auth::HashCost;
use fieldlab_service::client::Client;
use fieldlab_service::model::{CollectionMode, GeoPoint, ObservationMetadata};
use fieldlab_service::store::{FileStore, MemoryStore, Store};
use fieldlab_service::{router, AppState};
use serde_json::json;
use sha2::{Digest, Sha256};

fn client_with(store: Arc<dyn Store>, cap: u64) -> Client {
    Client::new(router(AppState {
        store,
        media_cap_bytes: cap,
        hash_cost: HashCost::Fast,
    }))
}

fn client() -> Client {
    client_with(Arc::new(MemoryStore::new()), 1 << 20)
}

fn meta(day: u32, boxes: Vec<BoundingBox>) -> ObservationMetadata {
    ObservationMetadata {
        captured_at: Utc.with_ymd_and_hms(2024, 6, day, 10, 0, 0).unwrap(),
        geo: Some(GeoPoint { lat: 36.9, lon: -122.0 }),
        mode: if boxes.is_empty() {
            CollectionMode::Expert
        } else {
            CollectionMode::MlAssisted
        },
        detections: boxes,
        media_width: 640,
        media_height: 480,
        content_type: Some("image/jpeg".into()),
    }
}

fn rip_box() -> BoundingBox {
    BoundingBox::new(10.0, 20.0, 200.0, 300.0, 0).with_confidence(0.8)
}

struct World {
    c: Client,
    researcher: String,
    participant: String,
    curator: String,
    project: String,
}

async fn world() -> World {
    let c = client();
    let (_, researcher) = c.register("r@lab.org", "researcher").await;
    let (_, participant) = c.register("p@home.org", "participant").await;
    let (_, curator) = c.register("c@lab.org", "curator").await;
    let reply = c
        .post_json(
            "/projects",
            Some(&researcher),
            &json!({"name": "rips", "label_map": ["rip_channel", "rip_plume"]}),
        )
        .await;
    assert_eq!(reply.status, StatusCode::CREATED, "{:?}", reply.json);
    let project = reply.json["project_id"].as_str().unwrap().to_owned();
    World {
        c,
        researcher,
        participant,
        curator,
        project,
    }
}

#[tokio::test]
async fn account_rules() {
    let c = client();
    let weak = c
        .post_json(
            "/accounts",
            None,
            &json!({"method": "email_password", "email": "a@b.org", "credential": "short"}),
        )
        .await;
    assert_eq!(
        (weak.status, weak.code()),
        (StatusCode::UNPROCESSABLE_ENTITY, "WEAK_CREDENTIAL")
    );

    let (id, _) = c.register("a@b.org", "participant").await;
    let again = c
        .post_json(
            "/accounts",
            None,
            &json!({"method": "email_password", "email": "A@B.org", "credential": "another secret"}),
        )
        .await;
    assert_eq!((again.status, again.code()), (StatusCode::CONFLICT, "EMAIL_TAKEN"));

    let fed = c.post_json("/accounts", None, &json!({"method": "federated"})).await;
    assert_eq!(
        (fed.status, fed.code()),
        (StatusCode::NOT_IMPLEMENTED, "FEDERATED_NOT_SUPPORTED")
    );

    let anon = c.post_json("/accounts", None, &json!({"method": "anonymous"})).await;
    assert_eq!(anon.status, StatusCode::CREATED);
    assert_eq!(anon.json["account"]["role"], "participant");
    assert!(anon.json["account"].get("credential_hash").is_none());

    let login = c
        .post_json(
            "/tokens",
            None,
            &json!({"email": "a@b.org", "credential": "long enough secret"}),
        )
        .await;
    assert_eq!(login.status, StatusCode::CREATED);
    assert_eq!(login.json["account_id"], id.as_str());
    let bad = c
        .post_json(
            "/tokens",
            None,
            &json!({"email": "a@b.org", "credential": "wrong secret!"}),
        )
        .await;
    assert_eq!(
        (bad.status, bad.code()),
        (StatusCode::UNAUTHORIZED, "INVALID_CREDENTIALS")
    );
    let junk = c.send(Method::POST, "/tokens", None, &[], None, b"{".to_vec()).await;
    assert_eq!(junk.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn projects_need_researchers() {
    let w = world().await;
    let denied =
        w.c.post_json(
            "/projects",
            Some(&w.participant),
            &json!({"name": "x", "label_map": ["a"]}),
        )
        .await;
    assert_eq!(denied.status, StatusCode::FORBIDDEN);
    let dup =
        w.c.post_json(
            "/projects",
            Some(&w.researcher),
            &json!({"name": "x", "label_map": ["a", "A"]}),
        )
        .await;
    assert_eq!(dup.status, StatusCode::UNPROCESSABLE_ENTITY);
    let anon =
        w.c.post_json("/projects", None, &json!({"name": "x", "label_map": ["a"]}))
            .await;
    assert_eq!(anon.status, StatusCode::UNAUTHORIZED);
    let bogus = w.c.get(&format!("/projects/{}", w.project), Some("nope")).await;
    assert_eq!(bogus.status, StatusCode::UNAUTHORIZED);
    let got = w.c.get(&format!("/projects/{}", w.project), Some(&w.participant)).await;
    assert_eq!(got.status, StatusCode::OK);
    assert_eq!(got.json["label_map"], json!(["rip_channel", "rip_plume"]));
    assert_eq!(
        w.c.get("/projects/missing", Some(&w.participant)).await.status,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test]
async fn upload_is_idempotent_and_checksummed() {
    let w = world().await;
    let bytes = b"jpeg bytes of a beach".to_vec();
    let first =
        w.c.upload(
            &w.project,
            Some(&w.participant),
            Some("k1"),
            &meta(1, vec![rip_box()]),
            &bytes,
        )
        .await;
    assert_eq!(first.status, StatusCode::CREATED, "{:?}", first.json);
    assert_eq!(first.json["stored_checksum"], hex::encode(Sha256::digest(&bytes)));

    let retry =
        w.c.upload(
            &w.project,
            Some(&w.participant),
            Some("k1"),
            &meta(1, vec![rip_box()]),
            &bytes,
        )
        .await;
    assert_eq!(retry.status, StatusCode::OK);
    assert_eq!(retry.json["observation_id"], first.json["observation_id"]);
    assert_eq!(retry.headers[REPLAYED_HEADER], "true");

    let conflict =
        w.c.upload(
            &w.project,
            Some(&w.participant),
            Some("k1"),
            &meta(1, vec![rip_box()]),
            b"other",
        )
        .await;
    assert_eq!(
        (conflict.status, conflict.code()),
        (StatusCode::CONFLICT, "IDEMPOTENCY_CONFLICT")
    );

    // Same key, different submitter: a separate observation.
    let other =
        w.c.upload(
            &w.project,
            Some(&w.curator),
            Some("k1"),
            &meta(1, vec![rip_box()]),
            &bytes,
        )
        .await;
    assert_eq!(other.status, StatusCode::CREATED);
    assert_ne!(other.json["observation_id"], first.json["observation_id"]);

    let id = first.json["observation_id"].as_str().unwrap();
    let media =
        w.c.get(&format!("/observations/{id}/media"), Some(&w.participant))
            .await;
    assert_eq!(media.status, StatusCode::OK);
    assert_eq!(media.bytes, bytes);
    assert_eq!(media.headers["content-type"], "image/jpeg");
}

#[tokio::test]
async fn upload_validation() {
    let w = world().await;
    let up = |m: ObservationMetadata| {
        let c = w.c.clone();
        let (p, t) = (w.project.clone(), w.participant.clone());
        async move { c.upload(&p, Some(&t), None, &m, b"bytes").await }
    };
    let outside = meta(1, vec![BoundingBox::new(600.0, 0.0, 700.0, 10.0, 0)]);
    assert_eq!(up(outside).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let unknown_class = meta(1, vec![BoundingBox::new(0.0, 0.0, 10.0, 10.0, 7)]);
    assert_eq!(up(unknown_class).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let mut bad_geo = meta(1, vec![rip_box()]);
    bad_geo.geo = Some(GeoPoint { lat: 91.0, lon: 0.0 });
    assert_eq!(up(bad_geo).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let mut empty_assisted = meta(1, vec![]);
    empty_assisted.mode = CollectionMode::MlAssisted;
    assert_eq!(up(empty_assisted).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(
        up(meta(1, vec![])).await.status,
        StatusCode::CREATED,
        "expert mode may be empty"
    );

    let missing =
        w.c.upload("nope", Some(&w.participant), None, &meta(1, vec![rip_box()]), b"x")
            .await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    let anon =
        w.c.upload(&w.project, None, None, &meta(1, vec![rip_box()]), b"x")
            .await;
    assert_eq!(anon.status, StatusCode::UNAUTHORIZED);
}

#[tokio::test]
async fn oversized_media_is_413() {
    let c = client_with(Arc::new(MemoryStore::new()), 1024);
    let (_, r) = c.register("r@lab.org", "researcher").await;
    let p = c
        .post_json("/projects", Some(&r), &json!({"name": "x", "label_map": ["a"]}))
        .await
        .json["project_id"]
        .as_str()
        .unwrap()
        .to_owned();
    let ok = c.upload(&p, Some(&r), None, &meta(1, vec![]), &[7u8; 1024]).await;
    assert_eq!(ok.status, StatusCode::CREATED);
    let big = c.upload(&p, Some(&r), None, &meta(1, vec![]), &[7u8; 1025]).await;
    assert_eq!(
        (big.status, big.code()),
        (StatusCode::PAYLOAD_TOO_LARGE, "PAYLOAD_TOO_LARGE")
    );
    let huge = c
        .upload(&p, Some(&r), None, &meta(1, vec![]), &vec![7u8; 4 << 20])
        .await;
    assert_eq!(huge.status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn curation_feedback_and_export() {
    let w = world().await;
    let mut ids = Vec::new();
    for day in 1..=5 {
        let r =
            w.c.upload(
                &w.project,
                Some(&w.participant),
                None,
                &meta(day, vec![rip_box()]),
                &[day as u8; 16],
            )
            .await;
        assert_eq!(r.status, StatusCode::CREATED);
        ids.push(r.json["observation_id"].as_str().unwrap().to_owned());
    }
    let curate = |id: &str, body: serde_json::Value, token: &str| {
        let c = w.c.clone();
        let (path, token) = (format!("/observations/{id}/curation"), token.to_owned());
        async move { c.post_json(&path, Some(&token), &body).await }
    };
    assert_eq!(
        curate(&ids[0], json!({"verdict": "accepted"}), &w.participant)
            .await
            .status,
        StatusCode::FORBIDDEN
    );
    assert_eq!(
        curate("missing", json!({"verdict": "accepted"}), &w.curator)
            .await
            .status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        curate(&ids[0], json!({"verdict": "corrected"}), &w.curator)
            .await
            .status,
        StatusCode::UNPROCESSABLE_ENTITY
    );
    assert_eq!(
        curate(
            &ids[0],
            json!({"verdict": "accepted", "corrected_boxes": []}),
            &w.curator
        )
        .await
        .status,
        StatusCode::UNPROCESSABLE_ENTITY
    );

    for id in &ids[..2] {
        assert_eq!(
            curate(id, json!({"verdict": "accepted"}), &w.curator).await.status,
            StatusCode::CREATED
        );
    }
    let fixed = BoundingBox::new(5.0, 5.0, 50.0, 60.0, 1);
    let corrected = curate(
        &ids[2],
        json!({"verdict": "corrected", "corrected_boxes": [fixed], "feedback": "that is a plume"}),
        &w.curator,
    )
    .await;
    assert_eq!(corrected.status, StatusCode::CREATED);
    assert_eq!(
        curate(
            &ids[3],
            json!({"verdict": "rejected", "feedback": "no rip"}),
            &w.curator
        )
        .await
        .status,
        StatusCode::CREATED
    );
    // ids[4] stays uncurated.

    let fb =
        w.c.get(&format!("/observations/{}/feedback", ids[2]), Some(&w.participant))
            .await;
    assert_eq!(fb.status, StatusCode::OK);
    assert_eq!(fb.json["status"], "corrected");
    assert_eq!(fb.json["feedback_text"], "that is a plume");
    let pending =
        w.c.get(&format!("/observations/{}/feedback", ids[4]), Some(&w.participant))
            .await;
    assert_eq!(pending.json["status"], "pending");
    let (_, stranger) = w.c.register("s@else.org", "participant").await;
    let hidden =
        w.c.get(&format!("/observations/{}/feedback", ids[2]), Some(&stranger))
            .await;
    assert_eq!(hidden.status, StatusCode::FORBIDDEN);

    let path = format!("/projects/{}/retraining-export", w.project);
    assert_eq!(w.c.get(&path, Some(&w.participant)).await.status, StatusCode::FORBIDDEN);
    assert_eq!(w.c.get(&path, None).await.status, StatusCode::UNAUTHORIZED);
    let export = w.c.get(&path, Some(&w.researcher)).await;
    assert_eq!(export.status, StatusCode::OK, "{:?}", export.json);
    let set: AnnotationSet = serde_json::from_value(export.json).unwrap();
    assert!(validate_annotation_set(&set).ok);
    let exported: Vec<&str> = set.images.iter().map(|i| i.media_id.as_str()).collect();
    assert_eq!(exported, vec![ids[0].as_str(), ids[1].as_str(), ids[2].as_str()]);
    assert_eq!(set.boxes[&ids[2]], vec![fixed]);
    assert_eq!(set.boxes[&ids[0]], vec![rip_box()]);
    assert_eq!(set.label_map.names(), ["rip_channel", "rip_plume"]);

    // Last writer wins: re-curating flips membership.
    curate(&ids[3], json!({"verdict": "accepted"}), &w.curator).await;
    let since =
        w.c.get(&format!("{path}?since=2024-06-02T00:00:00Z"), Some(&w.curator))
            .await;
    let set: AnnotationSet = serde_json::from_value(since.json).unwrap();
    assert_eq!(set.images.len(), 3, "days 2, 3 and 4");
    let expert_only = w.c.get(&format!("{path}?modes=expert"), Some(&w.curator)).await;
    assert_eq!(expert_only.json["images"], json!([]));
    let bad = w.c.get(&format!("{path}?modes=robot"), Some(&w.curator)).await;
    assert_eq!(bad.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn file_store_survives_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (token, project, obs) = {
        let c = client_with(Arc::new(FileStore::open(dir.path()).unwrap()), 1 << 20);
        let (_, r) = c.register("r@lab.org", "researcher").await;
        let p = c
            .post_json("/projects", Some(&r), &json!({"name": "x", "label_map": ["a"]}))
            .await
            .json["project_id"]
            .as_str()
            .unwrap()
            .to_owned();
        let o = c.upload(&p, Some(&r), Some("k"), &meta(1, vec![]), b"persisted").await;
        (r, p, o.json["observation_id"].as_str().unwrap().to_owned())
    };
    let c = client_with(Arc::new(FileStore::open(dir.path()).unwrap()), 1 << 20);
    let replay = c
        .upload(&project, Some(&token), Some("k"), &meta(1, vec![]), b"persisted")
        .await;
    assert_eq!(replay.status, StatusCode::OK);
    assert_eq!(replay.json["observation_id"], obs.as_str());
    let media = c.get(&format!("/observations/{obs}/media"), Some(&token)).await;
    assert_eq!(media.bytes, b"persisted");
}

#[tokio::test]
async fn role_matrix() {
    // Oracle: the access table, written out independently of the handlers.
    let w = world().await;
    let obs =
        w.c.upload(&w.project, Some(&w.participant), None, &meta(1, vec![rip_box()]), b"m")
            .await
            .json["observation_id"]
            .as_str()
            .unwrap()
            .to_owned();
    let tokens = [
        ("researcher", w.researcher.clone()),
        ("participant", w.participant.clone()),
        ("curator", w.curator.clone()),
    ];
    let expect = |role: &str, action: &str| -> bool {
        matches!(
            (role, action),
            ("researcher", "create_project")
                | ("curator", "curate")
                | ("researcher", "export")
                | ("curator", "export")
                | ("participant", "feedback")
                | ("curator", "feedback")
                | (_, "upload")
                | (_, "read_project")
        )
    };
    for (role, token) in &tokens {
        let results = [
            (
                "create_project",
                w.c.post_json("/projects", Some(token), &json!({"name": "n", "label_map": ["a"]}))
                    .await
                    .status,
            ),
            (
                "curate",
                w.c.post_json(
                    &format!("/observations/{obs}/curation"),
                    Some(token),
                    &json!({"verdict": "accepted"}),
                )
                .await
                .status,
            ),
            (
                "export",
                w.c.get(&format!("/projects/{}/retraining-export", w.project), Some(token))
                    .await
                    .status,
            ),
            (
                "feedback",
                w.c.get(&format!("/observations/{obs}/feedback"), Some(token))
                    .await
                    .status,
            ),
            (
                "upload",
                w.c.upload(&w.project, Some(token), None, &meta(2, vec![rip_box()]), b"n")
                    .await
                    .status,
            ),
            (
                "read_project",
                w.c.get(&format!("/projects/{}", w.project), Some(token)).await.status,
            ),
        ];
        for (action, status) in results {
            let allowed = expect(role, action);
            assert_eq!(status.is_success(), allowed, "{role} {action}: {status}");
            if !allowed {
                assert_eq!(status, StatusCode::FORBIDDEN, "{role} {action}");
            }
        }
    }
}
