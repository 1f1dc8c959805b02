//! In-process client that drives a [`Router`] without a socket. Used by
//! tests and by the CLI's self-checks.

use axum::body::{to_bytes, Body};
use axum::http::{header, HeaderMap, Method, Request, StatusCode};
use axum::Router;
use serde_json::Value;
use tower::ServiceExt;

use crate::model::ObservationMetadata;

const BOUNDARY: &str = "fieldlab-boundary-7f3a";

#[derive(Debug)]
pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    /// `Value::Null` when the body is not JSON.
    pub json: Value,
    pub bytes: Vec<u8>,
}

impl Reply {
    /// The `code` field of an error body.
    pub fn code(&self) -> &str {
        self.json["code"].as_str().unwrap_or("")
    }
}

/// A multipart body with a `metadata` JSON part and a `media` part.
pub fn observation_body(meta: &ObservationMetadata, media: &[u8]) -> (String, Vec<u8>) {
    let mut body = Vec::with_capacity(media.len() + 512);
    body.extend_from_slice(
        format!(
            "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"metadata\"\r\nContent-Type: application/json\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(&serde_json::to_vec(meta).expect("metadata serializes"));
    body.extend_from_slice(
        format!(
            "\r\n--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"media\"; filename=\"capture\"\r\nContent-Type: application/octet-stream\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(media);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={BOUNDARY}"), body)
}

#[derive(Clone)]
pub struct Client {
    router: Router,
}

impl Client {
    pub fn new(router: Router) -> Self {
        Self { router }
    }

    pub async fn send(
        &self,
        method: Method,
        path: &str,
        token: Option<&str>,
        extra: &[(&str, &str)],
        content_type: Option<&str>,
        body: Vec<u8>,
    ) -> Reply {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
        }
        if let Some(ct) = content_type {
            req = req.header(header::CONTENT_TYPE, ct);
        }
        for (k, v) in extra {
            req = req.header(*k, *v);
        }
        let response = self
            .router
            .clone()
            .oneshot(req.body(Body::from(body)).expect("request builds"))
            .await
            .expect("router is infallible");
        let status = response.status();
        let headers = response.headers().clone();
        let bytes = to_bytes(response.into_body(), usize::MAX)
            .await
            .expect("body collects")
            .to_vec();
        let json = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
        Reply {
            status,
            headers,
            json,
            bytes,
        }
    }

    pub async fn get(&self, path: &str, token: Option<&str>) -> Reply {
        self.send(Method::GET, path, token, &[], None, Vec::new()).await
    }

    pub async fn post_json(&self, path: &str, token: Option<&str>, body: &Value) -> Reply {
        self.send(
            Method::POST,
            path,
            token,
            &[],
            Some("application/json"),
            serde_json::to_vec(body).expect("json"),
        )
        .await
    }

    pub async fn upload(
        &self,
        project_id: &str,
        token: Option<&str>,
        idempotency_key: Option<&str>,
        meta: &ObservationMetadata,
        media: &[u8],
    ) -> Reply {
        let (ct, body) = observation_body(meta, media);
        let key: Vec<(&str, &str)> = idempotency_key
            .map(|k| vec![(crate::api::IDEMPOTENCY_HEADER, k)])
            .unwrap_or_default();
        self.send(
            Method::POST,
            &format!("/projects/{project_id}/observations"),
            token,
            &key,
            Some(&ct),
            body,
        )
        .await
    }

    /// Registers an email/password account and returns `(account_id, token)`.
    pub async fn register(&self, email: &str, role: &str) -> (String, String) {
        let reply = self
            .post_json(
                "/accounts",
                None,
                &serde_json::json!({
                    "method": "email_password",
                    "email": email,
                    "credential": "long enough secret",
                    "role": role,
                }),
            )
            .await;
        assert_eq!(reply.status, StatusCode::CREATED, "register {email}: {:?}", reply.json);
        (
            reply.json["account"]["account_id"]
                .as_str()
                .unwrap_or_default()
                .to_owned(),
            reply.json["token"].as_str().unwrap_or_default().to_owned(),
        )
    }
}
