#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use odeal::active::SessionConfig;
use odeal::classify::ClassifierSpec;
use odeal::data::{generate_synthetic_dataset, write_observations, Dataset, ProfileShape};
use odeal_service::{router, Registry};
use serde_json::{json, Value};
use tower::ServiceExt;

pub fn dataset(n: usize, rate: f64, seed: u64) -> Dataset {
    generate_synthetic_dataset(n, rate, seed, &ProfileShape::default()).unwrap()
}

pub fn config(seed: u64) -> SessionConfig {
    SessionConfig { n_initial: 20, budget: 30, seed, ..SessionConfig::new(ClassifierSpec::gbdt()) }
}

pub fn csv_bytes(ds: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    write_observations(ds.records(), &mut out).unwrap();
    out
}

#[derive(Clone)]
pub struct Client {
    pub app: Router,
}

impl Client {
    pub fn new(registry: Arc<Registry>) -> Self {
        Self { app: router(registry) }
    }

    pub async fn raw(&self, method: &str, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
        let req = Request::builder().method(method).uri(uri).body(Body::from(body)).unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn call(&self, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let bytes = body.map(|b| serde_json::to_vec(&b).unwrap()).unwrap_or_default();
        let (status, out) = self.raw(method, uri, bytes).await;
        let value = if out.is_empty() { Value::Null } else { serde_json::from_slice(&out).unwrap() };
        (status, value)
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call("GET", uri, None).await
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call("POST", uri, Some(body)).await
    }

    pub async fn upload(&self, ds: &Dataset) -> String {
        let (status, body) = self.raw("POST", &format!("/datasets?name={}", ds.name()), csv_bytes(ds)).await;
        assert_eq!(status, StatusCode::CREATED, "{}", String::from_utf8_lossy(&body));
        let v: Value = serde_json::from_slice(&body).unwrap();
        v["dataset_id"].as_str().unwrap().to_owned()
    }

    pub async fn create(&self, dataset_id: &str, config: &SessionConfig, mode: &str) -> (StatusCode, Value) {
        self.post("/sessions", json!({ "dataset_id": dataset_id, "config": config, "initial_labels": mode })).await
    }

    /// Ground-truth labels for a pending document.
    pub fn answers(ds: &Dataset, pending: &Value) -> Value {
        let mut labels = serde_json::Map::new();
        for inst in pending["instances"].as_array().unwrap() {
            let i = inst["index"].as_u64().unwrap() as usize;
            labels.insert(i.to_string(), json!(ds.labels()[i].value()));
        }
        Value::Object(labels)
    }

    /// Answers every pending batch from ground truth; returns the last reply.
    pub async fn label_until_done(&self, ds: &Dataset, session: &str, mut reply: Value) -> Value {
        while reply["phase"] == "awaiting_labels" {
            let labels = Self::answers(ds, &reply["pending"]);
            let (status, next) =
                self.post(&format!("/sessions/{session}/labels"), json!({ "labels": labels, "revision": reply["revision"] })).await;
            assert_eq!(status, StatusCode::OK, "{next}");
            reply = next;
        }
        reply
    }
}
