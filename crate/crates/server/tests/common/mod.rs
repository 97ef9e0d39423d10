#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, Mutex};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;
use warden_core::ingest::serialize_run;
use warden_core::AnalysisRun;
use warden_server::{router, SharedStore, Store, StoreOptions};

pub struct App {
    pub router: Router,
    pub store: SharedStore,
}

pub fn app(dir: &Path) -> App {
    app_with(dir, StoreOptions::default())
}

pub fn app_with(dir: &Path, options: StoreOptions) -> App {
    let store = Arc::new(Mutex::new(Store::open(dir, options).expect("store opens")));
    App { router: router(store.clone()), store }
}

pub async fn call(router: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req.header("content-type", "application/json").body(Body::from(serde_json::to_vec(&v).unwrap())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = router.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

pub async fn call_json(router: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(router, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

pub fn upload(run: &AnalysisRun) -> Value {
    let report: Value = serde_json::from_slice(&serialize_run(run)).unwrap();
    serde_json::json!({ "report": report })
}
