//! Replays the stored response of a mutating request retried with the same
//! `Idempotency-Key`.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Request, State};
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use sha2::{Digest, Sha256};

use crate::error::ApiError;
use crate::AppState;

pub const HEADER: &str = "idempotency-key";
pub const REPLAYED_HEADER: &str = "idempotent-replayed";
const CAPACITY: usize = 4096;

enum Entry {
    InFlight([u8; 32]),
    Done { digest: [u8; 32], status: StatusCode, body: Bytes },
}

#[derive(Default)]
pub struct Idempotency {
    entries: Mutex<(HashMap<String, Entry>, VecDeque<String>)>,
}

impl Idempotency {
    fn finish(&self, key: &str, digest: [u8; 32], status: StatusCode, body: Bytes) {
        let mut guard = self.entries.lock().expect("idempotency lock");
        let (map, order) = &mut *guard;
        if status.is_server_error() {
            map.remove(key);
            return;
        }
        map.insert(key.to_string(), Entry::Done { digest, status, body });
        order.push_back(key.to_string());
        while order.len() > CAPACITY {
            if let Some(old) = order.pop_front() {
                map.remove(&old);
            }
        }
    }
}

/// Clears an in-flight marker if the request is dropped before it finishes.
struct InFlightGuard<'a> {
    idempotency: &'a Idempotency,
    key: &'a str,
    armed: bool,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        if self.armed {
            self.idempotency.entries.lock().expect("idempotency lock").0.remove(self.key);
        }
    }
}

fn json_response(status: StatusCode, body: Bytes) -> Response {
    let mut r = (status, body).into_response();
    r.headers_mut().insert("content-type", HeaderValue::from_static("application/json"));
    r
}

pub async fn middleware(State(app): State<AppState>, req: Request, next: Next) -> Response {
    if req.method() == Method::GET || req.method() == Method::HEAD || req.method() == Method::OPTIONS {
        return next.run(req).await;
    }
    let Some(key) = req.headers().get(HEADER).and_then(|v| v.to_str().ok()).map(str::to_owned) else {
        return next.run(req).await;
    };
    let scope = format!("{} {} {}", req.method(), req.uri().path(), key);
    let (parts, body) = req.into_parts();
    let bytes = match to_bytes(body, app.config.max_upload_bytes).await {
        Ok(b) => b,
        Err(_) => {
            return ApiError::new(StatusCode::PAYLOAD_TOO_LARGE, "TooLarge", "request body exceeds the upload limit")
                .into_response()
        }
    };
    let mut hasher = Sha256::new();
    hasher.update(scope.as_bytes());
    hasher.update([0]);
    hasher.update(&bytes);
    let digest: [u8; 32] = hasher.finalize().into();

    {
        let mut guard = app.idempotency.entries.lock().expect("idempotency lock");
        match guard.0.get(&scope) {
            Some(Entry::Done { digest: d, status, body }) if *d == digest => {
                let mut r = json_response(*status, body.clone());
                r.headers_mut().insert(REPLAYED_HEADER, HeaderValue::from_static("true"));
                return r;
            }
            Some(Entry::InFlight(d)) if *d == digest => {
                return ApiError::new(StatusCode::CONFLICT, "RequestInFlight", "a request with this idempotency key is still running")
                    .into_response();
            }
            Some(_) => {
                return ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "IdempotencyKeyReused",
                    "idempotency key was already used with a different request",
                )
                .into_response();
            }
            None => {
                guard.0.insert(scope.clone(), Entry::InFlight(digest));
            }
        }
    }

    let mut guard = InFlightGuard { idempotency: &app.idempotency, key: &scope, armed: true };
    let response = next.run(Request::from_parts(parts, Body::from(bytes))).await;
    let (parts, body) = response.into_parts();
    let body = match to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::internal(e.to_string()).into_response(),
    };
    guard.armed = false;
    app.idempotency.finish(&scope, digest, parts.status, body.clone());
    Response::from_parts(parts, Body::from(body))
}
