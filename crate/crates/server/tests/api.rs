use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use conceptviz::codegen::{BackendConfig, BackendKind, OfflineBackend};
use conceptviz_server::{router, schema_catalog, AppState, ServerConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value as Json};
use tower::ServiceExt;

const T0: &str = include_str!("../../../fixtures/t0.csv");

struct Harness {
    app: Router,
    catalog: Json,
}

struct Resp {
    status: StatusCode,
    body: Json,
    replayed: bool,
}

impl Resp {
    fn payload(&self) -> &Json {
        assert_eq!(self.body["ok"], json!(true), "expected success, got {}", self.body);
        &self.body["payload"]
    }

    fn code(&self) -> &str {
        self.body["error"]["code"].as_str().unwrap_or_else(|| panic!("expected error, got {}", self.body))
    }
}

fn config(dir: &std::path::Path) -> ServerConfig {
    ServerConfig { data_dir: dir.to_path_buf(), ..ServerConfig::default() }
}

impl Harness {
    fn new(cfg: ServerConfig) -> Harness {
        let state = AppState::with_backend(cfg, Arc::new(OfflineBackend)).unwrap();
        Harness { app: router(state), catalog: schema_catalog() }
    }

    async fn send(&self, route: &str, req: Request<Body>) -> Resp {
        let res = self.app.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let replayed = res.headers().contains_key("idempotent-replayed");
        let bytes = res.into_body().collect().await.unwrap().to_bytes();
        let body: Json = serde_json::from_slice(&bytes).unwrap_or_else(|_| panic!("non-json body: {bytes:?}"));
        let schema = &self.catalog[route]["response"];
        assert!(schema.is_object(), "no schema for {route}");
        let v = jsonschema::validator_for(schema).unwrap();
        let errors: Vec<String> = v.iter_errors(&body).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{route} response violates its schema: {errors:?}\n{body}");
        Resp { status, body, replayed }
    }

    async fn get(&self, route: &str, uri: &str) -> Resp {
        self.send(route, Request::get(uri).body(Body::empty()).unwrap()).await
    }

    async fn post(&self, route: &str, uri: &str, body: Json) -> Resp {
        let req = Request::post(uri).header("content-type", "application/json").body(Body::from(body.to_string())).unwrap();
        self.send(route, req).await
    }

    async fn upload(&self, csv: &str) -> Resp {
        let req = Request::post("/sessions?name=T0").header("content-type", "text/csv").body(Body::from(csv.to_string())).unwrap();
        self.send("POST /sessions", req).await
    }
}

fn concept_id(session: &Json, name: &str) -> String {
    session["shelf"]["concepts"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == name)
        .unwrap_or_else(|| panic!("no concept {name}"))["id"]
        .as_str()
        .unwrap()
        .to_string()
}

#[tokio::test]
async fn upload_creates_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(config(dir.path()));
    let a = h.upload(T0).await;
    assert_eq!(a.status, StatusCode::CREATED);
    let names: Vec<&str> = a.payload()["concepts"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["Date", "City", "Temperature"]);
    let b = h.upload(T0).await;
    assert_ne!(a.payload()["session"], b.payload()["session"]);

    let empty = h.upload("").await;
    assert_eq!((empty.status, empty.code()), (StatusCode::BAD_REQUEST, "MalformedInput"));
    let ragged = h.upload("a,b\n1,2,3\n").await;
    assert_eq!(ragged.status, StatusCode::BAD_REQUEST);

    let json_rows = Request::post("/sessions")
        .header("content-type", "application/json")
        .body(Body::from(r#"[{"x": 1, "y": "a"}, {"x": 2, "y": "b"}]"#))
        .unwrap();
    assert_eq!(h.send("POST /sessions", json_rows).await.status, StatusCode::CREATED);

    let listed = h.get("GET /sessions", "/sessions").await;
    assert_eq!(listed.payload().as_array().unwrap().len(), 3);
}

#[tokio::test]
async fn oversized_upload_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(ServerConfig { max_upload_bytes: 64, ..config(dir.path()) });
    let big = format!("a,b\n{}", "1,2\n".repeat(100));
    let r = h.upload(&big).await;
    assert_eq!((r.status, r.code()), (StatusCode::PAYLOAD_TOO_LARGE, "TooLarge"));
}

#[tokio::test]
async fn unknown_session_is_404() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(config(dir.path()));
    let r = h.get("GET /sessions/{id}", "/sessions/nope").await;
    assert_eq!((r.status, r.code()), (StatusCode::NOT_FOUND, "SessionNotFound"));
    let r = h.post("POST /sessions/{id}/formulate", "/sessions/nope/formulate", json!({"template": "scatter", "encodings": []})).await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
    let r = h.get("GET /sessions/{id}", "/sessions/..%2Fetc").await;
    assert_eq!(r.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn table_pages() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(config(dir.path()));
    let id = h.upload(T0).await.payload()["session"].as_str().unwrap().to_string();
    let route = "GET /sessions/{id}/table";
    let full = h.get(route, &format!("/sessions/{id}/table")).await;
    assert_eq!(full.payload()["limit"], 100);
    assert_eq!(full.payload()["total_rows"], 6);
    assert_eq!(full.payload()["table"]["rows"].as_array().unwrap().len(), 6);
    let page = h.get(route, &format!("/sessions/{id}/table?offset=4&limit=5")).await;
    assert_eq!(page.payload()["table"]["rows"].as_array().unwrap().len(), 2);
    let past = h.get(route, &format!("/sessions/{id}/table?offset=50")).await;
    assert_eq!(past.payload()["table"]["rows"], json!([]));
    let zero = h.get(route, &format!("/sessions/{id}/table?limit=0")).await;
    assert_eq!((zero.status, zero.code()), (StatusCode::UNPROCESSABLE_ENTITY, "InvalidParameter"));
}

#[tokio::test]
async fn pivot_scenario_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(config(dir.path()));
    let id = h.upload(T0).await.payload()["session"].as_str().unwrap().to_string();
    let custom = format!("/sessions/{id}/concepts/custom");
    let atl = h
        .post("POST /sessions/{id}/concepts/custom", &custom, json!({"name": "Atlanta Temp", "examples": [45, 47, 56, 41]}))
        .await;
    assert_eq!(atl.status, StatusCode::CREATED);
    assert_eq!(atl.payload()["resolution"]["state"], "unknown");
    h.post("POST /sessions/{id}/concepts/custom", &custom, json!({"name": "Seattle Temp", "examples": [51, 45, 48]})).await;
    let dup = h.post("POST /sessions/{id}/concepts/custom", &custom, json!({"name": "Seattle Temp", "examples": [1]})).await;
    assert_eq!((dup.status, dup.code()), (StatusCode::CONFLICT, "DuplicateName"));

    let session = h.get("GET /sessions/{id}", &format!("/sessions/{id}")).await.payload().clone();
    let chart = json!({
        "template": "scatter",
        "encodings": [
            {"channel": "x", "concept": concept_id(&session, "Seattle Temp")},
            {"channel": "y", "concept": concept_id(&session, "Atlanta Temp")}
        ]
    });
    let f = h.post("POST /sessions/{id}/formulate", &format!("/sessions/{id}/formulate"), chart.clone()).await;
    assert_eq!(f.status, StatusCode::OK);
    assert_eq!(f.payload()["status"], "needs-example-relation");
    assert_eq!(f.payload()["prefilled"], json!([[null, 45], [null, 47]]));

    let complete = format!("/sessions/{id}/formulate/complete");
    let typo = json!({"example": {"columns": ["Seattle Temp", "Atlanta Temp"], "rows": [[51, 45], [45, 477]]}});
    let r = h.post("POST /sessions/{id}/formulate/complete", &complete, typo).await;
    assert_eq!((r.status, r.code()), (StatusCode::UNPROCESSABLE_ENTITY, "NoProgram"));
    assert_eq!(r.body["error"]["details"]["unreachable"][0]["value"], "477");

    let example = json!({"example": {"columns": ["Seattle Temp", "Atlanta Temp"], "rows": [[51, 45], [45, 47]]}});
    let c = h.post("POST /sessions/{id}/formulate/complete", &complete, example).await;
    let top = &c.payload()["candidates"][0];
    assert_eq!(top["provenance"]["program"], r#"(pivot_wider (input) name_col="City" value_col="Temperature")"#);
    let cand = top["id"].as_str().unwrap().to_string();

    let save = format!("/sessions/{id}/charts/save");
    let saved = h.post("POST /sessions/{id}/charts/save", &save, json!({"candidate": cand})).await;
    assert_eq!(saved.status, StatusCode::CREATED);
    let again = h.post("POST /sessions/{id}/charts/save", &save, json!({"candidate": cand})).await;
    assert_eq!((again.status, again.code()), (StatusCode::CONFLICT, "StaleCandidate"));

    let session = h.get("GET /sessions/{id}", &format!("/sessions/{id}")).await.payload().clone();
    assert!(session["shelf"]["concepts"].as_array().unwrap().iter().all(|c| c["resolution"]["state"] == "known"));
    let again = h.post("POST /sessions/{id}/formulate", &format!("/sessions/{id}/formulate"), chart).await;
    assert_eq!(again.payload()["status"], "ready");

    let preview = h
        .post(
            "POST /sessions/{id}/derive/preview",
            &format!("/sessions/{id}/derive/preview"),
            json!({
                "sources": [concept_id(&session, "Seattle Temp"), concept_id(&session, "Atlanta Temp")],
                "description": "Calculate seattle atlanta temp diff",
                "name": "Difference"
            }),
        )
        .await;
    let cands = preview.payload()["candidates"].as_array().unwrap();
    assert_eq!(cands.len(), 2);
    let derive = format!("/sessions/{id}/concepts/derive");
    let sources = json!([concept_id(&session, "Seattle Temp"), concept_id(&session, "Atlanta Temp")]);
    let bad = h
        .post(
            "POST /sessions/{id}/concepts/derive",
            &derive,
            json!({"name": "Difference", "sources": sources, "description": "diff", "formula": "fn(a, b) = a -"}),
        )
        .await;
    assert_eq!((bad.status, bad.code()), (StatusCode::UNPROCESSABLE_ENTITY, "ParseError"));
    let ok = h
        .post(
            "POST /sessions/{id}/concepts/derive",
            &derive,
            json!({"name": "Difference", "sources": sources, "description": "diff", "formula": cands[0]["source_text"], "origin": "offline"}),
        )
        .await;
    assert_eq!(ok.status, StatusCode::CREATED);
    let page = h.get("GET /sessions/{id}/table", &format!("/sessions/{id}/table")).await;
    let cols: Vec<&str> = page.payload()["table"]["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert!(cols.contains(&"Difference"));
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let (id, before) = {
        let h = Harness::new(config(dir.path()));
        let id = h.upload(T0).await.payload()["session"].as_str().unwrap().to_string();
        h.post("POST /sessions/{id}/concepts/custom", &format!("/sessions/{id}/concepts/custom"), json!({"name": "Atlanta Temp", "examples": [45, 47]}))
            .await;
        let before = h.get("GET /sessions/{id}", &format!("/sessions/{id}")).await.payload().clone();
        (id, before)
    };
    let h = Harness::new(config(dir.path()));
    let after = h.get("GET /sessions/{id}", &format!("/sessions/{id}")).await;
    assert_eq!(after.payload(), &before);
    assert!(!dir.path().join(format!("{id}.json.tmp")).exists());
}

#[tokio::test]
async fn idempotency_keys_replay() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(config(dir.path()));
    let id = h.upload(T0).await.payload()["session"].as_str().unwrap().to_string();
    let uri = format!("/sessions/{id}/concepts/custom");
    let req = |body: Json| {
        Request::post(uri.as_str())
            .header("content-type", "application/json")
            .header("idempotency-key", "k-1")
            .body(Body::from(body.to_string()))
            .unwrap()
    };
    let route = "POST /sessions/{id}/concepts/custom";
    let body = json!({"name": "Atlanta Temp", "examples": [45, 47]});
    let first = h.send(route, req(body.clone())).await;
    let second = h.send(route, req(body)).await;
    assert_eq!(first.status, StatusCode::CREATED);
    assert_eq!((second.status, second.replayed), (StatusCode::CREATED, true));
    assert_eq!(first.body, second.body);
    let other = h.send(route, req(json!({"name": "Other", "examples": [1]}))).await;
    assert_eq!((other.status, other.code()), (StatusCode::UNPROCESSABLE_ENTITY, "IdempotencyKeyReused"));
    let session = h.get("GET /sessions/{id}", &format!("/sessions/{id}")).await;
    assert_eq!(session.payload()["shelf"]["concepts"].as_array().unwrap().len(), 4);
}

#[tokio::test]
async fn remote_backend_without_key_is_502() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ServerConfig {
        backend: BackendConfig { kind: BackendKind::Remote, api_key_env: "CONCEPTVIZ_TEST_UNSET_KEY".into(), ..BackendConfig::default() },
        ..config(dir.path())
    };
    let state = AppState::open(cfg.clone()).unwrap();
    let h = Harness { app: router(state), catalog: schema_catalog() };
    let id = h.upload(T0).await.payload()["session"].as_str().unwrap().to_string();
    let session = h.get("GET /sessions/{id}", &format!("/sessions/{id}")).await.payload().clone();
    let r = h
        .post(
            "POST /sessions/{id}/derive/preview",
            &format!("/sessions/{id}/derive/preview"),
            json!({"sources": [concept_id(&session, "Temperature")], "description": "double it", "name": "Double"}),
        )
        .await;
    assert_eq!((r.status, r.code()), (StatusCode::BAD_GATEWAY, "BackendUnavailable"));
}

#[tokio::test]
async fn malformed_bodies_are_400_and_unknown_routes_404() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(config(dir.path()));
    let id = h.upload(T0).await.payload()["session"].as_str().unwrap().to_string();
    let req = Request::post(format!("/sessions/{id}/formulate")).header("content-type", "application/json").body(Body::from("{")).unwrap();
    let r = h.send("POST /sessions/{id}/formulate", req).await;
    assert_eq!((r.status, r.code()), (StatusCode::BAD_REQUEST, "MalformedInput"));
    let res = h.app.clone().oneshot(Request::get("/nowhere").body(Body::empty()).unwrap()).await.unwrap();
    assert_eq!(res.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn cors_allow_list() {
    let dir = tempfile::tempdir().unwrap();
    let h = Harness::new(ServerConfig { cors_origins: vec!["http://localhost:5173".into()], ..config(dir.path()) });
    let preflight = |origin: &str| {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/sessions")
            .header("origin", origin)
            .header("access-control-request-method", "POST")
            .body(Body::empty())
            .unwrap()
    };
    let ok = h.app.clone().oneshot(preflight("http://localhost:5173")).await.unwrap();
    assert_eq!(ok.headers()["access-control-allow-origin"], "http://localhost:5173");
    let other = h.app.clone().oneshot(preflight("http://evil.example")).await.unwrap();
    assert!(!other.headers().contains_key("access-control-allow-origin"));
}

#[test]
fn published_schemas_are_current() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/api-schemas.json");
    let current = serde_json::to_string_pretty(&schema_catalog()).unwrap() + "\n";
    if std::env::var_os("UPDATE_SCHEMAS").is_some() {
        std::fs::write(path, &current).unwrap();
    }
    let published = std::fs::read_to_string(path).expect("docs/api-schemas.json exists; run with UPDATE_SCHEMAS=1");
    assert_eq!(published, current, "docs/api-schemas.json is out of date; rerun with UPDATE_SCHEMAS=1");
}
