use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ApiErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub details: Option<Json>,
}

/// Every response body: `{"ok": true, "payload": ...}` or `{"ok": false, "error": ...}`.
#[derive(Debug, Serialize)]
#[serde(untagged)]
pub enum Envelope<T> {
    Ok { ok: bool, payload: T },
    Err { ok: bool, error: ApiErrorBody },
}

/// A successful response with its status code.
pub struct Reply<T>(pub StatusCode, pub T);

impl<T> Reply<T> {
    pub fn ok(payload: T) -> Self {
        Reply(StatusCode::OK, payload)
    }
}

impl<T: Serialize> IntoResponse for Reply<T> {
    fn into_response(self) -> Response {
        (self.0, axum::Json(Envelope::Ok { ok: true, payload: self.1 })).into_response()
    }
}

fn split_root(schema: schemars::Schema) -> (Json, Map<String, Json>) {
    let mut root = schema.to_value();
    let mut defs = Map::new();
    if let Some(obj) = root.as_object_mut() {
        obj.remove("$schema");
        if let Some(Json::Object(d)) = obj.remove("$defs") {
            defs = d;
        }
    }
    (root, defs)
}

/// JSON Schema of the envelope around a payload of type `T`.
pub fn envelope_schema<T: JsonSchema>() -> Json {
    let (payload, mut defs) = split_root(schemars::schema_for!(T));
    let (error, error_defs) = split_root(schemars::schema_for!(ApiErrorBody));
    defs.extend(error_defs);
    defs.insert("ApiErrorBody".into(), error);
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "oneOf": [
            {
                "type": "object",
                "properties": { "ok": { "const": true }, "payload": payload },
                "required": ["ok", "payload"],
                "additionalProperties": false
            },
            {
                "type": "object",
                "properties": { "ok": { "const": false }, "error": { "$ref": "#/$defs/ApiErrorBody" } },
                "required": ["ok", "error"],
                "additionalProperties": false
            }
        ],
        "$defs": defs
    })
}

/// JSON Schema of a request body of type `T`.
pub fn request_schema<T: JsonSchema>() -> Json {
    schemars::schema_for!(T).to_value()
}
