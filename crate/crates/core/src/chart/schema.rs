//! Offline validation against the bundled Vega-Lite v5 schema.
//!
//! The upstream schema uses definition names such as `Foo<(A|B)>`, which are
//! not valid URI references; definitions and `$ref`s are renamed to an escaped
//! form before compiling.

use std::sync::OnceLock;

use serde_json::{Map, Value as Json};

pub const VEGA_LITE_SCHEMA_URL: &str = "https://vega.github.io/schema/vega-lite/v5.json";
const SCHEMA_TEXT: &str = include_str!("../../schema/vega-lite-v5.json");
const DEFS: &str = "#/definitions/";

fn safe(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
            out.push(c);
        } else {
            out.push_str(&format!("_{:X}_", c as u32));
        }
    }
    out
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Some(b) = std::str::from_utf8(&bytes[i + 1..i + 3]).ok().and_then(|h| u8::from_str_radix(h, 16).ok()) {
                out.push(b);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8_lossy(&out).into_owned()
}

fn rewrite_refs(v: &mut Json) {
    match v {
        Json::Object(m) => {
            for (k, child) in m.iter_mut() {
                if k == "$ref" {
                    if let Some(name) = child.as_str().and_then(|r| r.strip_prefix(DEFS)) {
                        *child = Json::String(format!("{DEFS}{}", safe(&percent_decode(name))));
                    }
                } else {
                    rewrite_refs(child);
                }
            }
        }
        Json::Array(a) => a.iter_mut().for_each(rewrite_refs),
        _ => {}
    }
}

fn patched_schema() -> Json {
    let mut schema: Json = serde_json::from_str(SCHEMA_TEXT).expect("bundled schema is JSON");
    if let Some(Json::Object(defs)) = schema.get_mut("definitions") {
        let renamed: Map<String, Json> = std::mem::take(defs).into_iter().map(|(k, v)| (safe(&k), v)).collect();
        *defs = renamed;
    }
    rewrite_refs(&mut schema);
    schema
}

fn validator() -> &'static jsonschema::Validator {
    static V: OnceLock<jsonschema::Validator> = OnceLock::new();
    V.get_or_init(|| {
        jsonschema::options()
            .should_validate_formats(false)
            .build(&patched_schema())
            .expect("bundled schema compiles")
    })
}

/// Validates `doc` as a Vega-Lite v5 specification. Errors are rendered as
/// `path: message` lines.
pub fn validate_vega_lite(doc: &Json) -> Result<(), Vec<String>> {
    let errors: Vec<String> =
        validator().iter_errors(doc).map(|e| format!("{}: {}", e.instance_path(), e)).collect();
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn escaping() {
        assert_eq!(safe("ConditionalAxisProperty<(Align|null)>"), "ConditionalAxisProperty_3C__28_Align_7C_null_29__3E_");
        assert_eq!(percent_decode("a%3Cb%3E"), "a<b>");
    }

    #[test]
    fn accepts_and_rejects() {
        assert!(validate_vega_lite(&json!({"mark": "circle", "data": {"values": []}, "encoding": {"x": {"field": "a", "type": "quantitative"}}})).is_ok());
        assert!(validate_vega_lite(&json!({"mark": "circle", "encoding": {"x": {"field": "a", "type": "sideways"}}})).is_err());
        assert!(validate_vega_lite(&json!({"mark": "nonsense"})).is_err());
    }
}
