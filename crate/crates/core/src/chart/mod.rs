//! Chart templates and Vega-Lite assembly.
//!
//! A template is a Vega-Lite skeleton in which channel slots are the strings
//! `{{channel:<name>}}`. Assembly replaces each slot with a field definition
//! and drops slots left empty.

mod schema;

use std::collections::HashSet;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::concept::DataConcept;
use crate::table::Table;
use crate::value::SemanticType;

pub use schema::{validate_vega_lite, VEGA_LITE_SCHEMA_URL};

pub const CHANNELS: [&str; 8] = ["x", "y", "x2", "y2", "color", "size", "column", "row"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum Aggregate {
    Count,
    Sum,
    Avg,
    Median,
    Min,
    Max,
}

impl Aggregate {
    pub const ALL: [Aggregate; 6] =
        [Aggregate::Count, Aggregate::Sum, Aggregate::Avg, Aggregate::Median, Aggregate::Min, Aggregate::Max];

    fn vega_name(self) -> &'static str {
        match self {
            Aggregate::Count => "count",
            Aggregate::Sum => "sum",
            Aggregate::Avg => "mean",
            Aggregate::Median => "median",
            Aggregate::Min => "min",
            Aggregate::Max => "max",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum ChannelType {
    Quantitative,
    Temporal,
    Nominal,
    Ordinal,
}

impl ChannelType {
    fn as_str(self) -> &'static str {
        match self {
            ChannelType::Quantitative => "quantitative",
            ChannelType::Temporal => "temporal",
            ChannelType::Nominal => "nominal",
            ChannelType::Ordinal => "ordinal",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ChannelSpec {
    pub name: String,
    pub required: bool,
    pub aggregates: Vec<Aggregate>,
    /// Definition used when the channel is not encoded, e.g. a histogram's count axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed: Option<Json>,
    /// Properties merged into the channel's field definition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extra: Option<Map<String, Json>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ChartTemplate {
    pub id: String,
    pub skeleton: Json,
    pub channels: Vec<ChannelSpec>,
}

impl ChartTemplate {
    pub fn channel(&self, name: &str) -> Option<&ChannelSpec> {
        self.channels.iter().find(|c| c.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
pub struct Encoding {
    pub channel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub concept: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregate: Option<Aggregate>,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    pub type_override: Option<ChannelType>,
}

impl Encoding {
    pub fn field(channel: &str, concept: &str) -> Encoding {
        Encoding { channel: channel.into(), concept: Some(concept.into()), aggregate: None, type_override: None }
    }

    pub fn aggregated(channel: &str, concept: Option<&str>, aggregate: Aggregate) -> Encoding {
        Encoding { channel: channel.into(), concept: concept.map(Into::into), aggregate: Some(aggregate), type_override: None }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("unknown chart template `{0}`")]
    UnknownTemplate(String),
    #[error("required channel `{0}` is not encoded")]
    MissingRequiredChannel(String),
    #[error("template has no channel `{0}`")]
    UnknownChannel(String),
    #[error("concept `{0}` is not bound to a column")]
    UnknownConceptInEncoding(String),
    #[error("column `{0}` is not in the table")]
    FieldNotInTable(String),
    #[error("`{aggregate:?}` needs a quantitative field but `{field}` is not")]
    AggregateOnNonQuantitative { field: String, aggregate: Aggregate },
    #[error("invalid encoding: {0}")]
    InvalidEncoding(String),
    #[error("invalid template: {0}")]
    InvalidTemplate(String),
    #[error("document violates the Vega-Lite schema: {}", .0.join("; "))]
    SchemaViolation(Vec<String>),
}

pub fn channel_type_of(ty: SemanticType) -> ChannelType {
    match ty {
        SemanticType::Date | SemanticType::Datetime => ChannelType::Temporal,
        SemanticType::Integer | SemanticType::Float => ChannelType::Quantitative,
        SemanticType::Boolean | SemanticType::Text => ChannelType::Nominal,
    }
}

pub fn infer_channel_type(concept: &DataConcept) -> ChannelType {
    channel_type_of(concept.semantic_type)
}

fn slot(channel: &str) -> Json {
    Json::String(format!("{{{{channel:{channel}}}}}"))
}

fn slot_name(s: &str) -> Option<&str> {
    s.strip_prefix("{{channel:")?.strip_suffix("}}")
}

fn ch(name: &str, required: bool) -> ChannelSpec {
    let aggregates = if matches!(name, "x" | "y" | "color" | "size") { Aggregate::ALL.to_vec() } else { Vec::new() };
    ChannelSpec { name: name.into(), required, aggregates, fixed: None, extra: None }
}

fn template(id: &str, mark: Json, channels: Vec<ChannelSpec>) -> ChartTemplate {
    let encoding: Map<String, Json> = channels.iter().map(|c| (c.name.clone(), slot(&c.name))).collect();
    ChartTemplate { id: id.into(), skeleton: json!({ "mark": mark, "encoding": encoding }), channels }
}

/// The built-in templates, in display order.
pub fn list_templates() -> Vec<ChartTemplate> {
    let xy = |extra: Vec<ChannelSpec>| {
        let mut v = vec![ch("x", true), ch("y", true)];
        v.extend(extra);
        v
    };
    let mut layered_y = ch("y", true);
    layered_y.extra = Some(json!({ "stack": null }).as_object().cloned().unwrap_or_default());
    let mut count_y = ChannelSpec { aggregates: vec![Aggregate::Count], ..ch("y", false) };
    count_y.fixed = Some(json!({ "aggregate": "count" }));

    let ranged = ChartTemplate {
        id: "ranged-dot".into(),
        skeleton: json!({
            "encoding": { "x": slot("x"), "color": slot("color") },
            "layer": [
                { "mark": "rule", "encoding": { "y": slot("y"), "y2": slot("y2") } },
                { "mark": "circle", "encoding": { "y": slot("y") } },
                { "mark": "circle", "encoding": { "y": slot("y2") } }
            ]
        }),
        channels: vec![ch("x", true), ch("y", true), ch("y2", true), ch("color", false)],
    };

    vec![
        template("scatter", json!("circle"), xy(vec![ch("color", false), ch("size", false)])),
        template("bubble", json!("circle"), xy(vec![ch("size", true), ch("color", false)])),
        ranged,
        template("bar", json!("bar"), xy(vec![ch("color", false)])),
        template("stacked-bar", json!("bar"), xy(vec![ch("color", true)])),
        template("layered-bar", json!({ "type": "bar", "opacity": 0.6 }), vec![ch("x", true), layered_y, ch("color", true)]),
        template("grouped-bar", json!("bar"), xy(vec![ch("color", true), ch("column", true)])),
        template("histogram", json!("bar"), vec![ch("x", true), count_y, ch("color", false)]),
        template("line", json!("line"), xy(vec![ch("color", false)])),
        template("line-with-dots", json!({ "type": "line", "point": true }), xy(vec![ch("color", false)])),
        template("heatmap", json!("rect"), xy(vec![ch("color", true)])),
        template("custom", json!("point"), CHANNELS.iter().map(|c| ch(c, false)).collect()),
    ]
}

pub fn find_template<'a>(id: &str, custom: &'a [ChartTemplate]) -> Option<ChartTemplate> {
    list_templates().into_iter().find(|t| t.id == id).or_else(|| custom.iter().find(|t| t.id == id).cloned())
}

fn collect_slots(v: &Json, out: &mut Vec<String>, bad: &mut Vec<String>) {
    match v {
        Json::String(s) => {
            if let Some(name) = slot_name(s) {
                if CHANNELS.contains(&name) {
                    if !out.iter().any(|o| o == name) {
                        out.push(name.to_string());
                    }
                } else {
                    bad.push(name.to_string());
                }
            } else if s.contains("{{channel:") {
                bad.push(s.clone());
            }
        }
        Json::Array(a) => a.iter().for_each(|x| collect_slots(x, out, bad)),
        Json::Object(m) => m.values().for_each(|x| collect_slots(x, out, bad)),
        _ => {}
    }
}

/// Turns a Vega-Lite document with `{{channel:<name>}}` slots into a template
/// whose every slot is a required channel.
pub fn register_custom_template(doc: &str) -> Result<ChartTemplate, ChartError> {
    let skeleton: Json = serde_json::from_str(doc).map_err(|e| ChartError::InvalidTemplate(e.to_string()))?;
    if !skeleton.is_object() {
        return Err(ChartError::InvalidTemplate("template must be a JSON object".into()));
    }
    let (mut names, mut bad) = (Vec::new(), Vec::new());
    collect_slots(&skeleton, &mut names, &mut bad);
    if let Some(b) = bad.first() {
        return Err(ChartError::InvalidTemplate(format!("unsupported placeholder `{b}`")));
    }
    if names.is_empty() {
        return Err(ChartError::InvalidTemplate("no {{channel:<name>}} placeholders".into()));
    }
    // FNV-1a, so the same document always gets the same id.
    let hash = doc.bytes().fold(0xcbf29ce484222325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100000001b3));
    Ok(ChartTemplate {
        id: format!("custom-{:08x}", hash as u32),
        skeleton,
        channels: names.iter().map(|n| ch(n, true)).collect(),
    })
}

fn fill(v: &Json, defs: &Map<String, Json>) -> Option<Json> {
    match v {
        Json::String(s) => match slot_name(s) {
            Some(name) => defs.get(name).cloned(),
            None => Some(v.clone()),
        },
        Json::Array(a) => Some(Json::Array(a.iter().filter_map(|x| fill(x, defs)).collect())),
        Json::Object(m) => Some(Json::Object(m.iter().filter_map(|(k, x)| fill(x, defs).map(|y| (k.clone(), y))).collect())),
        _ => Some(v.clone()),
    }
}

fn field_def(
    template: &ChartTemplate,
    spec: &ChannelSpec,
    e: &Encoding,
    concepts: &[DataConcept],
    t: &Table,
) -> Result<Json, ChartError> {
    if let Some(a) = e.aggregate {
        if !spec.aggregates.contains(&a) {
            return Err(ChartError::InvalidEncoding(format!("channel `{}` does not take `{a:?}`", e.channel)));
        }
    }
    let Some(id) = &e.concept else {
        return match e.aggregate {
            Some(Aggregate::Count) => Ok(json!({ "aggregate": "count" })),
            _ => Err(ChartError::InvalidEncoding(format!("channel `{}` needs a concept", e.channel))),
        };
    };
    if e.aggregate == Some(Aggregate::Count) || spec.fixed.is_some() {
        return Err(ChartError::InvalidEncoding(format!("channel `{}` counts records and takes no concept", e.channel)));
    }
    let concept = concepts.iter().find(|c| &c.id == id).ok_or_else(|| ChartError::UnknownConceptInEncoding(id.clone()))?;
    let field = concept.column().ok_or_else(|| ChartError::UnknownConceptInEncoding(concept.name.clone()))?;
    let column = t.column(field).ok_or_else(|| ChartError::FieldNotInTable(field.to_string()))?;
    let inferred = channel_type_of(column.ty);
    if let Some(a) = e.aggregate {
        if inferred != ChannelType::Quantitative {
            return Err(ChartError::AggregateOnNonQuantitative { field: field.to_string(), aggregate: a });
        }
    }
    let mut def = Map::new();
    def.insert("field".into(), json!(field));
    let secondary = matches!(e.channel.as_str(), "x2" | "y2");
    match e.type_override {
        Some(ty) if !secondary => {
            def.insert("type".into(), json!(ty.as_str()));
        }
        None if !secondary && inferred != ChannelType::Nominal => {
            def.insert("type".into(), json!(inferred.as_str()));
        }
        _ => {}
    }
    if let Some(a) = e.aggregate {
        def.insert("aggregate".into(), json!(a.vega_name()));
    }
    let quantitative = e.type_override.unwrap_or(inferred) == ChannelType::Quantitative;
    if template.id == "histogram" && e.channel == "x" && quantitative {
        def.insert("bin".into(), json!(true));
    }
    if let Some(extra) = &spec.extra {
        def.extend(extra.clone());
    }
    Ok(Json::Object(def))
}

/// Builds a Vega-Lite document for `t`. Concept fields are the columns the
/// concepts are bound to; the document carries the table inline.
pub fn assemble_spec(
    template: &ChartTemplate,
    encodings: &[Encoding],
    concepts: &[DataConcept],
    t: &Table,
) -> Result<Json, ChartError> {
    let mut seen = HashSet::new();
    let mut defs = Map::new();
    for e in encodings {
        let spec = template.channel(&e.channel).ok_or_else(|| ChartError::UnknownChannel(e.channel.clone()))?;
        if !seen.insert(e.channel.as_str()) {
            return Err(ChartError::InvalidEncoding(format!("channel `{}` is encoded twice", e.channel)));
        }
        defs.insert(e.channel.clone(), field_def(template, spec, e, concepts, t)?);
    }
    for spec in &template.channels {
        if defs.contains_key(&spec.name) {
            continue;
        }
        if let Some(f) = &spec.fixed {
            defs.insert(spec.name.clone(), f.clone());
        } else if spec.required {
            return Err(ChartError::MissingRequiredChannel(spec.name.clone()));
        }
    }
    let body = fill(&template.skeleton, &defs).unwrap_or(Json::Null);
    let mut doc = Map::new();
    doc.insert("$schema".into(), json!(VEGA_LITE_SCHEMA_URL));
    doc.insert("data".into(), json!({ "values": t.to_json_rows() }));
    if let Json::Object(m) = body {
        doc.extend(m);
    }
    let doc = Json::Object(doc);
    validate_vega_lite(&doc).map_err(ChartError::SchemaViolation)?;
    Ok(doc)
}

/// `mark`, plus `field`/`type` of each encoding channel; the parts of a
/// document that determine what is drawn from which column.
pub fn projection(doc: &Json) -> Json {
    let mut enc = Map::new();
    if let Some(m) = doc.get("encoding").and_then(Json::as_object) {
        for (k, v) in m {
            let mut p = Map::new();
            for key in ["field", "type"] {
                if let Some(x) = v.get(key) {
                    p.insert(key.into(), x.clone());
                }
            }
            enc.insert(k.clone(), Json::Object(p));
        }
    }
    json!({ "mark": doc.get("mark").cloned().unwrap_or(Json::Null), "encoding": enc })
}
