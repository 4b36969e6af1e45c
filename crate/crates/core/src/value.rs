//! Cell values, semantic types and the type-inference ladder.

use std::cmp::Ordering;
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use schemars::JsonSchema;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A single table cell.
#[derive(Clone, Debug)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Date(NaiveDate),
    DateTime(NaiveDateTime),
}

/// Column types, ordered from most to least specific.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, JsonSchema,
)]
#[serde(rename_all = "lowercase")]
pub enum SemanticType {
    Boolean,
    Integer,
    Float,
    Date,
    Datetime,
    Text,
}

impl SemanticType {
    pub const ALL: [SemanticType; 6] = [
        SemanticType::Boolean,
        SemanticType::Integer,
        SemanticType::Float,
        SemanticType::Date,
        SemanticType::Datetime,
        SemanticType::Text,
    ];

    /// Least upper bound on the inference lattice.
    pub fn join(self, other: SemanticType) -> SemanticType {
        use SemanticType::*;
        match (self, other) {
            (a, b) if a == b => a,
            (Integer, Float) | (Float, Integer) => Float,
            (Date, Datetime) | (Datetime, Date) => Datetime,
            _ => Text,
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, SemanticType::Integer | SemanticType::Float)
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, SemanticType::Date | SemanticType::Datetime)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SemanticType::Boolean => "boolean",
            SemanticType::Integer => "integer",
            SemanticType::Float => "float",
            SemanticType::Date => "date",
            SemanticType::Datetime => "datetime",
            SemanticType::Text => "text",
        }
    }
}

impl fmt::Display for SemanticType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hashable normal form used for canonical equality.
///
/// Integral floats collapse onto integers, text is trimmed and re-read through
/// the scalar parser, and midnight datetimes collapse onto dates.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CanonicalKey {
    Null,
    Bool(bool),
    Int(i64),
    Float(u64),
    Text(String),
    Date(NaiveDate),
    DateTime(NaiveDateTime),
}

const NULL_TOKENS: [&str; 3] = ["", "null", "na"];

fn is_null_token(s: &str) -> bool {
    NULL_TOKENS.iter().any(|t| s.eq_ignore_ascii_case(t))
}

const DATETIME_FORMATS: [&str; 4] = [
    "%Y-%m-%dT%H:%M:%S%.f",
    "%Y-%m-%d %H:%M:%S%.f",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M",
];

fn parse_bool(s: &str) -> Option<bool> {
    if s.eq_ignore_ascii_case("true") {
        Some(true)
    } else if s.eq_ignore_ascii_case("false") {
        Some(false)
    } else {
        None
    }
}

fn parse_int(s: &str) -> Option<i64> {
    s.parse::<i64>().ok()
}

fn parse_float(s: &str) -> Option<f64> {
    // f64::from_str also accepts "inf" and "NaN"; those stay text.
    if !s.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse::<f64>().ok().filter(|f| f.is_finite())
}

fn parse_date(s: &str) -> Option<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .or_else(|_| NaiveDate::parse_from_str(s, "%m/%d/%Y"))
        .ok()
}

fn parse_datetime(s: &str) -> Option<NaiveDateTime> {
    DATETIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        .or_else(|| parse_date(s).map(|d| d.and_time(NaiveTime::MIN)))
}

/// Reads one raw cell: null tokens first, then the ladder
/// boolean → integer → float → date → datetime, falling back to text.
pub fn parse_cell(raw: &str) -> Value {
    let s = raw.trim();
    if is_null_token(s) {
        return Value::Null;
    }
    parse_non_null(s).unwrap_or_else(|| Value::Text(raw.to_string()))
}

fn parse_non_null(s: &str) -> Option<Value> {
    if let Some(b) = parse_bool(s) {
        return Some(Value::Bool(b));
    }
    // Every remaining ladder type needs a digit.
    if !s.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    if let Some(i) = parse_int(s) {
        return Some(Value::Int(i));
    }
    if let Some(f) = parse_float(s) {
        return Some(Value::Float(f));
    }
    // Date and datetime layouts all open with a digit or a year sign.
    if !matches!(s.as_bytes()[0], b'0'..=b'9' | b'+' | b'-') {
        return None;
    }
    if let Some(d) = parse_date(s) {
        return Some(Value::Date(d));
    }
    NaiveDateTime::parse_from_str(s, DATETIME_FORMATS[0])
        .ok()
        .or_else(|| {
            DATETIME_FORMATS[1..]
                .iter()
                .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
        })
        .map(Value::DateTime)
}

/// Reads a raw cell as a specific column type. `None` when it does not fit.
pub fn parse_as(raw: &str, ty: SemanticType) -> Option<Value> {
    let s = raw.trim();
    if is_null_token(s) {
        return Some(Value::Null);
    }
    match ty {
        SemanticType::Boolean => parse_bool(s).map(Value::Bool),
        SemanticType::Integer => parse_int(s).map(Value::Int),
        SemanticType::Float => parse_float(s).map(Value::Float),
        SemanticType::Date => parse_date(s).map(Value::Date),
        SemanticType::Datetime => parse_datetime(s).map(Value::DateTime),
        SemanticType::Text => Some(Value::Text(raw.to_string())),
    }
}

const LADDER_BITS: [(SemanticType, u8); 5] = [
    (SemanticType::Boolean, 1),
    (SemanticType::Integer, 2),
    (SemanticType::Float, 4),
    (SemanticType::Date, 8),
    (SemanticType::Datetime, 16),
];

fn parse_mask(s: &str) -> u8 {
    let mut mask = 0;
    if parse_bool(s).is_some() {
        mask |= 1;
    }
    if parse_int(s).is_some() {
        mask |= 2;
    }
    if parse_float(s).is_some() {
        mask |= 4;
    }
    if parse_date(s).is_some() {
        mask |= 8;
    }
    if parse_datetime(s).is_some() {
        mask |= 16;
    }
    mask
}

/// Most specific type every non-null value parses as; text when there is no evidence.
pub fn infer_type<S: AsRef<str>>(values: &[S]) -> SemanticType {
    let mut mask = u8::MAX;
    let mut seen = false;
    for v in values {
        let s = v.as_ref().trim();
        if is_null_token(s) {
            continue;
        }
        seen = true;
        mask &= parse_mask(s);
        if mask == 0 {
            return SemanticType::Text;
        }
    }
    if !seen {
        return SemanticType::Text;
    }
    LADDER_BITS
        .iter()
        .find(|(_, bit)| mask & bit != 0)
        .map(|(ty, _)| *ty)
        .unwrap_or(SemanticType::Text)
}

/// Infers a type from already-typed values (custom concept examples, formula outputs).
pub fn infer_value_type(values: &[Value]) -> SemanticType {
    let rendered: Vec<String> = values.iter().map(Value::render).collect();
    infer_type(&rendered)
}

impl Value {
    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    /// The narrowest semantic type holding this value; `None` for Null.
    pub fn semantic_type(&self) -> Option<SemanticType> {
        Some(match self {
            Value::Null => return None,
            Value::Bool(_) => SemanticType::Boolean,
            Value::Int(_) => SemanticType::Integer,
            Value::Float(_) => SemanticType::Float,
            Value::Text(_) => SemanticType::Text,
            Value::Date(_) => SemanticType::Date,
            Value::DateTime(_) => SemanticType::Datetime,
        })
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Text rendering that re-parses to an equal value under the ladder.
    pub fn render(&self) -> String {
        match self {
            Value::Null => String::new(),
            Value::Bool(b) => b.to_string(),
            Value::Int(i) => i.to_string(),
            Value::Float(f) => render_float(*f),
            Value::Text(s) => s.clone(),
            Value::Date(d) => d.format("%Y-%m-%d").to_string(),
            Value::DateTime(dt) => render_datetime(dt),
        }
    }

    /// Converts into `ty` when representable there. Any value is representable as text.
    pub fn coerce(&self, ty: SemanticType) -> Option<Value> {
        use SemanticType as T;
        match (self, ty) {
            (Value::Null, _) => Some(Value::Null),
            (Value::Bool(_), T::Boolean)
            | (Value::Int(_), T::Integer)
            | (Value::Float(_), T::Float)
            | (Value::Date(_), T::Date)
            | (Value::DateTime(_), T::Datetime)
            | (Value::Text(_), T::Text) => Some(self.clone()),
            (Value::Int(i), T::Float) => Some(Value::Float(*i as f64)),
            (Value::Float(f), T::Integer) if f.fract() == 0.0 && f.abs() < 9.0e15 => {
                Some(Value::Int(*f as i64))
            }
            (Value::Date(d), T::Datetime) => Some(Value::DateTime(d.and_time(NaiveTime::MIN))),
            (v, T::Text) => Some(Value::Text(v.render())),
            _ => None,
        }
    }

    pub fn canonical_key(&self) -> CanonicalKey {
        match self {
            Value::Null => CanonicalKey::Null,
            Value::Bool(b) => CanonicalKey::Bool(*b),
            Value::Int(i) => CanonicalKey::Int(*i),
            Value::Float(f) => float_key(*f),
            Value::Text(s) => {
                let t = s.trim();
                match parse_non_null(t) {
                    Some(v) => v.canonical_key(),
                    None => CanonicalKey::Text(t.to_string()),
                }
            }
            Value::Date(d) => CanonicalKey::Date(*d),
            Value::DateTime(dt) => {
                if dt.time() == NaiveTime::MIN {
                    CanonicalKey::Date(dt.date())
                } else {
                    CanonicalKey::DateTime(*dt)
                }
            }
        }
    }

    /// Canonical equality: `Int(5) ≡ Float(5.0)`, text compared trimmed.
    pub fn canonical_eq(&self, other: &Value) -> bool {
        self.canonical_key() == other.canonical_key()
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            Value::Null => serde_json::Value::Null,
            Value::Bool(b) => serde_json::Value::Bool(*b),
            Value::Int(i) => serde_json::Value::from(*i),
            Value::Float(f) => serde_json::Number::from_f64(*f)
                .map(serde_json::Value::Number)
                .unwrap_or(serde_json::Value::Null),
            other => serde_json::Value::String(other.render()),
        }
    }

    /// Reads a JSON scalar; strings go through the scalar parser.
    pub fn from_json(v: &serde_json::Value) -> Option<Value> {
        Some(match v {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(*b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => Value::Int(i),
                None => Value::Float(n.as_f64()?),
            },
            serde_json::Value::String(s) => parse_cell(s),
            _ => return None,
        })
    }

    /// Raw text the JSON scalar would have in a CSV file.
    pub(crate) fn json_raw(v: &serde_json::Value) -> Option<Option<String>> {
        match v {
            serde_json::Value::Null => Some(None),
            serde_json::Value::Bool(b) => Some(Some(b.to_string())),
            serde_json::Value::Number(n) => Some(Some(n.to_string())),
            serde_json::Value::String(s) => Some(Some(s.clone())),
            _ => None,
        }
    }
}

fn float_key(f: f64) -> CanonicalKey {
    if f.fract() == 0.0 && f >= i64::MIN as f64 && f < i64::MAX as f64 {
        CanonicalKey::Int(f as i64)
    } else {
        CanonicalKey::Float(f.to_bits())
    }
}

fn render_float(f: f64) -> String {
    if f.fract() == 0.0 && f.abs() < 1e15 {
        format!("{f:.1}")
    } else {
        format!("{f:?}")
    }
}

fn render_datetime(dt: &NaiveDateTime) -> String {
    if dt.nanosecond() == 0 {
        dt.format("%Y-%m-%dT%H:%M:%S").to_string()
    } else {
        dt.format("%Y-%m-%dT%H:%M:%S%.f").to_string()
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        self.canonical_eq(other)
    }
}

impl Eq for Value {}

impl std::hash::Hash for Value {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.canonical_key().hash(state)
    }
}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        compare_values(self, other)
    }
}

/// Ordering for comparisons in formulas: numbers with numbers, text with text,
/// temporal with temporal, booleans with booleans.
pub fn compare_values(a: &Value, b: &Value) -> Option<Ordering> {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => Some(x.cmp(y)),
        (Value::Bool(x), Value::Bool(y)) => Some(x.cmp(y)),
        (Value::Text(x), Value::Text(y)) => Some(x.trim().cmp(y.trim())),
        _ => {
            if let (Some(x), Some(y)) = (a.as_f64(), b.as_f64()) {
                return x.partial_cmp(&y);
            }
            let as_dt = |v: &Value| match v {
                Value::Date(d) => Some(d.and_time(NaiveTime::MIN)),
                Value::DateTime(dt) => Some(*dt),
                _ => None,
            };
            match (as_dt(a), as_dt(b)) {
                (Some(x), Some(y)) => Some(x.cmp(&y)),
                _ => None,
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            other => f.write_str(&other.render()),
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Value {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = serde_json::Value::deserialize(deserializer)?;
        Value::from_json(&raw).ok_or_else(|| serde::de::Error::custom("cell must be a JSON scalar"))
    }
}

impl JsonSchema for Value {
    fn schema_name() -> std::borrow::Cow<'static, str> {
        "Value".into()
    }

    fn json_schema(_: &mut schemars::SchemaGenerator) -> schemars::Schema {
        schemars::json_schema!({
            "description": "A cell: null, boolean, number, or string (dates as ISO-8601 strings)",
            "type": ["null", "boolean", "number", "string"]
        })
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::Text(v.to_string())
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ladder_examples() {
        assert_eq!(infer_type(&["51", "45", "48"]), SemanticType::Integer);
        assert_eq!(infer_type(&["2020-01-01", "2020-01-02"]), SemanticType::Date);
        assert_eq!(infer_type(&["51", "6.5"]), SemanticType::Float);
        assert_eq!(infer_type(&["51", "abc"]), SemanticType::Text);
        assert_eq!(infer_type::<&str>(&[]), SemanticType::Text);
        assert_eq!(infer_type(&["", "NA", "null"]), SemanticType::Text);
        assert_eq!(infer_type(&["true", "FALSE"]), SemanticType::Boolean);
        assert_eq!(infer_type(&["true", "1"]), SemanticType::Text);
        assert_eq!(infer_type(&["01/01/2020", "2020-01-02"]), SemanticType::Date);
        assert_eq!(
            infer_type(&["2020-01-01", "2020-01-01T10:30:00"]),
            SemanticType::Datetime
        );
        assert_eq!(infer_type(&["inf", "NaN"]), SemanticType::Text);
    }

    #[test]
    fn null_tokens_ingest_as_null() {
        assert!(parse_cell("").is_null());
        assert!(parse_cell(" NA ").is_null());
        assert!(parse_cell("Null").is_null());
        assert!(!parse_cell("N/A").is_null());
    }

    #[test]
    fn slash_dates_normalize_to_iso() {
        let v = parse_cell("01/02/2020");
        assert_eq!(v.render(), "2020-01-02");
        assert!(matches!(v, Value::Date(_)));
    }

    #[test]
    fn canonical_equality_rules() {
        assert_eq!(Value::Int(5), Value::Float(5.0));
        assert_eq!(Value::from(" Seattle "), Value::from("Seattle"));
        assert_ne!(Value::Int(5), Value::Float(5.5));
        assert_eq!(Value::Text("51".into()), Value::Int(51));
        assert_ne!(Value::Null, Value::Text(String::new()));
        let d = parse_cell("2020-01-01");
        assert_eq!(d, parse_cell("2020-01-01T00:00:00"));
    }

    #[test]
    fn float_rendering_reparses_as_float() {
        assert_eq!(Value::Float(5.0).render(), "5.0");
        assert!(matches!(parse_cell(&Value::Float(5.0).render()), Value::Float(_)));
        assert_eq!(Value::Float(0.1).render(), "0.1");
    }

    #[test]
    fn join_is_lattice_lub() {
        use SemanticType::*;
        assert_eq!(Integer.join(Float), Float);
        assert_eq!(Date.join(Datetime), Datetime);
        assert_eq!(Integer.join(Date), Text);
        assert_eq!(Boolean.join(Integer), Text);
    }

    fn raw_cell() -> impl Strategy<Value = String> {
        prop_oneof![
            Just(String::new()),
            any::<bool>().prop_map(|b| b.to_string()),
            any::<i32>().prop_map(|i| i.to_string()),
            (-1000.0f64..1000.0).prop_map(|f| f.to_string()),
            (2000i32..2030, 1u32..13, 1u32..29)
                .prop_map(|(y, m, d)| format!("{y:04}-{m:02}-{d:02}")),
            (2000i32..2030, 1u32..13, 1u32..29, 0u32..24)
                .prop_map(|(y, m, d, h)| format!("{y:04}-{m:02}-{d:02}T{h:02}:15:00")),
            "[a-z]{1,6}",
        ]
    }

    proptest! {
        #[test]
        fn inference_is_monotone(values in prop::collection::vec(raw_cell(), 0..8), extra in raw_cell()) {
            prop_assume!(values.iter().any(|v| !is_null_token(v)));
            let before = infer_type(&values);
            let mut more = values.clone();
            more.push(extra);
            let after = infer_type(&more);
            prop_assert_eq!(before.join(after), after);
        }

        #[test]
        fn int_float_equivalence(k in -1_000_000i64..1_000_000) {
            prop_assert_eq!(Value::Int(k), Value::Float(k as f64));
            prop_assert_eq!(Value::Int(k).canonical_key(), Value::Float(k as f64).canonical_key());
        }

        #[test]
        fn canonical_equality_is_equivalence(a in raw_cell(), b in raw_cell(), c in raw_cell()) {
            let (a, b, c) = (parse_cell(&a), parse_cell(&b), parse_cell(&c));
            prop_assert!(a == a);
            prop_assert_eq!(a == b, b == a);
            if a == b && b == c {
                prop_assert!(a == c);
            }
        }

        #[test]
        fn render_reparses_equal(raw in raw_cell()) {
            let v = parse_cell(&raw);
            prop_assert_eq!(parse_cell(&v.render()), v);
        }
    }
}
