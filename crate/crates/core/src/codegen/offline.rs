//! Deterministic keyword rules standing in for a language model.

use crate::value::{infer_type, SemanticType};

use super::{BackendError, GenerationBackend, Origin};

/// Answers prompts from a small table of description keywords. Unknown
/// descriptions get no completions.
#[derive(Clone, Copy, Debug, Default)]
pub struct OfflineBackend;

impl GenerationBackend for OfflineBackend {
    fn complete(&self, prompt: &str, n: usize) -> Result<Vec<String>, BackendError> {
        let mut out = offline_generate(prompt);
        out.truncate(n);
        Ok(out)
    }

    fn origin(&self) -> Origin {
        Origin::Offline
    }
}

struct Param {
    name: String,
    ty: SemanticType,
}

struct Prompt {
    description: String,
    params: Vec<Param>,
    lists: Vec<String>,
}

fn read_prompt(prompt: &str) -> Option<Prompt> {
    let mut lines = prompt.lines();
    let description = lines.next()?.strip_prefix('#')?.trim().to_string();
    let header = prompt.lines().last()?.trim();
    let inner = header.strip_prefix("fn(")?.strip_suffix(") =")?;
    let names: Vec<String> = inner.split(',').map(|s| s.trim().to_string()).collect();
    let (scalars, lists) = match names.iter().position(|n| n == "index") {
        Some(i) => (names[..i].to_vec(), names[i + 1..].to_vec()),
        None => (names, Vec::new()),
    };
    let params = scalars
        .into_iter()
        .map(|name| {
            let tag = format!("# @param {name} examples:");
            let examples: Vec<String> = prompt
                .lines()
                .find_map(|l| l.strip_prefix(&tag))
                .map(|rest| rest.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                .unwrap_or_default();
            Param { ty: infer_type(&examples), name }
        })
        .collect();
    Some(Prompt { description, params, lists })
}

fn words(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric()).filter(|w| !w.is_empty()).map(str::to_lowercase).collect()
}

fn window_days(description: &str) -> Option<i64> {
    let lower = description.to_lowercase();
    let bytes = lower.as_bytes();
    let at = lower.find("-day").or_else(|| lower.find(" day"))?;
    let start = bytes[..at].iter().rposition(|b| !b.is_ascii_digit()).map_or(0, |p| p + 1);
    lower[start..at].parse().ok().filter(|&n: &i64| n > 0)
}

fn offset(delta: i64) -> String {
    match delta {
        0 => "index".into(),
        d if d < 0 => format!("index - {}", -d),
        d => format!("index + {d}"),
    }
}

/// Label for a parameter in a comparison: the description word it starts
/// with, or its first camel-case word capitalized.
fn label(p: &str, description: &str) -> String {
    let lower = p.to_lowercase();
    let from_description = description
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() >= 3)
        .find(|w| lower.starts_with(&w.to_lowercase()));
    let word = match from_description {
        Some(w) => w.to_string(),
        None => p.chars().take_while(|c| !c.is_uppercase()).collect(),
    };
    let mut cs = word.chars();
    let cap: String = cs.next().map(|c| c.to_uppercase().chain(cs).collect()).unwrap_or_default();
    cap.replace('\'', "''")
}

/// Completions for `prompt`, in rank order. The first matching rule wins.
pub fn offline_generate(prompt: &str) -> Vec<String> {
    let Some(p) = read_prompt(prompt) else { return Vec::new() };
    let w = words(&p.description);
    let has = |k: &[&str]| w.iter().any(|x| k.contains(&x.as_str()));
    let analytical = !p.lists.is_empty();
    let numeric: Vec<usize> = (0..p.params.len()).filter(|&i| p.params[i].ty.is_numeric()).collect();

    if has(&["moving", "rolling", "avg", "average", "mean"]) && analytical {
        if let (Some(n), Some(&i)) = (window_days(&p.description), numeric.first()) {
            let l = &p.lists[i];
            let trailing = format!("list_avg(slice({l}, {}, index + 1))", offset(1 - n));
            if has(&["center", "centered", "centred", "around", "surrounding"]) {
                let centered = format!("list_avg(slice({l}, {}, {}))", offset(-(n / 2)), offset(n - n / 2));
                return vec![centered, trailing];
            }
            return vec![trailing];
        }
        return Vec::new();
    }
    if has(&["diff", "difference", "minus", "subtract", "delta"]) && numeric.len() >= 2 {
        let (a, b) = (&p.params[numeric[0]].name, &p.params[numeric[1]].name);
        return vec![format!("{a} - {b}"), format!("abs({a} - {b})")];
    }
    if has(&["warmer", "hotter", "higher", "larger", "greater", "bigger"]) && numeric.len() >= 2 {
        let (a, b) = (&p.params[numeric[0]].name, &p.params[numeric[1]].name);
        let (la, lb) = (label(a, &p.description), label(b, &p.description));
        return vec![format!("if {a} > {b} then '{la}' else if {b} > {a} then '{lb}' else 'Same'")];
    }
    if let Some(d) = p.params.iter().find(|q| q.ty.is_temporal()) {
        let part = ["year", "month", "weekday", "day"].into_iter().find(|k| has(&[k]));
        if let Some(part) = part {
            return vec![format!("{part}({})", d.name)];
        }
    }
    if has(&["percentile", "rank"]) && analytical {
        if let Some(&i) = numeric.first() {
            return vec![format!("percentile_rank({}, {})", p.lists[i], p.params[i].name)];
        }
    }
    Vec::new()
}
