//! Tolerant extraction of `"key": value` answers from model text.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::LmError;
use crate::geom::{Coord, Octant};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParsedDecision {
    pub action: Option<Octant>,
    pub yes_or_no: Option<bool>,
    pub new_plan: Option<Vec<String>>,
    pub current_state: Option<String>,
    /// Every other key, verbatim.
    pub extra: BTreeMap<String, String>,
}

impl ParsedDecision {
    pub fn is_empty(&self) -> bool {
        self.action.is_none()
            && self.yes_or_no.is_none()
            && self.new_plan.is_none()
            && self.current_state.is_none()
            && self.extra.is_empty()
    }

    /// 1-based step number from a `current_state` like "Step 2".
    pub fn current_step(&self) -> Option<usize> {
        let s = self.current_state.as_deref()?;
        let re = digits_re();
        re.find(s)?.as_str().parse().ok()
    }
}

fn key_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r#"["']([A-Za-z][A-Za-z0-9_ ]{0,40})["']\s*:"#).expect("static regex")
    })
}

fn digits_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").expect("static regex"))
}

fn direction_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\b(north[\s-]?east|north[\s-]?west|south[\s-]?east|south[\s-]?west|north|south|east|west)\b")
            .expect("static regex")
    })
}

fn coord_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"\(\s*(-?\d+(?:\.\d+)?)\s*,\s*(-?\d+(?:\.\d+)?)\s*\)").expect("static regex")
    })
}

/// First direction word in free text, e.g. "walk('East')" gives East.
pub fn find_direction(text: &str) -> Option<Octant> {
    if let Some(o) = Octant::parse_loose(text) {
        return Some(o);
    }
    direction_re()
        .find(text)
        .and_then(|m| Octant::parse_loose(m.as_str()))
}

/// First "(x, y)" pair in free text.
pub fn find_coord(text: &str) -> Option<Coord> {
    let cap = coord_re().captures(text)?;
    Some(Coord::new(cap[1].parse().ok()?, cap[2].parse().ok()?))
}

fn strip_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

fn normalize_key(k: &str) -> String {
    k.trim().to_string()
}

/// Decodes one raw value: a JSON string, a quoted string, a list, or bare text.
fn decode_value(raw: &str) -> RawValue {
    let v = raw
        .trim()
        .trim_end_matches(|c: char| c == ',' || c == '}' || c.is_whitespace())
        .trim();
    if v.starts_with('[') {
        if let Ok(items) = serde_json::from_str::<Vec<String>>(v) {
            return RawValue::List(items);
        }
        let inner = v.trim_start_matches('[').trim_end_matches(']');
        let items = split_quoted(inner);
        if !items.is_empty() {
            return RawValue::List(items);
        }
    }
    if v.starts_with('"') {
        if let Ok(s) = serde_json::from_str::<String>(v) {
            return RawValue::Text(s);
        }
    }
    let unq = v
        .strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .or_else(|| v.strip_prefix('\'').and_then(|s| s.strip_suffix('\'')))
        .unwrap_or(v);
    RawValue::Text(unq.replace("\\'", "'").replace("\\\"", "\""))
}

/// Items of a single- or double-quoted list body.
fn split_quoted(inner: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r#"'((?:[^'\\]|\\.)*)'|"((?:[^"\\]|\\.)*)""#).expect("static regex")
    });
    re.captures_iter(inner)
        .map(|c| {
            c.get(1)
                .or_else(|| c.get(2))
                .map(|m| m.as_str().replace("\\'", "'").replace("\\\"", "\""))
                .unwrap_or_default()
        })
        .collect()
}

enum RawValue {
    Text(String),
    List(Vec<String>),
}

impl RawValue {
    fn into_text(self) -> String {
        match self {
            RawValue::Text(s) => s,
            RawValue::List(items) => items.join(" "),
        }
    }
}

/// Splits "1. Do a. 2. Do b." into numbered steps; unnumbered text stays whole.
fn split_numbered(text: &str) -> Vec<String> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?:^|\s)(\d+)\.\s").expect("static regex"));
    let starts: Vec<usize> = re
        .find_iter(text)
        .map(|m| m.start() + (m.as_str().len() - m.as_str().trim_start().len()))
        .collect();
    if starts.len() < 2 {
        return vec![text.trim().to_string()];
    }
    let mut out = Vec::new();
    if starts[0] > 0 && !text[..starts[0]].trim().is_empty() {
        out.push(text[..starts[0]].trim().to_string());
    }
    for (i, &s) in starts.iter().enumerate() {
        let e = starts.get(i + 1).copied().unwrap_or(text.len());
        out.push(text[s..e].trim().trim_end_matches(';').trim().to_string());
    }
    out
}

fn parse_yes_no(s: &str) -> Option<bool> {
    let t = s.trim().trim_matches(|c: char| !c.is_ascii_alphabetic()).to_ascii_lowercase();
    if t.starts_with("yes") || t == "true" {
        Some(true)
    } else if t.starts_with("no") || t == "false" {
        Some(false)
    } else {
        None
    }
}

fn assign(d: &mut ParsedDecision, key: String, value: RawValue) {
    match key.as_str() {
        "action" => {
            let text = value.into_text();
            match find_direction(&text) {
                Some(o) => d.action = Some(o),
                None => {
                    d.extra.insert(key, text);
                }
            }
        }
        "yes_or_no" => {
            let text = value.into_text();
            match parse_yes_no(&text) {
                Some(b) => d.yes_or_no = Some(b),
                None => {
                    d.extra.insert(key, text);
                }
            }
        }
        "new_plan" => {
            let steps = match value {
                RawValue::List(items) if items.len() == 1 => split_numbered(&items[0]),
                RawValue::List(items) => items,
                RawValue::Text(s) => split_numbered(&s),
            };
            d.new_plan = Some(steps.into_iter().filter(|s| !s.is_empty()).collect());
        }
        "current_state" => d.current_state = Some(value.into_text()),
        _ => {
            d.extra.insert(key, value.into_text());
        }
    }
}

fn from_json(v: serde_json::Value) -> Option<ParsedDecision> {
    let obj = v.as_object()?;
    let mut d = ParsedDecision::default();
    for (k, v) in obj {
        let raw = match v {
            serde_json::Value::String(s) => RawValue::Text(s.clone()),
            serde_json::Value::Array(items) => RawValue::List(
                items
                    .iter()
                    .map(|i| i.as_str().map(str::to_string).unwrap_or_else(|| i.to_string()))
                    .collect(),
            ),
            serde_json::Value::Bool(b) => RawValue::Text(if *b { "Yes" } else { "No" }.into()),
            other => RawValue::Text(other.to_string()),
        };
        assign(&mut d, normalize_key(k), raw);
    }
    Some(d)
}

/// Extracts known keys from a model reply.
///
/// Accepts a JSON object, or `"key": value` lines in any order with code
/// fences, single quotes and surrounding prose.
pub fn parse_decision(text: &str) -> Result<ParsedDecision, LmError> {
    let body = strip_fences(text);
    let trimmed = body.trim();
    if let Some(start) = trimmed.find('{') {
        if let Some(end) = trimmed.rfind('}') {
            if let Ok(v) = serde_json::from_str::<serde_json::Value>(&trimmed[start..=end]) {
                if let Some(d) = from_json(v) {
                    if !d.is_empty() {
                        return Ok(d);
                    }
                }
            }
        }
    }

    let keys: Vec<(usize, usize, String)> = key_re()
        .captures_iter(&body)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            (m.start(), m.end(), normalize_key(&c[1]))
        })
        .collect();
    if keys.is_empty() {
        return Err(LmError::Parse(format!(
            "no recognizable key in reply: {}",
            text.chars().take(120).collect::<String>()
        )));
    }
    let mut d = ParsedDecision::default();
    for (i, (_, end, key)) in keys.iter().enumerate() {
        let stop = keys.get(i + 1).map(|k| k.0).unwrap_or(body.len());
        assign(&mut d, key.clone(), decode_value(&body[*end..stop]));
    }
    Ok(d)
}

/// Canonical key-line rendering; [`parse_decision`] inverts it.
pub fn render_decision(d: &ParsedDecision) -> String {
    let q = |s: &str| serde_json::to_string(s).expect("string serializes");
    let mut lines = Vec::new();
    if let Some(s) = &d.current_state {
        lines.push(format!("\"current_state\": {}", q(s)));
    }
    if let Some(b) = d.yes_or_no {
        lines.push(format!("\"yes_or_no\": {}", q(if b { "Yes" } else { "No" })));
    }
    if let Some(p) = &d.new_plan {
        let list = serde_json::to_string(p).expect("list serializes");
        lines.push(format!("\"new_plan\": {list}"));
    }
    for (k, v) in &d.extra {
        lines.push(format!("{}: {}", q(k), q(v)));
    }
    if let Some(a) = d.action {
        lines.push(format!("\"action\": {}", q(a.word())));
    }
    lines.join("\n")
}
