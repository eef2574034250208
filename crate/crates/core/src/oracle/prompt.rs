use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

use regex::Regex;

use super::confidence::ConfidenceVector;
use crate::corpus::ClassSet;
use crate::error::{LaftError, Result};

pub const ANSWER_INSTRUCTION: &str =
    "Answer with exactly one line per label in the form `label: confidence`.";

/// Query prompt for one text. The class list keeps the class-set order.
pub fn build_prompt(text: &str, classes: &ClassSet) -> String {
    format!(
        "Classify the following content: {text}. Select the label from {} and output a confidence value for each of them.\n{ANSWER_INSTRUCTION}",
        classes.names().join(", ")
    )
}

fn class_pattern(name: &str) -> Regex {
    static COMPILED: OnceLock<Mutex<HashMap<String, Regex>>> = OnceLock::new();
    let mut map = COMPILED.get_or_init(Default::default).lock().expect("regex cache lock");
    map.entry(name.to_string())
        .or_insert_with(|| {
            let pattern = format!(
                r"(?im)(?:^|[^\w.]){}\s*[:=]\s*(-?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)",
                regex::escape(name)
            );
            Regex::new(&pattern).expect("escaped class name forms a valid pattern")
        })
        .clone()
}

/// Read one `name: value` pair per class (case-insensitive names). Missing
/// classes get 0 and the result is renormalized.
pub fn parse_response(raw: &str, classes: &ClassSet) -> Result<ConfidenceVector> {
    let mut values = Vec::with_capacity(classes.len());
    let mut matched = 0usize;
    for name in classes.names() {
        let re = class_pattern(name);
        match re.captures(raw) {
            Some(caps) => {
                let v: f64 = caps[1]
                    .parse()
                    .map_err(|e| LaftError::Parse(format!("bad value for '{name}': {e}")))?;
                if !v.is_finite() || v < 0.0 {
                    return Err(LaftError::Parse(format!("invalid confidence {v} for '{name}'")));
                }
                matched += 1;
                values.push(v);
            }
            None => values.push(0.0),
        }
    }
    if matched == 0 {
        return Err(LaftError::Parse("no class name found in response".into()));
    }
    if values.iter().all(|v| *v == 0.0) {
        return Err(LaftError::Parse("all extracted confidences are zero".into()));
    }
    ConfidenceVector::normalized(values).map_err(|e| LaftError::Parse(e.to_string()))
}

/// Canonical `name: value` rendering, the inverse of [`parse_response`].
pub fn render_response(confidences: &ConfidenceVector, classes: &ClassSet) -> String {
    classes
        .names()
        .iter()
        .zip(confidences.values())
        .map(|(n, v)| format!("{n}: {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}
