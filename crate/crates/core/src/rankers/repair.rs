//! Turning free-form model output into a valid batch ordering.
//!
//! Models drop items, repeat them, invent new ones, or wrap the answer in
//! prose. The repair rules: keep known keys in order of first mention, drop
//! repeats and unknown tokens, then append anything missing in the batch's
//! presentation order. Output with no recognizable key at all is rejected so
//! the caller can retry.

use std::collections::HashSet;

use super::RankerError;

/// Parse `raw` into a permutation of `expected_keys`.
///
/// When the output is (or contains) a JSON object with a `keys` array, that
/// array is the source of truth, so keys quoted in an accompanying
/// explanation cannot reorder the result. Otherwise every alphanumeric token
/// in the text is considered.
pub fn parse_and_repair(raw: &str, expected_keys: &[String]) -> Result<Vec<String>, RankerError> {
    if let Some(listed) = json_key_list(raw) {
        if let Ok(keys) = repair_keys(&listed, expected_keys) {
            return Ok(keys);
        }
    }
    let tokens: Vec<&str> = raw
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    repair_keys(&tokens, expected_keys).map_err(|_| RankerError::Unrepairable {
        raw: raw.to_string(),
    })
}

/// Apply the repair rules to an already tokenized key sequence.
pub fn repair_keys<S: AsRef<str>>(tokens: &[S], expected_keys: &[String]) -> Result<Vec<String>, RankerError> {
    let expected: HashSet<&str> = expected_keys.iter().map(String::as_str).collect();
    let mut seen: HashSet<&str> = HashSet::with_capacity(expected_keys.len());
    let mut ordered = Vec::with_capacity(expected_keys.len());
    for token in tokens {
        let token = token.as_ref().trim();
        if let Some(&key) = expected.get(token) {
            if seen.insert(key) {
                ordered.push(key.to_string());
            }
        }
    }
    if ordered.is_empty() {
        return Err(RankerError::Unrepairable {
            raw: tokens.iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" "),
        });
    }
    for key in expected_keys {
        if !seen.contains(key.as_str()) {
            seen.insert(key);
            ordered.push(key.clone());
        }
    }
    Ok(ordered)
}

/// Extract the `keys` array from the first JSON object found in `raw`.
pub(crate) fn json_key_list(raw: &str) -> Option<Vec<String>> {
    let value = first_json_object(raw)?;
    let keys = value.get("keys")?.as_array()?;
    Some(
        keys.iter()
            .filter_map(|k| match k {
                serde_json::Value::String(s) => Some(s.clone()),
                serde_json::Value::Number(n) => Some(n.to_string()),
                _ => None,
            })
            .collect(),
    )
}

pub(crate) fn first_json_object(raw: &str) -> Option<serde_json::Value> {
    let trimmed = raw.trim();
    if let Ok(v @ serde_json::Value::Object(_)) = serde_json::from_str(trimmed) {
        return Some(v);
    }
    // fenced or prefixed output: try each `{` until one parses
    for (start, _) in trimmed.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&trimmed[start..]).into_iter::<serde_json::Value>();
        if let Some(Ok(v @ serde_json::Value::Object(_))) = stream.next() {
            return Some(v);
        }
    }
    None
}
