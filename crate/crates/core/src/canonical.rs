//! Canonical JSON: compact, object keys sorted, shortest round-trip floats.
//!
//! Hashes over ledger payloads and certificates are taken over this form, so
//! equal values always hash equally regardless of struct field order.

use serde::Serialize;
use serde_json::{Map, Value};

/// Serializes `value` canonically. Non-finite floats become `null`.
pub fn to_canonical_json<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    serde_json::to_string(&sorted(serde_json::to_value(value)?))
}

/// Rebuilds objects with keys inserted in sorted order; correct whether or
/// not the map type preserves insertion order.
fn sorted(v: Value) -> Value {
    match v {
        Value::Object(map) => {
            let mut entries: Vec<(String, Value)> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(entries.into_iter().map(|(k, v)| (k, sorted(v))).collect::<Map<_, _>>())
        }
        Value::Array(items) => Value::Array(items.into_iter().map(sorted).collect()),
        other => other,
    }
}

/// True when `text` is exactly the canonical form of the JSON it encodes.
pub fn is_canonical(text: &str) -> bool {
    match serde_json::from_str::<Value>(text) {
        Ok(v) => serde_json::to_string(&sorted(v)).is_ok_and(|c| c == text),
        Err(_) => false,
    }
}
