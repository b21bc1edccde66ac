//! Fixed-format CSV and versioned JSON.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::SCHEMA_VERSION;

/// 17 significant digits, so values round-trip exactly.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text: a `# schema_version=N` line, the header, then one line per row.
pub fn csv(header: &[String], rows: impl IntoIterator<Item = Vec<f64>>) -> String {
    let mut out = format!("# schema_version={SCHEMA_VERSION}\n{}\n", header.join(","));
    for row in rows {
        let line: Vec<String> = row.into_iter().map(num).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// `value` as a JSON object with `schema_version` added.
pub fn versioned<T: Serialize>(value: &T) -> serde_json::Value {
    let mut v = serde_json::to_value(value).expect("output types serialize");
    if let serde_json::Value::Object(map) = &mut v {
        map.insert("schema_version".into(), SCHEMA_VERSION.into());
    }
    v
}

pub fn pretty(v: &serde_json::Value) -> String {
    serde_json::to_string_pretty(v).expect("json values serialize")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
