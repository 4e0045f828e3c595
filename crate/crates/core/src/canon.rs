//! Canonical JSON and short content hashes used for ids and fingerprints.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Compact JSON with lexicographically sorted keys.
pub fn canonical_json<T: Serialize>(value: &T) -> String {
    // serde_json::Value keeps object keys in a BTreeMap
    let v = serde_json::to_value(value).expect("serialisable value");
    serde_json::to_string(&v).expect("serialisable value")
}

/// First 16 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
