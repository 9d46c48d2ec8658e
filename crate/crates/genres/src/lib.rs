//! Genre tags for (artist, title) pairs, looked up in a music catalog and
//! cached in a local JSON-lines file.

mod cache;
mod client;
mod clock;
mod provider;
pub mod spotify;

use serde::{Deserialize, Serialize};

pub use cache::Cache;
pub use client::{ClientConfig, GenreClient, LookupError};
pub use clock::{Clock, ManualClock, SystemClock};
pub use provider::{CatalogMatch, Provider, ProviderError, StubProvider};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenreRecord {
    pub artist: String,
    pub title: String,
    /// Lowercase, deduplicated, in catalog order.
    pub genres: Vec<String>,
    pub source: String,
    /// Unix seconds.
    pub fetched_at: u64,
    #[serde(default)]
    pub unresolved: bool,
    /// Match description or failure reason.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Trims, lowercases and drops empty tags, keeping the first occurrence.
pub fn normalize_genres<S: AsRef<str>>(tags: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tags.len());
    for t in tags {
        let t = t.as_ref().trim().to_lowercase();
        if !t.is_empty() && !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// Lowercase with internal whitespace collapsed.
pub fn normalize_key(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn cache_key(artist: &str, title: &str) -> (String, String) {
    (normalize_key(artist), normalize_key(title))
}
