use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use thiserror::Error;

use crate::normalize_key;

/// First search hit for an (artist, title) query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogMatch {
    /// Human-readable description of the matched item, e.g. "Artist - Track".
    pub matched: String,
    pub genres: Vec<String>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("catalog unavailable: {0}")]
    Unavailable(String),
}

pub trait Provider: Send + Sync {
    /// Identifier stored in each record's `source` field.
    fn name(&self) -> &str;
    /// One search request. `Ok(None)` means the catalog has no match.
    fn search(&self, artist: &str, title: &str) -> Result<Option<CatalogMatch>, ProviderError>;
}

impl<P: Provider + ?Sized> Provider for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn search(&self, artist: &str, title: &str) -> Result<Option<CatalogMatch>, ProviderError> {
        (**self).search(artist, title)
    }
}

/// Offline provider answering from a fixed table. Counts every request and
/// can replay scripted failures before answering.
#[derive(Default)]
pub struct StubProvider {
    entries: HashMap<(String, String), Vec<String>>,
    failures: Mutex<Vec<ProviderError>>,
    requests: AtomicUsize,
}

impl StubProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, artist: &str, title: &str, tags: &[&str]) -> Self {
        self.entries.insert(
            (normalize_key(artist), normalize_key(title)),
            tags.iter().map(|t| t.to_string()).collect(),
        );
        self
    }

    /// Queues errors returned, in order, by the next requests.
    pub fn failing_first(self, errors: Vec<ProviderError>) -> Self {
        *self.failures.lock().expect("stub lock") = errors.into_iter().rev().collect();
        self
    }

    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }
}

impl Provider for StubProvider {
    fn name(&self) -> &str {
        "stub"
    }

    fn search(&self, artist: &str, title: &str) -> Result<Option<CatalogMatch>, ProviderError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        if let Some(e) = self.failures.lock().expect("stub lock").pop() {
            return Err(e);
        }
        Ok(self.entries.get(&(normalize_key(artist), normalize_key(title))).map(|tags| CatalogMatch {
            matched: format!("{artist} - {title}"),
            genres: tags.clone(),
        }))
    }
}
