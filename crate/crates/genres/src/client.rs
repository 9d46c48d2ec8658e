use std::sync::{Arc, Mutex};
use std::time::Duration;

use thiserror::Error;

use crate::{normalize_genres, Cache, Clock, GenreRecord, Provider, ProviderError};

#[derive(Debug, Clone)]
pub struct ClientConfig {
    /// Minimum spacing between requests across all threads.
    pub min_interval: Duration,
    /// Extra attempts after a rate-limit response.
    pub max_retries: u32,
    /// First backoff when the server gives no Retry-After; doubles per retry.
    pub base_backoff: Duration,
    pub max_backoff: Duration,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            min_interval: Duration::from_millis(100),
            max_retries: 3,
            base_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Error)]
pub enum LookupError {
    #[error("artist is empty")]
    EmptyArtist,
    #[error("cache write failed: {0}")]
    Cache(#[from] std::io::Error),
}

/// Cached, rate-limited lookups. Safe to share across threads.
pub struct GenreClient<P: Provider> {
    provider: P,
    clock: Arc<dyn Clock>,
    cache: Mutex<Cache>,
    next_slot: Mutex<Duration>,
    config: ClientConfig,
}

impl<P: Provider> GenreClient<P> {
    pub fn new(provider: P, cache: Cache, clock: Arc<dyn Clock>, config: ClientConfig) -> Self {
        GenreClient { provider, clock, cache: Mutex::new(cache), next_slot: Mutex::new(Duration::ZERO), config }
    }

    pub fn provider(&self) -> &P {
        &self.provider
    }

    pub fn cached(&self, artist: &str, title: &str) -> Option<GenreRecord> {
        self.cache.lock().expect("cache lock").get(artist, title).cloned()
    }

    /// Returns the cached record if present. Otherwise asks the provider,
    /// retrying rate limits with backoff. Matches and confirmed misses are
    /// cached; transient failures come back unresolved and are not.
    pub fn lookup(&self, artist: &str, title: &str) -> Result<GenreRecord, LookupError> {
        if artist.trim().is_empty() {
            return Err(LookupError::EmptyArtist);
        }
        if let Some(hit) = self.cached(artist, title) {
            return Ok(hit);
        }
        let mut record = GenreRecord {
            artist: artist.to_string(),
            title: title.to_string(),
            genres: Vec::new(),
            source: self.provider.name().to_string(),
            fetched_at: 0,
            unresolved: true,
            note: None,
        };
        let mut attempt = 0;
        let outcome = loop {
            self.wait_for_slot();
            match self.provider.search(artist, title) {
                Err(ProviderError::RateLimited { retry_after }) if attempt < self.config.max_retries => {
                    let backoff = retry_after.unwrap_or(self.config.base_backoff * 2u32.saturating_pow(attempt));
                    log::debug!("rate limited on {artist:?}/{title:?}, retry in {backoff:?}");
                    self.clock.sleep(backoff.min(self.config.max_backoff));
                    attempt += 1;
                }
                other => break other,
            }
        };
        record.fetched_at = self.clock.unix_seconds();
        match outcome {
            Ok(Some(m)) => {
                record.genres = normalize_genres(&m.genres);
                record.unresolved = false;
                record.note = Some(format!("first match: {}", m.matched));
            }
            Ok(None) => record.note = Some("no match".to_string()),
            Err(e) => {
                log::warn!("lookup {artist:?}/{title:?} failed: {e}");
                record.note = Some(e.to_string());
                return Ok(record);
            }
        }
        self.cache.lock().expect("cache lock").store(record.clone())?;
        Ok(record)
    }

    fn wait_for_slot(&self) {
        let wait = {
            let mut next = self.next_slot.lock().expect("limiter lock");
            let now = self.clock.now();
            let at = (*next).max(now);
            *next = at + self.config.min_interval;
            at - now
        };
        if !wait.is_zero() {
            self.clock.sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{ManualClock, StubProvider};

    fn client(stub: StubProvider) -> (GenreClient<StubProvider>, Arc<ManualClock>) {
        let clock = Arc::new(ManualClock::at_unix(1_700_000_000));
        let config = ClientConfig { min_interval: Duration::from_millis(250), ..ClientConfig::default() };
        (GenreClient::new(stub, Cache::in_memory(), clock.clone(), config), clock)
    }

    #[test]
    fn hit_after_miss_makes_no_request() {
        let (c, _) = client(StubProvider::new().with("Band", "Song", &["Rock", "rock", "Metal"]));
        let first = c.lookup("Band", "Song").unwrap();
        assert_eq!(first.genres, ["rock", "metal"]);
        assert!(!first.unresolved);
        assert_eq!(c.lookup("band", " song").unwrap(), first);
        assert_eq!(c.provider().requests(), 1);
    }

    #[test]
    fn no_match_is_unresolved_and_cached() {
        let (c, _) = client(StubProvider::new());
        let r = c.lookup("Nobody", "Nothing").unwrap();
        assert!(r.unresolved && r.genres.is_empty());
        assert_eq!(r.note.as_deref(), Some("no match"));
        c.lookup("Nobody", "Nothing").unwrap();
        assert_eq!(c.provider().requests(), 1);
    }

    #[test]
    fn rate_limits_back_off_then_succeed() {
        let stub = StubProvider::new().with("A", "B", &["Jazz"]).failing_first(vec![
            ProviderError::RateLimited { retry_after: Some(Duration::from_secs(2)) },
            ProviderError::RateLimited { retry_after: None },
        ]);
        let (c, clock) = client(stub);
        assert_eq!(c.lookup("A", "B").unwrap().genres, ["jazz"]);
        // 2 s from the header, then 500 ms default backoff at attempt 1 doubled
        assert_eq!(clock.sleeps(), [Duration::from_secs(2), Duration::from_secs(1)]);
        assert_eq!(c.provider().requests(), 3);
    }

    #[test]
    fn persistent_rate_limit_gives_up_uncached() {
        let stub = StubProvider::new()
            .with("A", "B", &["Jazz"])
            .failing_first(vec![ProviderError::RateLimited { retry_after: None }; 4]);
        let (c, _) = client(stub);
        let r = c.lookup("A", "B").unwrap();
        assert!(r.unresolved);
        assert_eq!(c.provider().requests(), 4);
        assert!(c.cached("A", "B").is_none());
        assert_eq!(c.lookup("A", "B").unwrap().genres, ["jazz"]);
    }

    #[test]
    fn malformed_payload_is_unresolved() {
        let stub = StubProvider::new().failing_first(vec![ProviderError::Malformed("no items".into())]);
        let (c, _) = client(stub);
        let r = c.lookup("A", "B").unwrap();
        assert!(r.unresolved);
        assert_eq!(r.note.as_deref(), Some("malformed response: no items"));
    }

    #[test]
    fn requests_are_spaced_by_the_interval() {
        let (c, clock) = client(StubProvider::new());
        for i in 0..3 {
            c.lookup("A", &i.to_string()).unwrap();
        }
        assert_eq!(clock.sleeps(), [Duration::from_millis(250); 2]);
    }

    #[test]
    fn empty_artist_is_rejected() {
        let (c, _) = client(StubProvider::new());
        assert!(matches!(c.lookup("  ", "x"), Err(LookupError::EmptyArtist)));
        assert_eq!(c.provider().requests(), 0);
    }
}
