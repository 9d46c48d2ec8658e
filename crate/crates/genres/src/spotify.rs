//! Spotify Web API provider: client-credentials token, track search, then
//! the first artist's genre list.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde_json::Value;

use crate::{CatalogMatch, Provider, ProviderError};

pub const CLIENT_ID_VAR: &str = "SPOTIFY_CLIENT_ID";
pub const CLIENT_SECRET_VAR: &str = "SPOTIFY_CLIENT_SECRET";

#[derive(Debug, Clone)]
pub struct SpotifyConfig {
    pub client_id: String,
    pub client_secret: String,
    pub accounts_url: String,
    pub api_url: String,
    pub timeout: Duration,
}

impl SpotifyConfig {
    /// Credentials from the environment, or `None` if either is unset.
    pub fn from_env() -> Option<Self> {
        let id = std::env::var(CLIENT_ID_VAR).ok().filter(|s| !s.is_empty())?;
        let secret = std::env::var(CLIENT_SECRET_VAR).ok().filter(|s| !s.is_empty())?;
        Some(SpotifyConfig {
            client_id: id,
            client_secret: secret,
            accounts_url: "https://accounts.spotify.com".to_string(),
            api_url: "https://api.spotify.com".to_string(),
            timeout: Duration::from_secs(15),
        })
    }
}

pub struct SpotifyProvider {
    http: Client,
    config: SpotifyConfig,
    token: Mutex<Option<(String, Instant)>>,
}

impl SpotifyProvider {
    pub fn new(config: SpotifyConfig) -> Result<Self, ProviderError> {
        let http = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| ProviderError::Unavailable(e.to_string()))?;
        Ok(SpotifyProvider { http, config, token: Mutex::new(None) })
    }

    fn token(&self) -> Result<String, ProviderError> {
        let mut slot = self.token.lock().expect("token lock");
        if let Some((t, expires)) = slot.as_ref() {
            if Instant::now() < *expires {
                return Ok(t.clone());
            }
        }
        let resp = self
            .http
            .post(format!("{}/api/token", self.config.accounts_url))
            .basic_auth(&self.config.client_id, Some(&self.config.client_secret))
            .header(reqwest::header::CONTENT_TYPE, "application/x-www-form-urlencoded")
            .body("grant_type=client_credentials")
            .send()
            .map_err(transport)?;
        let body = json(resp)?;
        let token = body["access_token"].as_str().ok_or_else(|| malformed("token response lacks access_token"))?;
        let ttl = body["expires_in"].as_u64().unwrap_or(3600).saturating_sub(60);
        *slot = Some((token.to_string(), Instant::now() + Duration::from_secs(ttl)));
        Ok(token.to_string())
    }

    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<Value, ProviderError> {
        let token = self.token()?;
        let resp = self.http.get(url).bearer_auth(&token).query(query).send().map_err(transport)?;
        if resp.status() == StatusCode::UNAUTHORIZED {
            // expired early; fetch a new token on the next call
            *self.token.lock().expect("token lock") = None;
        }
        json(resp)
    }
}

impl Provider for SpotifyProvider {
    fn name(&self) -> &str {
        "spotify"
    }

    fn search(&self, artist: &str, title: &str) -> Result<Option<CatalogMatch>, ProviderError> {
        let q = format!("artist:{artist} track:{title}");
        let found = self.get(
            &format!("{}/v1/search", self.config.api_url),
            &[("q", &q), ("type", "track"), ("limit", "1")],
        )?;
        let items = found["tracks"]["items"].as_array().ok_or_else(|| malformed("search lacks tracks.items"))?;
        let Some(track) = items.first() else {
            return Ok(None);
        };
        let first_artist = &track["artists"][0];
        let id = first_artist["id"].as_str().ok_or_else(|| malformed("track lacks artists[0].id"))?;
        let matched = format!(
            "{} - {}",
            first_artist["name"].as_str().unwrap_or("?"),
            track["name"].as_str().unwrap_or("?")
        );
        let artist_doc = self.get(&format!("{}/v1/artists/{id}", self.config.api_url), &[])?;
        let genres = artist_doc["genres"]
            .as_array()
            .ok_or_else(|| malformed("artist lacks genres"))?
            .iter()
            .map(|g| g.as_str().map(str::to_string).ok_or_else(|| malformed("non-string genre")))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Some(CatalogMatch { matched, genres }))
    }
}

fn malformed(msg: &str) -> ProviderError {
    ProviderError::Malformed(msg.to_string())
}

fn transport(e: reqwest::Error) -> ProviderError {
    ProviderError::Unavailable(e.to_string())
}

fn json(resp: Response) -> Result<Value, ProviderError> {
    let status = resp.status();
    if status == StatusCode::TOO_MANY_REQUESTS {
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        return Err(ProviderError::RateLimited { retry_after });
    }
    if !status.is_success() {
        return Err(ProviderError::Unavailable(format!("HTTP {status}")));
    }
    resp.json::<Value>().map_err(|e| malformed(&e.to_string()))
}
