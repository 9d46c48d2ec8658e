//! Spotify provider against a scripted HTTP server on loopback.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use tabseq_genres::spotify::{SpotifyConfig, SpotifyProvider};
use tabseq_genres::{Cache, ClientConfig, GenreClient, ManualClock, Provider, ProviderError};

type Route = (&'static str, u16, Vec<(&'static str, String)>, String);

/// Serves each request with the first unused route whose path prefix
/// matches. Returns the base URL and the log of request lines.
fn serve(routes: Vec<Route>) -> (String, Arc<Mutex<Vec<String>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let log = Arc::new(Mutex::new(Vec::new()));
    let seen = log.clone();
    std::thread::spawn(move || {
        let mut routes: Vec<Option<Route>> = routes.into_iter().map(Some).collect();
        for stream in listener.incoming() {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let mut length = 0;
            let mut headers = String::new();
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim().is_empty() {
                    break;
                }
                if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
                    length = v.trim().parse().unwrap();
                }
                headers.push_str(&h);
            }
            let mut body = vec![0; length];
            reader.read_exact(&mut body).unwrap();
            let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
            seen.lock().unwrap().push(format!("{} {}", line.split_whitespace().next().unwrap_or(""), path));
            let route = routes.iter_mut().find(|r| r.as_ref().is_some_and(|r| path.starts_with(r.0))).and_then(Option::take);
            let (status, extra, payload) = match route {
                Some((_, s, h, b)) => (s, h, b),
                None => (404, Vec::new(), "{}".to_string()),
            };
            let mut resp = format!("HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n", payload.len());
            for (k, v) in extra {
                resp.push_str(&format!("{k}: {v}\r\n"));
            }
            resp.push_str("\r\n");
            resp.push_str(&payload);
            stream.write_all(resp.as_bytes()).unwrap();
        }
    });
    (base, log)
}

fn config(base: &str) -> SpotifyConfig {
    SpotifyConfig {
        client_id: "id".into(),
        client_secret: "secret".into(),
        accounts_url: base.to_string(),
        api_url: base.to_string(),
        timeout: Duration::from_secs(5),
    }
}

fn token() -> Route {
    ("/api/token", 200, vec![], r#"{"access_token":"t0k","expires_in":3600}"#.into())
}

fn search_hit() -> Route {
    (
        "/v1/search",
        200,
        vec![],
        r#"{"tracks":{"items":[{"name":"Song","artists":[{"id":"a1","name":"Band"}]}]}}"#.into(),
    )
}

#[test]
fn search_then_artist_genres() {
    let (base, log) = serve(vec![
        token(),
        search_hit(),
        ("/v1/artists/a1", 200, vec![], r#"{"genres":["Rock","rock","Metal"]}"#.into()),
    ]);
    let p = SpotifyProvider::new(config(&base)).unwrap();
    let m = p.search("Band", "Song").unwrap().unwrap();
    assert_eq!(m.genres, ["Rock", "rock", "Metal"]);
    assert_eq!(m.matched, "Band - Song");
    let log = log.lock().unwrap().clone();
    assert_eq!(log[0], "POST /api/token");
    assert!(log[1].starts_with("GET /v1/search?q=artist%3ABand+track%3ASong&type=track&limit=1"), "{}", log[1]);
    assert_eq!(log[2], "GET /v1/artists/a1");
}

#[test]
fn normalization_through_the_client() {
    let (base, _) = serve(vec![
        token(),
        search_hit(),
        ("/v1/artists/a1", 200, vec![], r#"{"genres":["Rock","rock","Metal"]}"#.into()),
    ]);
    let p = SpotifyProvider::new(config(&base)).unwrap();
    let c = GenreClient::new(p, Cache::in_memory(), Arc::new(ManualClock::at_unix(0)), ClientConfig::default());
    let r = c.lookup("Band", "Song").unwrap();
    assert_eq!(r.genres, ["rock", "metal"]);
    assert_eq!(r.source, "spotify");
}

#[test]
fn empty_search_is_no_match() {
    let (base, _) = serve(vec![token(), ("/v1/search", 200, vec![], r#"{"tracks":{"items":[]}}"#.into())]);
    let p = SpotifyProvider::new(config(&base)).unwrap();
    assert_eq!(p.search("Nobody", "Nothing").unwrap(), None);
}

#[test]
fn too_many_requests_carries_retry_after() {
    let (base, _) = serve(vec![token(), ("/v1/search", 429, vec![("Retry-After", "7".into())], "{}".into())]);
    let p = SpotifyProvider::new(config(&base)).unwrap();
    assert_eq!(
        p.search("A", "B").unwrap_err(),
        ProviderError::RateLimited { retry_after: Some(Duration::from_secs(7)) }
    );
}

#[test]
fn bad_payloads_are_malformed() {
    let (base, _) = serve(vec![token(), ("/v1/search", 200, vec![], "not json".into())]);
    let p = SpotifyProvider::new(config(&base)).unwrap();
    assert!(matches!(p.search("A", "B"), Err(ProviderError::Malformed(_))));

    let (base, _) = serve(vec![token(), ("/v1/search", 200, vec![], r#"{"tracks":{}}"#.into())]);
    let p = SpotifyProvider::new(config(&base)).unwrap();
    assert!(matches!(p.search("A", "B"), Err(ProviderError::Malformed(_))));
}

#[test]
fn server_errors_are_unavailable() {
    let (base, _) = serve(vec![token(), ("/v1/search", 503, vec![], "{}".into())]);
    let p = SpotifyProvider::new(config(&base)).unwrap();
    assert!(matches!(p.search("A", "B"), Err(ProviderError::Unavailable(_))));
}

#[test]
fn token_is_reused() {
    let (base, log) = serve(vec![
        token(),
        ("/v1/search", 200, vec![], r#"{"tracks":{"items":[]}}"#.into()),
        ("/v1/search", 200, vec![], r#"{"tracks":{"items":[]}}"#.into()),
    ]);
    let p = SpotifyProvider::new(config(&base)).unwrap();
    p.search("A", "B").unwrap();
    p.search("C", "D").unwrap();
    assert_eq!(log.lock().unwrap().iter().filter(|l| l.contains("/api/token")).count(), 1);
}
