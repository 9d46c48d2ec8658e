use std::sync::Arc;

use proptest::prelude::*;
use tabseq_genres::{Cache, ClientConfig, GenreClient, GenreRecord, ManualClock, StubProvider};

fn record(artist: &str, genres: &[&str]) -> GenreRecord {
    GenreRecord {
        artist: artist.into(),
        title: "t".into(),
        genres: genres.iter().map(|g| g.to_string()).collect(),
        source: "stub".into(),
        fetched_at: 42,
        unresolved: false,
        note: Some("first match: x".into()),
    }
}

#[test]
fn records_survive_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("genres.jsonl");
    let mut c = Cache::open(&path).unwrap();
    c.store(record("a", &["rock"])).unwrap();
    c.store(record("b", &[])).unwrap();
    let reopened = Cache::open(&path).unwrap();
    assert_eq!(reopened.len(), 2);
    assert_eq!(reopened.get("A", "T"), Some(&record("a", &["rock"])));
}

#[test]
fn later_lines_win_and_bad_lines_are_skipped() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("genres.jsonl");
    let first = serde_json::to_string(&record("a", &["rock"])).unwrap();
    let second = serde_json::to_string(&record("a", &["metal"])).unwrap();
    std::fs::write(&path, format!("{first}\n{{broken\n\n{second}\n{{\"artist\":")).unwrap();
    let c = Cache::open(&path).unwrap();
    assert_eq!(c.skipped_lines, 2);
    assert_eq!(c.get("a", "t").unwrap().genres, ["metal"]);
}

#[test]
fn file_cache_hit_makes_zero_requests() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("genres.jsonl");
    let clock = Arc::new(ManualClock::at_unix(1000));
    let stub = || StubProvider::new().with("Band", "Song", &["Rock", "rock", "Metal"]);
    let warm = GenreClient::new(stub(), Cache::open(&path).unwrap(), clock.clone(), ClientConfig::default());
    let first = warm.lookup("Band", "Song").unwrap();
    assert_eq!(warm.provider().requests(), 1);

    let cold = GenreClient::new(stub(), Cache::open(&path).unwrap(), clock, ClientConfig::default());
    assert_eq!(cold.lookup("Band", "Song").unwrap(), first);
    assert_eq!(cold.provider().requests(), 0);
}

#[test]
fn concurrent_lookups_write_whole_lines() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("genres.jsonl");
    let mut stub = StubProvider::new();
    for i in 0..64 {
        stub = stub.with(&format!("artist {i}"), "t", &["Rock"]);
    }
    let client = GenreClient::new(
        stub,
        Cache::open(&path).unwrap(),
        Arc::new(ManualClock::at_unix(0)),
        ClientConfig { min_interval: std::time::Duration::ZERO, ..ClientConfig::default() },
    );
    std::thread::scope(|s| {
        for chunk in 0..4 {
            let client = &client;
            s.spawn(move || {
                for i in (chunk * 16)..(chunk * 16 + 16) {
                    client.lookup(&format!("artist {i}"), "t").unwrap();
                }
            });
        }
    });
    let reopened = Cache::open(&path).unwrap();
    assert_eq!(reopened.skipped_lines, 0);
    assert_eq!(reopened.len(), 64);
}

proptest! {
    #[test]
    fn cache_round_trip_preserves_records(
        artist in "[a-zA-Z ]{1,12}",
        title in "[a-zA-Z0-9 ]{0,12}",
        genres in prop::collection::vec("[a-z]{1,8}", 0..4),
        fetched_at in any::<u64>(),
        unresolved in any::<bool>(),
        note in prop::option::of("[ -~]{0,20}"),
    ) {
        let r = GenreRecord { artist, title, genres, source: "stub".into(), fetched_at, unresolved, note };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        Cache::open(&path).unwrap().store(r.clone()).unwrap();
        let c = Cache::open(&path).unwrap();
        prop_assert_eq!(c.get(&r.artist, &r.title), Some(&r));
    }
}
