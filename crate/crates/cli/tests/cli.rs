//! Runs the `tabseq` binary against fixture files in a scratch directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tabseq_core::gp5_io::read_gp5;

fn fixture(name: &str) -> PathBuf {
    let here = Path::new(env!("CARGO_MANIFEST_DIR"));
    let local = here.join("tests/fixtures").join(name);
    if local.exists() {
        local
    } else {
        here.join("../core/tests/fixtures").join(name)
    }
}

fn tabseq(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabseq")).args(args).current_dir(cwd).output().unwrap()
}

fn lines(o: &Output) -> Vec<Vec<String>> {
    String::from_utf8_lossy(&o.stdout).lines().map(|l| l.split('\t').map(str::to_string).collect()).collect()
}

fn copy_fixtures(dir: &Path, names: &[&str]) {
    for n in names {
        std::fs::copy(fixture(n), dir.join(n)).unwrap();
    }
}

#[test]
fn encode_writes_token_files_starting_with_artist() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixtures(dir.path(), &["golden_quarter.gp5", "third_party_v500.gp5", "third_party_v510.gp5"]);
    let o = tabseq(&["encode", ".", "-o", "out"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&o).len(), 3);
    for n in ["golden_quarter", "third_party_v500", "third_party_v510"] {
        let text = std::fs::read_to_string(dir.path().join(format!("out/{n}.tokens.txt"))).unwrap();
        assert!(text.starts_with("artist:"), "{n}: {text}");
    }
}

#[test]
fn unsupported_tuning_is_rejected_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixtures(dir.path(), &["odd_tuning.gp5", "golden_quarter.gp5"]);
    let o = tabseq(&["encode", "odd_tuning.gp5", "golden_quarter.gp5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let l = lines(&o);
    assert_eq!(l[0][..3], ["encode", "rejected", "odd_tuning.gp5"]);
    assert_eq!(l[1][1], "ok");
    assert!(dir.path().join("golden_quarter.tokens.txt").exists());
    assert!(!dir.path().join("odd_tuning.tokens.txt").exists());
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixtures(dir.path(), &["golden_quarter.gp5"]);
    assert_eq!(tabseq(&["encode", "golden_quarter.gp5"], dir.path()).status.code(), Some(0));
    let again = tabseq(&["encode", "golden_quarter.gp5"], dir.path());
    assert_eq!(again.status.code(), Some(1));
    assert!(lines(&again)[0][3].contains("--force"));
    assert_eq!(tabseq(&["encode", "--force", "golden_quarter.gp5"], dir.path()).status.code(), Some(0));
}

#[test]
fn decode_accepts_any_token_content() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("empty.tokens.txt"), "").unwrap();
    std::fs::write(d.join("noise.tokens.txt"), "wait:7 end bass:note:s9:f99 hello start new_measure wait:960 tempo:0").unwrap();
    std::fs::write(
        d.join("clean.tokens.txt"),
        "artist:x downtune:0 tempo:120 start new_measure clean0:note:s6:f3 wait:3840 end",
    )
    .unwrap();
    let o = tabseq(&["decode", ".", "-o", "gp5"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    for n in ["empty", "noise", "clean"] {
        let song = read_gp5(&std::fs::read(d.join(format!("gp5/{n}.gp5"))).unwrap()).unwrap();
        assert!(!song.measure_headers.is_empty());
    }
}

#[test]
fn colliding_output_names_fail_the_later_input() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("a")).unwrap();
    std::fs::create_dir_all(d.join("b")).unwrap();
    std::fs::write(d.join("a/x.tokens.txt"), "end").unwrap();
    std::fs::write(d.join("b/x.tokens.txt"), "end").unwrap();
    let o = tabseq(&["decode", "a", "b"], d);
    assert_eq!(o.status.code(), Some(1));
    let l = lines(&o);
    assert_eq!(l[0][1], "ok");
    assert_eq!(l[1][1], "failed");
}

#[test]
fn roundtrip_reports_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    copy_fixtures(dir.path(), &["third_party_v500.gp5", "third_party_v510.gp5"]);
    let o = tabseq(&["roundtrip", "*.gp5"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(lines(&o).iter().all(|l| l[3].starts_with("equivalent")));
}

#[test]
fn validate_stats_and_vocab_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("a.tokens.txt"), "artist:a downtune:0 tempo:120 start new_measure wait:960 wait:960 end end").unwrap();
    std::fs::write(d.join("b.tokens.txt"), "artist:b downtune:0 tempo:90 start new_measure drums:note:36 wait:3840 end").unwrap();

    let v = tabseq(&["validate", ".", "-o", "r"], d);
    assert_eq!(v.status.code(), Some(0));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r/errors.json")).unwrap()).unwrap();
    assert_eq!(doc["total"]["total_errors"], 2);
    assert_eq!(tabseq(&["validate", "--strict", ".", "-o", "r2"], d).status.code(), Some(1));

    let s = tabseq(&["stats", ".", "-o", "r", "--top", "3"], d);
    assert_eq!(s.status.code(), Some(0), "{}", String::from_utf8_lossy(&s.stdout));
    let stats: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("r/stats.json")).unwrap()).unwrap();
    assert_eq!(stats["songs"], 2);
    assert_eq!(stats["token_frequency"].as_array().unwrap().len(), 3);
    assert!(d.join("r/stats_time_signature.csv").exists());

    assert_eq!(tabseq(&["vocab", "b.tokens.txt", "a.tokens.txt", "-o", "r"], d).status.code(), Some(0));
    let vocab = std::fs::read_to_string(d.join("r/vocab.txt")).unwrap();
    assert!(vocab.starts_with("artist:a\n"));
}

#[test]
fn genres_with_stub_and_cache() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    copy_fixtures(d, &["odd_tuning.gp5"]);
    std::fs::write(
        d.join("stub.json"),
        r#"[{"artist":"Odd Tuning Band","title":"Open Chord","genres":["Rock","rock","Metal"]}]"#,
    )
    .unwrap();
    let o = tabseq(&["genres", "odd_tuning.gp5", "--stub", "stub.json", "-o", "g"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&o)[0][3], "rock,metal");
    let cache = std::fs::read_to_string(d.join("g/genres-cache.jsonl")).unwrap();
    assert_eq!(cache.lines().count(), 1);
    // second run is served from the cache, so the empty stub is never asked
    std::fs::write(d.join("empty.json"), "[]").unwrap();
    let again = tabseq(&["genres", "odd_tuning.gp5", "--stub", "empty.json", "-o", "g", "--force"], d);
    assert_eq!(lines(&again)[0][3], "rock,metal");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(tabseq(&["encode"], dir.path()).status.code(), Some(2));
    assert_eq!(tabseq(&["frobnicate", "x"], dir.path()).status.code(), Some(2));
    assert_eq!(tabseq(&["genres", "x.gp5", "--rate", "0"], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_inputs_fail_per_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = tabseq(&["encode", "nope.gp5", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
}

#[test]
fn output_is_independent_of_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    copy_fixtures(d, &["golden_quarter.gp5", "third_party_v500.gp5", "third_party_v510.gp5"]);
    let one = tabseq(&["encode", ".", "-o", "one", "-j", "1"], d);
    let four = tabseq(&["encode", ".", "-o", "four", "-j", "4"], d);
    let strip = |o: &Output| lines(o).into_iter().map(|l| l[..3].to_vec()).collect::<Vec<_>>();
    assert_eq!(strip(&one), strip(&four));
    for n in ["golden_quarter", "third_party_v500", "third_party_v510"] {
        let f = format!("{n}.tokens.txt");
        assert_eq!(std::fs::read(d.join("one").join(&f)).unwrap(), std::fs::read(d.join("four").join(&f)).unwrap());
    }
}
