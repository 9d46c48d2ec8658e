//! Corpus statistics and vocabulary over token files.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::gp5_io::representation;
use crate::song_model::Song;
use crate::tokenizer::{decode, ticks_to_seconds, Token, TokenSeq};

pub type Histogram<K> = BTreeMap<K, u64>;

/// Width of the initial-tempo bins in bpm. Bins are keyed by lower edge.
pub const TEMPO_BIN: u32 = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedFile {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StatsReport {
    pub songs: u64,
    pub tokens: u64,
    pub unknown_tokens: u64,
    pub measures: u64,
    pub notes: u64,
    pub duration_seconds: f64,
    /// Per song.
    pub tracks_per_song: Histogram<usize>,
    /// Per song, keyed by bin lower edge.
    pub initial_tempo: Histogram<u32>,
    /// Per song.
    pub tempo_changes_per_song: Histogram<usize>,
    /// Per song: how many songs use each slot.
    pub instrument_slot: Histogram<String>,
    /// Per measure.
    pub time_signature: Histogram<String>,
    /// Per note, keyed by the ticks of the beat carrying it.
    pub note_duration: Histogram<u32>,
    /// Per effect token, keyed by effect kind.
    pub note_effect: Histogram<String>,
    /// Per known token, keyed by spelling. Trimmed to top-N only on output.
    pub token_frequency: Histogram<String>,
    pub skipped_files: Vec<SkippedFile>,
}

fn add_all<K: Ord + Clone>(into: &mut Histogram<K>, from: &Histogram<K>) {
    for (k, n) in from {
        *into.entry(k.clone()).or_default() += n;
    }
}

fn bump<K: Ord>(h: &mut Histogram<K>, key: K) {
    *h.entry(key).or_default() += 1;
}

impl StatsReport {
    /// Adds one song. `source` supplies real measure headers (from a GP5
    /// file); without it time signatures come from decoding the tokens.
    pub fn observe(&mut self, tokens: &TokenSeq, source: Option<&Song>) {
        let decoded;
        let song = match source {
            Some(s) => s,
            None => {
                decoded = decode(tokens);
                &decoded
            }
        };
        self.songs += 1;
        self.tokens += tokens.len() as u64;
        for t in &tokens.tokens {
            match t {
                Token::Unknown(_) => self.unknown_tokens += 1,
                t => {
                    let spelling = t.spelling();
                    if let Token::Nfx(_) = t {
                        let kind = spelling.split(':').nth(1).unwrap_or_default().to_string();
                        bump(&mut self.note_effect, kind);
                    }
                    bump(&mut self.token_frequency, spelling);
                }
            }
        }
        bump(&mut self.tracks_per_song, song.tracks.len());
        bump(&mut self.initial_tempo, song.initial_tempo / TEMPO_BIN * TEMPO_BIN);
        let changes = song.measure_headers.iter().filter(|h| h.tempo_change.is_some()).count();
        bump(&mut self.tempo_changes_per_song, changes);
        for t in &song.tracks {
            bump(&mut self.instrument_slot, t.slot.name().to_string());
        }
        self.measures += song.measure_headers.len() as u64;
        for h in &song.measure_headers {
            bump(&mut self.time_signature, h.time_signature.to_string());
        }
        for t in &song.tracks {
            for b in t.measures.iter().flat_map(|m| &m.beats) {
                for _ in b.content.notes() {
                    self.notes += 1;
                    bump(&mut self.note_duration, b.duration);
                }
            }
        }
        self.duration_seconds += song_seconds(song);
    }

    /// Combines two partial reports. Order of merging does not change the
    /// counts; skipped files are concatenated.
    pub fn merge(&mut self, other: &StatsReport) {
        self.songs += other.songs;
        self.tokens += other.tokens;
        self.unknown_tokens += other.unknown_tokens;
        self.measures += other.measures;
        self.notes += other.notes;
        self.duration_seconds += other.duration_seconds;
        add_all(&mut self.tracks_per_song, &other.tracks_per_song);
        add_all(&mut self.initial_tempo, &other.initial_tempo);
        add_all(&mut self.tempo_changes_per_song, &other.tempo_changes_per_song);
        add_all(&mut self.instrument_slot, &other.instrument_slot);
        add_all(&mut self.time_signature, &other.time_signature);
        add_all(&mut self.note_duration, &other.note_duration);
        add_all(&mut self.note_effect, &other.note_effect);
        add_all(&mut self.token_frequency, &other.token_frequency);
        self.skipped_files.extend(other.skipped_files.iter().cloned());
    }

    /// Most frequent spellings, ties broken by spelling.
    pub fn top_tokens(&self, n: usize) -> Vec<(String, u64)> {
        let mut v: Vec<(String, u64)> = self.token_frequency.iter().map(|(k, c)| (k.clone(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(n);
        v
    }

    /// JSON document with the token histogram cut to `top_n` entries.
    pub fn to_json(&self, top_n: usize) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v["token_frequency"] = self
            .top_tokens(top_n)
            .into_iter()
            .map(|(k, c)| serde_json::json!({ "token": k, "count": c }))
            .collect();
        v["note_duration_labels"] = serde_json::Value::Object(
            self.note_duration.keys().map(|&t| (t.to_string(), serde_json::Value::from(duration_label(t)))).collect(),
        );
        v
    }

    /// One CSV document per histogram, keyed by histogram name.
    pub fn to_csv(&self, top_n: usize) -> BTreeMap<&'static str, String> {
        fn table<K: ToString>(header: &str, h: &Histogram<K>) -> String {
            let mut s = format!("{header},count\n");
            for (k, n) in h {
                s += &format!("{},{n}\n", csv_field(&k.to_string()));
            }
            s
        }
        let mut out = BTreeMap::new();
        out.insert("tracks_per_song", table("tracks", &self.tracks_per_song));
        out.insert("initial_tempo", table("bpm_bin", &self.initial_tempo));
        out.insert("tempo_changes_per_song", table("tempo_changes", &self.tempo_changes_per_song));
        out.insert("instrument_slot", table("slot", &self.instrument_slot));
        out.insert("time_signature", table("time_signature", &self.time_signature));
        out.insert("note_effect", table("effect", &self.note_effect));
        let mut durations = String::from("ticks,label,count\n");
        for (t, n) in &self.note_duration {
            durations += &format!("{t},{},{n}\n", duration_label(*t));
        }
        out.insert("note_duration", durations);
        let mut tokens = String::from("token,count\n");
        for (k, n) in self.top_tokens(top_n) {
            tokens += &format!("{},{n}\n", csv_field(&k));
        }
        out.insert("token_frequency", tokens);
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Seconds of a song under its tempo map. Ticks are summed per tempo
/// before converting, so a constant-tempo song gets a single conversion.
pub fn song_seconds(song: &Song) -> f64 {
    let mut per_tempo: BTreeMap<u32, u64> = BTreeMap::new();
    for (h, tempo) in song.measure_headers.iter().zip(song.tempo_map()) {
        *per_tempo.entry(tempo).or_default() += h.span() as u64;
    }
    per_tempo
        .into_iter()
        .map(|(tempo, ticks)| ticks_to_seconds(ticks, tempo).expect("tempo map has no zero tempo"))
        .sum()
}

/// Staff name for a tick length, e.g. 960 → "quarter", 320 → "triplet
/// eighth". Lengths with no single note value fall back to "<n> ticks".
pub fn duration_label(ticks: u32) -> String {
    let Some(d) = representation(ticks) else { return format!("{ticks} ticks") };
    let base = match d.value {
        1 => "whole",
        2 => "half",
        4 => "quarter",
        8 => "eighth",
        16 => "sixteenth",
        32 => "thirty-second",
        _ => "sixty-fourth",
    };
    let dotted = if d.dotted { "dotted " } else { "" };
    match d.enters {
        1 => format!("{dotted}{base}"),
        3 => format!("{dotted}triplet {base}"),
        e => format!("{dotted}{e}:{} {base}", d.times()),
    }
}

fn read_tokens(path: &Path) -> Result<TokenSeq, String> {
    std::fs::read_to_string(path).map(|s| TokenSeq::from_text(&s)).map_err(|e| e.to_string())
}

/// Statistics for one token file; an unreadable file yields an empty
/// report that lists it as skipped.
pub fn file_stats(path: &Path) -> StatsReport {
    let mut report = StatsReport::default();
    match read_tokens(path) {
        Ok(tokens) => report.observe(&tokens, None),
        Err(reason) => {
            log::warn!("skipping {}: {reason}", path.display());
            report.skipped_files.push(SkippedFile { path: path.to_path_buf(), reason });
        }
    }
    report
}

pub fn corpus_stats<P: AsRef<Path>>(paths: &[P]) -> StatsReport {
    let mut total = StatsReport::default();
    for p in paths {
        total.merge(&file_stats(p.as_ref()));
    }
    total
}

/// Unique known-token spellings in first-occurrence order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Vocab {
    pub tokens: Vec<String>,
}

impl Vocab {
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// Appends spellings not yet present. Unknown tokens are not added.
    pub fn extend(&mut self, seq: &TokenSeq) {
        let mut seen: HashSet<String> = self.tokens.iter().cloned().collect();
        for t in &seq.tokens {
            if matches!(t, Token::Unknown(_)) {
                continue;
            }
            let s = t.spelling();
            if seen.insert(s.clone()) {
                self.tokens.push(s);
            }
        }
    }

    pub fn from_seqs<'a>(seqs: impl IntoIterator<Item = &'a TokenSeq>) -> Vocab {
        let mut v = Vocab::default();
        for s in seqs {
            v.extend(s);
        }
        v
    }

    /// One spelling per line.
    pub fn to_text(&self) -> String {
        self.tokens.iter().map(|t| format!("{t}\n")).collect()
    }

    pub fn from_text(text: &str) -> Vocab {
        let mut v = Vocab::default();
        v.extend(&TokenSeq::from_text(text));
        v
    }
}

/// Vocabulary over files visited in sorted path order, so the result does
/// not depend on the order the paths were given in.
pub fn build_vocab<P: AsRef<Path>>(paths: &[P]) -> (Vocab, Vec<SkippedFile>) {
    let mut sorted: Vec<&Path> = paths.iter().map(AsRef::as_ref).collect();
    sorted.sort();
    sorted.dedup();
    let mut vocab = Vocab::default();
    let mut skipped = Vec::new();
    for p in sorted {
        match read_tokens(p) {
            Ok(seq) => vocab.extend(&seq),
            Err(reason) => skipped.push(SkippedFile { path: p.to_path_buf(), reason }),
        }
    }
    (vocab, skipped)
}
