use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::Deserialize;
use tabseq_core::gp5_io::{fit_for_gp5, read_gp5_with_report, write_gp5, ReadReport};
use tabseq_core::song_model::equivalence_diff;
use tabseq_core::stats::{build_vocab, file_stats, StatsReport};
use tabseq_core::tokenizer::{decode_with_report, encode_with, EncodeOptions};
use tabseq_core::validator::{count_errors, ErrorReport};
use tabseq_core::{Song, TokenSeq};
use tabseq_genres::spotify::{SpotifyConfig, SpotifyProvider, CLIENT_ID_VAR, CLIENT_SECRET_VAR};
use tabseq_genres::{
    Cache, CatalogMatch, ClientConfig, GenreClient, Provider, ProviderError, StubProvider, SystemClock,
};

use crate::inputs::expand_inputs;
use crate::output::{output_path, write_output, Outcome, Status};
use crate::{Command, Common};

pub fn dispatch(command: &Command) -> Result<Vec<Outcome>, String> {
    Ok(match command {
        Command::Encode { common, no_measure_repeat, strict } => {
            let options = EncodeOptions { measure_repeat: !no_measure_repeat };
            per_file(common, "encode", "gp5", ".tokens.txt", |path, out| encode_file(path, out, options, *strict, common.force))
        }
        Command::Decode { common } => {
            per_file(common, "decode", "txt", ".gp5", |path, out| decode_file(path, out, common.force))
        }
        Command::Roundtrip { common } => per_file(common, "roundtrip", "gp5", "", |path, _| roundtrip_file(path)),
        Command::Validate { common, strict } => validate(common, *strict),
        Command::Stats { common, top } => stats(common, *top),
        Command::Vocab { common } => vocab(common),
        Command::Genres { common, cache, stub, rate } => genres(common, cache.as_deref(), stub.as_deref(), *rate)?,
    })
}

type FileResult = Result<String, (Status, String)>;

/// Runs `job` on every input in parallel. Results keep input order. An
/// input whose output name was already claimed by an earlier one fails.
fn per_file<F>(common: &Common, command: &'static str, extension: &str, out_ext: &str, job: F) -> Vec<Outcome>
where
    F: Fn(&Path, &Path) -> FileResult + Sync,
{
    let mut claimed: HashMap<PathBuf, String> = HashMap::new();
    let planned: Vec<Result<(PathBuf, PathBuf), (String, String)>> = expand_inputs(&common.inputs, extension)
        .into_iter()
        .map(|r| {
            let input = r?;
            let out = output_path(&common.out_dir, &input, out_ext);
            if !out_ext.is_empty() {
                if let Some(first) = claimed.get(&out) {
                    return Err((input.display().to_string(), format!("output {} also produced by {first}", out.display())));
                }
                claimed.insert(out.clone(), input.display().to_string());
            }
            Ok((input, out))
        })
        .collect();
    planned
        .into_par_iter()
        .map(|p| match p {
            Ok((input, out)) => {
                let shown = input.display().to_string();
                match job(&input, &out) {
                    Ok(detail) => Outcome::new(command, shown, Status::Ok, detail),
                    Err((status, detail)) => Outcome::new(command, shown, status, detail),
                }
            }
            Err((arg, why)) => Outcome::new(command, arg, Status::Failed, why),
        })
        .collect()
}

fn failed(e: impl ToString) -> (Status, String) {
    (Status::Failed, e.to_string())
}

fn read_song(path: &Path) -> Result<(Song, ReadReport), (Status, String)> {
    let bytes = std::fs::read(path).map_err(failed)?;
    let (song, report) = read_gp5_with_report(&bytes).map_err(failed)?;
    if report.skipped.get("tuning_rejected").copied().unwrap_or(0) > 0 {
        return Err((Status::Rejected, "unsupported tuning".into()));
    }
    Ok((song, report))
}

fn skipped_summary(report: &ReadReport) -> String {
    report.skipped.iter().map(|(k, n)| format!("{k}={n}")).collect::<Vec<_>>().join(",")
}

fn encode_file(path: &Path, out: &Path, options: EncodeOptions, strict: bool, force: bool) -> FileResult {
    let (song, report) = read_song(path)?;
    if strict && report.total_skipped() > 0 {
        return Err(failed(format!("strict: reader skipped {}", skipped_summary(&report))));
    }
    let tokens = encode_with(&song, &options).map_err(failed)?;
    write_output(out, tokens.to_text().as_bytes(), force).map_err(failed)?;
    let mut detail = format!("{} tokens={}", out.display(), tokens.len());
    if report.total_skipped() > 0 {
        detail += &format!(" skipped={}", skipped_summary(&report));
    }
    Ok(detail)
}

fn decode_file(path: &Path, out: &Path, force: bool) -> FileResult {
    let text = std::fs::read_to_string(path).map_err(failed)?;
    let tokens = TokenSeq::from_text(&text);
    if tokens.is_empty() {
        log::warn!("{}: no tokens, writing a default song", path.display());
    }
    let (song, decoded) = decode_with_report(&tokens);
    let (song, fit) = fit_for_gp5(&song);
    let bytes = write_gp5(&song).map_err(failed)?;
    write_output(out, &bytes, force).map_err(failed)?;
    let mut detail = format!("{} measures={}", out.display(), song.measure_headers.len());
    if decoded.unknown_tokens + decoded.skipped_tokens > 0 {
        detail += &format!(" unknown={} skipped={}", decoded.unknown_tokens, decoded.skipped_tokens);
    }
    if !fit.is_lossless() {
        detail += &format!(" fit={}", serde_json::to_string(&fit).expect("report serializes"));
    }
    Ok(detail)
}

fn roundtrip_file(path: &Path) -> FileResult {
    let (song, _) = read_song(path)?;
    let tokens = encode_with(&song, &EncodeOptions::default()).map_err(failed)?;
    let back = tabseq_core::decode(&tokens);
    match equivalence_diff(&song, &back) {
        None => Ok(format!("equivalent tokens={}", tokens.len())),
        Some(diff) => Err(failed(format!("differs: {diff}"))),
    }
}

fn token_files(common: &Common) -> (Vec<PathBuf>, Vec<Outcome>) {
    let mut files = Vec::new();
    let mut bad = Vec::new();
    for r in expand_inputs(&common.inputs, "txt") {
        match r {
            Ok(p) => files.push(p),
            Err((arg, why)) => bad.push(Outcome::new("", arg, Status::Failed, why)),
        }
    }
    (files, bad)
}

fn with_command(mut outcomes: Vec<Outcome>, command: &'static str) -> Vec<Outcome> {
    for o in &mut outcomes {
        o.command = command;
    }
    outcomes
}

fn validate(common: &Common, strict: bool) -> Vec<Outcome> {
    let (files, mut outcomes) = token_files(common);
    let reports: Vec<(PathBuf, Result<ErrorReport, String>)> = files
        .into_par_iter()
        .map(|p| {
            let r = std::fs::read_to_string(&p).map(|t| count_errors(&TokenSeq::from_text(&t))).map_err(|e| e.to_string());
            (p, r)
        })
        .collect();
    let mut total = ErrorReport::default();
    let mut per_file = Vec::new();
    for (path, r) in reports {
        let shown = path.display().to_string();
        match r {
            Ok(report) => {
                total.absorb(&report);
                let status = if strict && report.total_errors > 0 { Status::Failed } else { Status::Ok };
                outcomes.push(Outcome::new("", &shown, status, report.summary_line()));
                per_file.push(serde_json::json!({ "path": shown, "report": report }));
            }
            Err(e) => outcomes.push(Outcome::new("", shown, Status::Failed, e)),
        }
    }
    let doc = serde_json::json!({ "files": per_file, "total": total });
    finish(common, outcomes, "validate", "errors.json", pretty(&doc), &total.summary_line())
}

fn stats(common: &Common, top: usize) -> Vec<Outcome> {
    let (files, mut outcomes) = token_files(common);
    let parts: Vec<StatsReport> = files.par_iter().map(|p| file_stats(p)).collect();
    let mut report = StatsReport::default();
    for part in &parts {
        report.merge(part);
    }
    for s in &report.skipped_files {
        outcomes.push(Outcome::new("", s.path.display().to_string(), Status::Failed, s.reason.clone()));
    }
    let mut outcomes = finish(common, outcomes, "stats", "stats.json", pretty(&report.to_json(top)), &format!("songs={}", report.songs));
    for (name, csv) in report.to_csv(top) {
        let out = common.out_dir.join(format!("stats_{name}.csv"));
        if let Err(e) = write_output(&out, csv.as_bytes(), common.force) {
            outcomes.push(Outcome::new("stats", out.display().to_string(), Status::Failed, e));
        }
    }
    outcomes
}

fn vocab(common: &Common) -> Vec<Outcome> {
    let (files, mut outcomes) = token_files(common);
    let (vocab, skipped) = build_vocab(&files);
    for s in skipped {
        outcomes.push(Outcome::new("", s.path.display().to_string(), Status::Failed, s.reason));
    }
    finish(common, outcomes, "vocab", "vocab.txt", vocab.to_text(), &format!("size={}", vocab.size()))
}

/// Writes the single aggregate output and appends its outcome line.
fn finish(common: &Common, outcomes: Vec<Outcome>, command: &'static str, name: &str, body: String, detail: &str) -> Vec<Outcome> {
    let mut outcomes = with_command(outcomes, command);
    let out = common.out_dir.join(name);
    let shown = out.display().to_string();
    outcomes.push(match write_output(&out, body.as_bytes(), common.force) {
        Ok(()) => Outcome::new(command, shown, Status::Ok, detail),
        Err(e) => Outcome::new(command, shown, Status::Failed, e),
    });
    outcomes
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

#[derive(Deserialize)]
struct StubEntry {
    artist: String,
    title: String,
    genres: Vec<String>,
}

/// Stands in when no catalog is configured; every lookup is unresolved.
struct NoCatalog;

impl Provider for NoCatalog {
    fn name(&self) -> &str {
        "none"
    }

    fn search(&self, _: &str, _: &str) -> Result<Option<CatalogMatch>, ProviderError> {
        Err(ProviderError::Unavailable(format!("{CLIENT_ID_VAR} and {CLIENT_SECRET_VAR} are not set")))
    }
}

fn provider(stub: Option<&Path>) -> Result<Box<dyn Provider>, String> {
    if let Some(path) = stub {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let entries: Vec<StubEntry> = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut p = StubProvider::new();
        for e in &entries {
            let tags: Vec<&str> = e.genres.iter().map(String::as_str).collect();
            p = p.with(&e.artist, &e.title, &tags);
        }
        return Ok(Box::new(p));
    }
    match SpotifyConfig::from_env() {
        Some(config) => Ok(Box::new(SpotifyProvider::new(config).map_err(|e| e.to_string())?)),
        None => {
            log::warn!("no catalog credentials; records will be unresolved");
            Ok(Box::new(NoCatalog))
        }
    }
}

fn genres(common: &Common, cache: Option<&Path>, stub: Option<&Path>, rate: f64) -> Result<Vec<Outcome>, String> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(format!("--rate must be positive, got {rate}"));
    }
    let cache_path = cache.map_or_else(|| common.out_dir.join("genres-cache.jsonl"), Path::to_path_buf);
    let cache = Cache::open(&cache_path).map_err(|e| format!("{}: {e}", cache_path.display()))?;
    let config = ClientConfig { min_interval: Duration::from_secs_f64(1.0 / rate), ..ClientConfig::default() };
    let client = GenreClient::new(provider(stub)?, cache, Arc::new(SystemClock::default()), config);

    let planned = expand_inputs(&common.inputs, "gp5");
    let results: Vec<(String, Result<tabseq_genres::GenreRecord, String>)> = planned
        .into_par_iter()
        .map(|r| match r {
            Ok(path) => {
                let shown = path.display().to_string();
                let looked_up = std::fs::read(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|b| read_gp5_with_report(&b).map_err(|e| e.to_string()))
                    .and_then(|(song, _)| client.lookup(&song.artist, &song.title).map_err(|e| e.to_string()));
                (shown, looked_up)
            }
            Err((arg, why)) => (arg, Err(why)),
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut lines = String::new();
    for (shown, r) in results {
        match r {
            Ok(record) => {
                lines += &serde_json::to_string(&record).expect("record serializes");
                lines.push('\n');
                let detail = if record.unresolved {
                    format!("unresolved: {}", record.note.as_deref().unwrap_or(""))
                } else {
                    record.genres.join(",")
                };
                outcomes.push(Outcome::new("genres", shown, Status::Ok, detail));
            }
            Err(e) => outcomes.push(Outcome::new("genres", shown, Status::Failed, e)),
        }
    }
    let out = common.out_dir.join("genres.jsonl");
    if let Err(e) = write_output(&out, lines.as_bytes(), common.force) {
        outcomes.push(Outcome::new("genres", out.display().to_string(), Status::Failed, e));
    }
    Ok(outcomes)
}
