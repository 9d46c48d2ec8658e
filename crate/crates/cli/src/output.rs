use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::{EXIT_FILE_FAILURE, EXIT_OK};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Readable but outside what the codec supports, e.g. an odd tuning.
    Rejected,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Rejected => "rejected",
            Status::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: &'static str,
    pub path: String,
    pub status: Status,
    pub detail: String,
}

impl Outcome {
    pub fn new(command: &'static str, path: impl Into<String>, status: Status, detail: impl Into<String>) -> Self {
        Outcome { command, path: path.into(), status, detail: detail.into() }
    }

    pub fn line(&self) -> String {
        // tabs and newlines in details would break the line format
        let detail: String = self.detail.chars().map(|c| if c.is_control() { ' ' } else { c }).collect();
        format!("{}\t{}\t{}\t{}", self.command, self.status.as_str(), self.path, detail)
    }
}

/// Prints lines and a summary, returns the exit code.
pub fn report(outcomes: &[Outcome], quiet: bool) -> i32 {
    let mut stdout = std::io::stdout().lock();
    if !quiet {
        for o in outcomes {
            let _ = writeln!(stdout, "{}", o.line());
        }
    }
    let count = |s: Status| outcomes.iter().filter(|o| o.status == s).count();
    let (ok, rejected, failed) = (count(Status::Ok), count(Status::Rejected), count(Status::Failed));
    eprintln!("summary: ok={ok} rejected={rejected} failed={failed}");
    if rejected + failed == 0 {
        EXIT_OK
    } else {
        EXIT_FILE_FAILURE
    }
}

/// Writes a new file, refusing to replace an existing one unless `force`.
pub fn write_output(path: &Path, bytes: &[u8], force: bool) -> Result<(), String> {
    let mut opts = OpenOptions::new();
    opts.write(true);
    if force {
        opts.create(true).truncate(true);
    } else {
        opts.create_new(true);
    }
    let mut f = opts.open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::AlreadyExists => format!("{} exists (use --force)", path.display()),
        _ => format!("{}: {e}", path.display()),
    })?;
    f.write_all(bytes).map_err(|e| format!("{}: {e}", path.display()))
}

/// `song.gp5` -> `song`, `song.tokens.txt` -> `song`.
pub fn base_name(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    for suffix in [".tokens.txt", ".txt", ".gp5", ".GP5"] {
        if let Some(stem) = name.strip_suffix(suffix) {
            if !stem.is_empty() {
                return stem.to_string();
            }
        }
    }
    name
}

pub fn output_path(out_dir: &Path, input: &Path, extension: &str) -> PathBuf {
    out_dir.join(format!("{}{extension}", base_name(input)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_names() {
        assert_eq!(base_name(Path::new("a/b/song.tokens.txt")), "song");
        assert_eq!(base_name(Path::new("song.gp5")), "song");
        assert_eq!(base_name(Path::new("x.y.txt")), "x.y");
        assert_eq!(base_name(Path::new(".gp5")), ".gp5");
    }

    #[test]
    fn lines_stay_on_one_line() {
        let o = Outcome::new("encode", "a.gp5", Status::Failed, "bad\tthing\nhere");
        assert_eq!(o.line(), "encode\tfailed\ta.gp5\tbad thing here");
    }

    #[test]
    fn refuses_to_overwrite() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x");
        write_output(&p, b"1", false).unwrap();
        assert!(write_output(&p, b"2", false).unwrap_err().contains("--force"));
        write_output(&p, b"3", true).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"3");
    }
}
