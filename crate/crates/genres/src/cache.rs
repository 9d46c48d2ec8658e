//! JSON-lines cache: one `GenreRecord` per line, appended on every store.
//! A later line for the same key replaces an earlier one.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::{cache_key, GenreRecord};

pub struct Cache {
    path: Option<PathBuf>,
    records: HashMap<(String, String), GenreRecord>,
    /// Lines that failed to parse when loading, e.g. a torn final write.
    pub skipped_lines: usize,
}

impl Cache {
    pub fn in_memory() -> Self {
        Cache { path: None, records: HashMap::new(), skipped_lines: 0 }
    }

    /// Loads the file if it exists; it is created on first store.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        let mut cache = Cache { path: Some(path.to_path_buf()), ..Cache::in_memory() };
        let file = match File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(cache),
            Err(e) => return Err(e),
        };
        for line in BufReader::new(file).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<GenreRecord>(&line) {
                Ok(r) => {
                    cache.records.insert(cache_key(&r.artist, &r.title), r);
                }
                Err(e) => {
                    log::warn!("{}: skipping cache line: {e}", path.display());
                    cache.skipped_lines += 1;
                }
            }
        }
        Ok(cache)
    }

    pub fn get(&self, artist: &str, title: &str) -> Option<&GenreRecord> {
        self.records.get(&cache_key(artist, title))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Appends one line and flushes before updating the in-memory map.
    pub fn store(&mut self, record: GenreRecord) -> std::io::Result<()> {
        if let Some(path) = &self.path {
            let mut line = serde_json::to_string(&record).expect("record serializes");
            line.push('\n');
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            f.write_all(line.as_bytes())?;
            f.flush()?;
        }
        self.records.insert(cache_key(&record.artist, &record.title), record);
        Ok(())
    }
}
