//! GuitarPro 5 binary reader and writer for the subset of the format the
//! token grammar covers. The byte layout is documented field by field in
//! `docs/gp5-layout.md` at the repository root.

mod durations;
mod fit;
mod reader;
mod writer;

use std::collections::BTreeMap;

use thiserror::Error;

pub use durations::{decompose, is_representable, representation, GpDuration};
pub(crate) use fit::fix_ties;
pub use fit::{fit_for_gp5, FitReport};
pub use reader::{read_gp5, read_gp5_with_report};
pub use writer::write_gp5;

pub const VERSION_500: &str = "FICHIER GUITAR PRO v5.00";
pub const VERSION_510: &str = "FICHIER GUITAR PRO v5.10";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gp5Version {
    V500,
    V510,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Gp5Error {
    #[error("unsupported version tag {0:?}")]
    UnsupportedVersion(String),
    #[error("malformed file at byte {offset}: {reason}")]
    Malformed { offset: usize, reason: String },
    #[error("song cannot be written: {0}")]
    Contract(String),
}

/// What the reader dropped or repaired, keyed by feature name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReadReport {
    pub version: Gp5Version,
    pub skipped: BTreeMap<&'static str, usize>,
}

impl ReadReport {
    pub(crate) fn count(&mut self, feature: &'static str) {
        *self.skipped.entry(feature).or_default() += 1;
    }

    pub fn total_skipped(&self) -> usize {
        self.skipped.values().sum()
    }
}
