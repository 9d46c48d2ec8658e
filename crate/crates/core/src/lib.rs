//! Codec between GuitarPro 5 tablature files and a line-per-token event text
//! format, with a grammar validator and corpus statistics.

pub mod gp5_io;
pub mod song_model;
pub mod stats;
pub mod synth;
pub mod tokenizer;
pub mod validator;

pub use song_model::{
    Beat, BeatContent, BeatEffect, InstrumentSlot, Measure, MeasureHeader, Note, NoteEffect,
    NoteValue, Song, TimeSignature, Track, TICKS_PER_QUARTER,
};

pub use tokenizer::{decode, encode, parse_token, render_token, ticks_to_seconds, Token, TokenSeq};
