use std::collections::BTreeMap;

use super::durations::{GpDuration, TUPLETS};
use super::{Gp5Error, Gp5Version, ReadReport, VERSION_500, VERSION_510};
use crate::song_model::{
    assign_instrument_slots_with_hints, mark_repeats, merge_tracks_into_slots, validate_tuning, Beat,
    BeatContent, BeatEffect, Bend, BendPoint, Grace, HarmonicKind, InstrumentSlot, Measure,
    MeasureHeader, Note, NoteEffect, SlideKind, Song, TimeSignature, Track, DEFAULT_TEMPO, MAX_DRUM,
    MAX_FRET, MIN_DRUM,
};
use crate::tokenizer::MAX_TEMPO;

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

type Result<T> = std::result::Result<T, Gp5Error>;

impl<'a> Cursor<'a> {
    fn malformed<T>(&self, reason: impl Into<String>) -> Result<T> {
        Err(Gp5Error::Malformed { offset: self.pos, reason: reason.into() })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.data.len() - self.pos < n {
            return self.malformed(format!("unexpected end of data reading {n} bytes"));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn skip(&mut self, n: usize) -> Result<()> {
        self.take(n).map(|_| ())
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn i8(&mut self) -> Result<i8> {
        Ok(self.u8()? as i8)
    }

    fn bool(&mut self) -> Result<bool> {
        Ok(self.u8()? != 0)
    }

    fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let n = self.i32()?;
        if n < 0 {
            return self.malformed(format!("negative {what} {n}"));
        }
        Ok(n as usize)
    }

    fn latin1(bytes: &[u8]) -> String {
        bytes.iter().map(|&b| b as char).collect()
    }

    /// Length byte followed by a fixed `size`-byte field.
    fn byte_size_string(&mut self, size: usize) -> Result<String> {
        let len = self.u8()? as usize;
        let field = self.take(size)?;
        Ok(Self::latin1(&field[..len.min(size)]))
    }

    /// Int holding length + 1, then a length byte and the text.
    fn int_byte_size_string(&mut self) -> Result<String> {
        let n = self.count("string size")?;
        let len = self.u8()? as usize;
        let field = self.take(if n == 0 { len } else { n - 1 })?;
        Ok(Self::latin1(&field[..len.min(field.len())]))
    }

    /// Int length followed by the text.
    fn int_size_string(&mut self) -> Result<String> {
        let n = self.count("string size")?;
        Ok(Self::latin1(self.take(n)?))
    }
}

struct RawTrack {
    name: String,
    tuning: Vec<u8>,
    is_percussion: bool,
    program: u8,
}

struct RawNote {
    string: u8,
    fret: i8,
    tie: bool,
    effects: Vec<NoteEffect>,
}

struct RawBeat {
    duration: u32,
    empty: bool,
    rest: bool,
    notes: Vec<RawNote>,
    effects: Vec<BeatEffect>,
    tempo: Option<i32>,
}

struct Parser<'a> {
    cur: Cursor<'a>,
    version: Gp5Version,
    report: ReadReport,
}

pub fn read_gp5(bytes: &[u8]) -> Result<Song> {
    read_gp5_with_report(bytes).map(|(song, _)| song)
}

/// Reads a v5.00 or v5.10 file. Features outside the token grammar are
/// skipped and counted in the report.
pub fn read_gp5_with_report(bytes: &[u8]) -> Result<(Song, ReadReport)> {
    let mut cur = Cursor { data: bytes, pos: 0 };
    let version_tag = cur.byte_size_string(30)?;
    let version = match version_tag.as_str() {
        VERSION_500 => Gp5Version::V500,
        VERSION_510 => Gp5Version::V510,
        _ => return Err(Gp5Error::UnsupportedVersion(version_tag)),
    };
    let mut p = Parser { cur, version, report: ReadReport { version, skipped: BTreeMap::new() } };
    let song = p.song()?;
    Ok((song, p.report))
}

impl Parser<'_> {
    fn v510(&self) -> bool {
        self.version == Gp5Version::V510
    }

    fn song(&mut self) -> Result<Song> {
        let mut info = Vec::new();
        for _ in 0..9 {
            info.push(self.cur.int_byte_size_string()?);
        }
        let notices = self.cur.count("notice count")?;
        for _ in 0..notices {
            self.cur.int_byte_size_string()?;
        }
        // lyrics
        self.cur.i32()?;
        for _ in 0..5 {
            self.cur.i32()?;
            if !self.cur.int_size_string()?.is_empty() {
                self.report.count("lyrics");
            }
        }
        if self.v510() {
            self.cur.skip(19)?;
        }
        // page setup
        self.cur.skip(7 * 4 + 2)?;
        for _ in 0..10 {
            self.cur.int_byte_size_string()?;
        }
        self.cur.int_byte_size_string()?;
        let tempo = self.cur.i32()?;
        if self.v510() {
            self.cur.bool()?;
        }
        if self.cur.i8()? != 0 {
            self.report.count("key_signature");
        }
        self.cur.i32()?;
        let mut programs = Vec::with_capacity(64);
        for _ in 0..64 {
            programs.push(self.cur.i32()?.clamp(0, 127) as u8);
            self.cur.skip(8)?;
        }
        for _ in 0..19 {
            if self.cur.i16()? != -1 {
                self.report.count("directions");
            }
        }
        self.cur.i32()?;
        let measure_count = self.cur.count("measure count")?;
        let track_count = self.cur.count("track count")?;

        let mut signatures = Vec::new();
        for i in 0..measure_count {
            let previous = signatures.last().copied();
            signatures.push(self.measure_header(i, previous)?);
        }
        let mut raw_tracks = Vec::new();
        for i in 0..track_count {
            raw_tracks.push(self.track(i, &programs)?);
        }
        self.cur.skip(if self.v510() { 1 } else { 2 })?;

        let mut beats: Vec<Vec<Vec<RawBeat>>> = (0..track_count).map(|_| Vec::new()).collect();
        for _ in 0..measure_count {
            for track_beats in beats.iter_mut() {
                let m = self.measure()?;
                track_beats.push(m);
            }
        }
        if self.cur.pos != self.cur.data.len() {
            return self.cur.malformed(format!("{} trailing bytes", self.cur.data.len() - self.cur.pos));
        }
        self.build(info, tempo, signatures, raw_tracks, beats)
    }

    fn measure_header(&mut self, index: usize, previous: Option<TimeSignature>) -> Result<TimeSignature> {
        if index > 0 {
            self.cur.skip(1)?;
        }
        let flags = self.cur.u8()?;
        let mut sig = previous.unwrap_or_default();
        if flags & 0x01 != 0 {
            let n = self.cur.i8()?;
            if n < 1 {
                return self.cur.malformed(format!("time signature numerator {n}"));
            }
            sig.numerator = n as u8;
        }
        if flags & 0x02 != 0 {
            let d = self.cur.i8()?;
            if ![1, 2, 4, 8, 16, 32, 64].contains(&d) {
                return self.cur.malformed(format!("time signature denominator {d}"));
            }
            sig.denominator = d as u8;
        }
        if flags & 0x04 != 0 {
            self.report.count("repeats");
        }
        if flags & 0x08 != 0 {
            self.cur.i8()?;
        }
        if flags & 0x20 != 0 {
            self.report.count("markers");
            self.cur.int_byte_size_string()?;
            self.cur.skip(4)?;
        }
        if flags & 0x40 != 0 {
            self.report.count("key_signature");
            self.cur.skip(2)?;
        }
        if flags & 0x10 != 0 {
            self.report.count("alternate_endings");
            self.cur.u8()?;
        }
        if flags & 0x03 != 0 {
            self.cur.skip(4)?;
        }
        if flags & 0x10 == 0 {
            self.cur.skip(1)?;
        }
        if self.cur.u8()? != 0 {
            self.report.count("triplet_feel");
        }
        Ok(sig)
    }

    fn track(&mut self, index: usize, programs: &[u8]) -> Result<RawTrack> {
        if index == 0 || !self.v510() {
            self.cur.skip(1)?;
        }
        let flags = self.cur.u8()?;
        let name = self.cur.byte_size_string(40)?;
        let strings = self.cur.i32()?;
        if !(1..=7).contains(&strings) {
            return self.cur.malformed(format!("string count {strings}"));
        }
        let mut tuning = Vec::new();
        for i in 0..7 {
            let pitch = self.cur.i32()?;
            if i < strings {
                tuning.push(pitch.clamp(0, 127) as u8);
            }
        }
        self.cur.i32()?; // port
        let channel = self.cur.i32()? - 1;
        self.cur.i32()?; // effect channel
        self.cur.i32()?; // fret count
        if self.cur.i32()? != 0 {
            self.report.count("capo");
        }
        self.cur.skip(4)?; // color
        self.cur.skip(2 + 1 + 1 + 1 + 12 + 12 + 12)?;
        if self.v510() {
            self.cur.skip(4 + 4)?;
            self.cur.int_byte_size_string()?;
            self.cur.int_byte_size_string()?;
        } else {
            self.cur.skip(3)?;
        }
        let channel_ok = (0..64).contains(&channel);
        let is_percussion = flags & 0x01 != 0 || (channel_ok && channel % 16 == 9);
        let program = if channel_ok { programs[channel as usize] } else { 0 };
        Ok(RawTrack { name, tuning, is_percussion, program })
    }

    fn measure(&mut self) -> Result<Vec<RawBeat>> {
        let mut first = Vec::new();
        for voice in 0..2 {
            let n = self.cur.count("beat count")?;
            for _ in 0..n {
                let beat = self.beat()?;
                if voice == 0 {
                    first.push(beat);
                } else if !beat.empty {
                    self.report.count("second_voice_beats");
                }
            }
        }
        self.cur.u8()?; // line break
        Ok(first)
    }

    fn beat(&mut self) -> Result<RawBeat> {
        let flags = self.cur.u8()?;
        let status = if flags & 0x40 != 0 { self.cur.u8()? } else { 1 };
        let code = self.cur.i8()?;
        if !(-2..=4).contains(&code) {
            return self.cur.malformed(format!("duration code {code}"));
        }
        let mut d = GpDuration { value: 1 << (code + 2), dotted: flags & 0x01 != 0, enters: 1 };
        if flags & 0x20 != 0 {
            let enters = self.cur.i32()?;
            if TUPLETS.iter().any(|t| t.0 as i32 == enters) {
                d.enters = enters as u32;
            } else {
                self.report.count("unsupported_tuplets");
            }
        }
        let duration = match d.ticks() {
            Some(t) => t,
            None => {
                self.report.count("inexact_durations");
                d.ticks_floor()
            }
        };
        if flags & 0x02 != 0 {
            self.report.count("chord_diagrams");
            self.chord()?;
        }
        if flags & 0x04 != 0 {
            self.report.count("beat_text");
            self.cur.int_byte_size_string()?;
        }
        let effects = if flags & 0x08 != 0 { self.beat_effects()? } else { Vec::new() };
        let tempo = if flags & 0x10 != 0 { self.mix_table()? } else { None };
        let string_flags = self.cur.u8()?;
        if string_flags & 0x80 != 0 {
            self.report.count("dropped_notes");
        }
        let mut notes = Vec::new();
        for string in 1..=7u8 {
            if string_flags & (1 << (7 - string)) != 0 {
                notes.push(self.note(string)?);
            }
        }
        let flags2 = self.cur.i16()?;
        if flags2 & 0x0800 != 0 {
            self.cur.u8()?;
        }
        Ok(RawBeat { duration, empty: status == 0, rest: status == 2, notes, effects, tempo })
    }

    fn chord(&mut self) -> Result<()> {
        if self.cur.bool()? {
            self.cur.skip(106)
        } else {
            self.cur.int_byte_size_string()?;
            if self.cur.i32()? != 0 {
                self.cur.skip(6 * 4)?;
            }
            Ok(())
        }
    }

    fn bend(&mut self) -> Result<Option<Bend>> {
        let kind = self.cur.i8()?;
        self.cur.i32()?;
        let n = self.cur.count("bend point count")?;
        let mut points = Vec::new();
        for _ in 0..n {
            let pos = self.cur.i32()?;
            let val = self.cur.i32()?;
            let vibrato = self.cur.bool()?;
            let position = ((pos.clamp(0, 60) as f64) * 12.0 / 60.0).round() as u8;
            let value = (val as f64 / 25.0).round().clamp(i8::MIN as f64, i8::MAX as f64) as i8;
            points.push(BendPoint { position, value, vibrato });
        }
        Ok((1..=11).contains(&kind).then_some(Bend { kind: kind as u8, points }))
    }

    fn beat_effects(&mut self) -> Result<Vec<BeatEffect>> {
        let f1 = self.cur.u8()?;
        let f2 = self.cur.u8()?;
        let mut out = Vec::new();
        if f1 & 0x02 != 0 {
            self.report.count("beat_vibrato");
        }
        if f1 & 0x10 != 0 {
            out.push(BeatEffect::FadeIn);
        }
        if f1 & 0x20 != 0 {
            match self.cur.i8()? {
                0 => {}
                1 => out.push(BeatEffect::Tapping),
                2 => out.push(BeatEffect::Slapping),
                3 => out.push(BeatEffect::Popping),
                _ => self.report.count("unknown_slap"),
            }
        }
        if f2 & 0x04 != 0 {
            self.report.count("tremolo_bar");
            self.bend()?;
        }
        if f1 & 0x40 != 0 {
            let up = self.cur.i8()?;
            let down = self.cur.i8()?;
            match (up, down) {
                (1..=6, _) => out.push(BeatEffect::StrokeUp(up as u8)),
                (_, 1..=6) => out.push(BeatEffect::StrokeDown(down as u8)),
                (0, 0) => {}
                _ => self.report.count("unknown_stroke"),
            }
        }
        if f2 & 0x01 != 0 {
            self.report.count("rasgueado");
        }
        if f2 & 0x02 != 0 {
            self.report.count("pick_stroke");
            self.cur.i8()?;
        }
        Ok(out)
    }

    /// Returns the tempo carried by the table, if any.
    fn mix_table(&mut self) -> Result<Option<i32>> {
        let instrument = self.cur.i8()?;
        self.cur.skip(16)?; // RSE instrument and padding
        let mut values = [0i8; 6];
        for v in values.iter_mut() {
            *v = self.cur.i8()?;
        }
        self.cur.int_byte_size_string()?;
        let tempo = self.cur.i32()?;
        for v in values {
            if v >= 0 {
                self.cur.i8()?;
            }
        }
        if tempo >= 0 {
            self.cur.i8()?;
            if self.v510() {
                self.cur.bool()?;
            }
        }
        self.cur.u8()?; // apply-to-all flags
        self.cur.i8()?; // wah
        if self.v510() {
            self.cur.int_byte_size_string()?;
            self.cur.int_byte_size_string()?;
        }
        if instrument >= 0 || values.iter().any(|&v| v >= 0) {
            self.report.count("mix_table_changes");
        }
        Ok((tempo >= 0).then_some(tempo))
    }

    fn note(&mut self, string: u8) -> Result<RawNote> {
        let flags = self.cur.u8()?;
        let mut effects = Vec::new();
        let mut kind = 1;
        let mut fret = 0;
        if flags & 0x20 != 0 {
            kind = self.cur.u8()?;
        }
        if flags & 0x10 != 0 {
            self.report.count("dynamics");
            self.cur.i8()?;
        }
        if flags & 0x20 != 0 {
            fret = self.cur.i8()?;
        }
        if flags & 0x80 != 0 {
            self.report.count("fingering");
            self.cur.skip(2)?;
        }
        if flags & 0x01 != 0 {
            self.report.count("duration_percent");
            self.cur.skip(8)?;
        }
        self.cur.u8()?;
        if flags & 0x02 != 0 {
            effects.push(NoteEffect::HeavyAccentuated);
        }
        if flags & 0x04 != 0 {
            effects.push(NoteEffect::GhostNote);
        }
        if flags & 0x40 != 0 {
            effects.push(NoteEffect::Accentuated);
        }
        if kind == 3 {
            self.report.count("dead_notes");
        }
        if flags & 0x08 != 0 {
            self.note_effects(&mut effects)?;
        }
        Ok(RawNote { string, fret, tie: kind == 2, effects })
    }

    fn note_effects(&mut self, out: &mut Vec<NoteEffect>) -> Result<()> {
        let f1 = self.cur.u8()?;
        let f2 = self.cur.u8()?;
        if f1 & 0x01 != 0 {
            match self.bend()? {
                Some(b) => out.push(NoteEffect::Bend(b)),
                None => self.report.count("unknown_bends"),
            }
        }
        if f1 & 0x02 != 0 {
            out.push(NoteEffect::Hammer);
        }
        if f1 & 0x08 != 0 {
            out.push(NoteEffect::LetRing);
        }
        if f1 & 0x10 != 0 {
            let fret = self.cur.u8()?;
            self.cur.u8()?; // dynamic
            let transition = self.cur.u8()?;
            let code = self.cur.u8()?;
            let flags = self.cur.u8()?;
            let duration = match code {
                1..=3 => 1u8 << (7 - code),
                _ => 0,
            };
            if fret <= MAX_FRET && transition <= 3 && duration != 0 {
                out.push(NoteEffect::Grace(Grace {
                    fret,
                    duration,
                    transition,
                    dead: flags & 0x01 != 0,
                    on_beat: flags & 0x02 != 0,
                }));
            } else {
                self.report.count("unknown_graces");
            }
        }
        if f2 & 0x01 != 0 {
            out.push(NoteEffect::Staccato);
        }
        if f2 & 0x02 != 0 {
            out.push(NoteEffect::PalmMute);
        }
        if f2 & 0x04 != 0 {
            match self.cur.i8()? {
                1 => out.push(NoteEffect::TremoloPicking(8)),
                2 => out.push(NoteEffect::TremoloPicking(16)),
                3 => out.push(NoteEffect::TremoloPicking(32)),
                _ => self.report.count("unknown_tremolo_picking"),
            }
        }
        if f2 & 0x08 != 0 {
            let bits = self.cur.u8()?;
            out.extend(SlideKind::ALL.iter().filter(|k| bits & k.gp5_bit() != 0).map(|&k| NoteEffect::Slide(k)));
        }
        if f2 & 0x10 != 0 {
            let harmonic = match self.cur.i8()? {
                1 => Some(HarmonicKind::Natural),
                2 => {
                    let semitone = self.cur.u8()?;
                    let accidental = self.cur.i8()?;
                    let octave = self.cur.u8()?;
                    (semitone <= 11 && (-1..=1).contains(&accidental) && octave <= 2)
                        .then_some(HarmonicKind::Artificial { semitone, accidental, octave })
                }
                3 => {
                    let fret = self.cur.u8()?;
                    (fret <= MAX_FRET).then_some(HarmonicKind::Tapped { fret })
                }
                4 => Some(HarmonicKind::Pinch),
                5 => Some(HarmonicKind::Semi),
                _ => None,
            };
            match harmonic {
                Some(h) => out.push(NoteEffect::Harmonic(h)),
                None => self.report.count("unknown_harmonics"),
            }
        }
        if f2 & 0x20 != 0 {
            let fret = self.cur.i8()?;
            let period = match self.cur.i8()? {
                1 => 16,
                2 => 32,
                3 => 64,
                _ => 0,
            };
            if (0..=MAX_FRET as i8).contains(&fret) && period != 0 {
                out.push(NoteEffect::Trill { fret: fret as u8, period });
            } else {
                self.report.count("unknown_trills");
            }
        }
        if f2 & 0x40 != 0 {
            out.push(NoteEffect::Vibrato);
        }
        Ok(())
    }

    fn build(
        &mut self,
        info: Vec<String>,
        tempo: i32,
        signatures: Vec<TimeSignature>,
        raw_tracks: Vec<RawTrack>,
        beats: Vec<Vec<Vec<RawBeat>>>,
    ) -> Result<Song> {
        let initial_tempo = if tempo <= 0 {
            self.report.count("missing_tempo");
            DEFAULT_TEMPO
        } else {
            clamp_tempo(tempo, &mut self.report)
        };
        let mut headers: Vec<MeasureHeader> =
            signatures.iter().enumerate().map(|(i, &s)| MeasureHeader::new(i, s)).collect();

        let hints: Vec<_> = raw_tracks
            .iter()
            .map(|t| (t.program, t.is_percussion, InstrumentSlot::from_name(t.name.trim())))
            .collect();
        let slots = assign_instrument_slots_with_hints(&hints);
        let mut tracks = Vec::new();
        for ((raw, slot), track_beats) in raw_tracks.into_iter().zip(slots).zip(beats) {
            let mut last_fret: [Option<u8>; 8] = [None; 8];
            let mut measures = Vec::new();
            for (header, raw_beats) in headers.iter_mut().zip(track_beats) {
                let span = header.span();
                let mut beats_out: Vec<Beat> = Vec::new();
                let mut onset = 0u32;
                for rb in raw_beats {
                    if rb.empty {
                        self.report.count("empty_beats");
                        continue;
                    }
                    if onset >= span {
                        self.report.count("clipped_beats");
                        continue;
                    }
                    if let Some(t) = rb.tempo {
                        let t = if t == 0 { DEFAULT_TEMPO } else { clamp_tempo(t, &mut self.report) };
                        if onset != 0 {
                            self.report.count("moved_tempo_changes");
                        }
                        if header.tempo_change.is_none() {
                            header.tempo_change = Some(t);
                        } else if header.tempo_change != Some(t) {
                            self.report.count("conflicting_tempo_changes");
                        }
                    }
                    let notes: Vec<Note> = if rb.rest {
                        Vec::new()
                    } else {
                        rb.notes
                            .into_iter()
                            .filter_map(|n| self.note_value(&raw, n, &mut last_fret))
                            .collect()
                    };
                    let duration = rb.duration.min(span - onset);
                    if duration < rb.duration {
                        self.report.count("truncated_beats");
                    }
                    let mut effects = rb.effects;
                    crate::song_model::canonicalize_beat_effects(&mut effects);
                    beats_out.push(Beat { onset, duration, content: BeatContent::canonical(notes), effects });
                    onset += duration;
                }
                if onset < span {
                    if !beats_out.is_empty() {
                        self.report.count("padded_measures");
                    }
                    beats_out.push(Beat::rest(onset, span - onset));
                }
                measures.push(Measure { beats: beats_out });
            }
            tracks.push(if raw.is_percussion {
                Track { slot, ..Track::drums(measures) }
            } else {
                Track { slot, string_count: raw.tuning.len() as u8, tuning: raw.tuning, is_percussion: false, measures }
            });
        }
        let before = tracks.len();
        let tracks = merge_tracks_into_slots(tracks)
            .map_err(|e| Gp5Error::Malformed { offset: self.cur.pos, reason: e.to_string() })?;
        for _ in tracks.len()..before {
            self.report.count("merged_tracks");
        }
        let mut info = info.into_iter();
        let title = info.next().unwrap_or_default();
        info.next();
        let artist = info.next().unwrap_or_default();
        let mut song = Song { artist, title, initial_tempo, downtune: 0, tracks, measure_headers: headers };
        match validate_tuning(&song) {
            Ok(t) => song.downtune = t.downtune,
            Err(e) => {
                log::debug!("tuning not encodable: {e}");
                self.report.count("tuning_rejected");
            }
        }
        mark_repeats(&mut song);
        Ok(song)
    }

    fn note_value(&mut self, track: &RawTrack, raw: RawNote, last_fret: &mut [Option<u8>; 8]) -> Option<Note> {
        if track.is_percussion {
            let midi = raw.fret;
            if !(MIN_DRUM as i8..=MAX_DRUM as i8).contains(&midi) {
                self.report.count("dropped_notes");
                return None;
            }
            let mut effects = raw.effects;
            if raw.tie {
                effects.push(NoteEffect::Tie);
            }
            return Some(Note::drum(midi as u8).with_effects(effects));
        }
        if raw.string as usize > track.tuning.len() || !(0..=MAX_FRET as i8).contains(&raw.fret) {
            self.report.count("dropped_notes");
            return None;
        }
        let s = raw.string as usize;
        let mut effects = raw.effects;
        let fret = if raw.tie {
            effects.push(NoteEffect::Tie);
            last_fret[s].unwrap_or(raw.fret as u8)
        } else {
            raw.fret as u8
        };
        last_fret[s] = Some(fret);
        Some(Note::fretted(raw.string, fret).with_effects(effects))
    }
}

fn clamp_tempo(tempo: i32, report: &mut ReadReport) -> u32 {
    if tempo > MAX_TEMPO as i32 {
        report.count("clamped_tempos");
    }
    tempo.clamp(1, MAX_TEMPO as i32) as u32
}
