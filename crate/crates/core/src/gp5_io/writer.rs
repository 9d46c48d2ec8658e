use super::durations::representation;
use super::{Gp5Error, VERSION_500};
use crate::song_model::{
    Beat, BeatContent, BeatEffect, Bend, HarmonicKind, Note, NoteEffect, NoteValue, Song, Track,
};

const PITCHED_CHANNELS: [(i32, i32); 8] = [(0, 1), (2, 3), (4, 5), (6, 7), (10, 11), (12, 13), (14, 15), (16, 17)];
const DRUM_CHANNEL: i32 = 9;
const MAX_DRUM_HITS: usize = 7;

const PAGE_HEADERS: [&str; 10] = [
    "%title%",
    "%subtitle%",
    "%artist%",
    "%album%",
    "Words by %words%",
    "Music by %music%",
    "Words & Music by %WORDSMUSIC%",
    "Copyright %copyright%",
    "All Rights Reserved - International Copyright Secured",
    "Page %N%/%P%",
];

#[derive(Default)]
struct Out {
    buf: Vec<u8>,
}

impl Out {
    fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    fn i8(&mut self, v: i8) {
        self.buf.push(v as u8);
    }

    fn bool(&mut self, v: bool) {
        self.buf.push(v as u8);
    }

    fn i16(&mut self, v: i16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn i32(&mut self, v: i32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn zeros(&mut self, n: usize) {
        self.buf.resize(self.buf.len() + n, 0);
    }

    /// Latin-1 bytes, unrepresentable characters become '?'.
    fn latin1(text: &str, max: usize) -> Vec<u8> {
        text.chars().map(|c| u8::try_from(c as u32).unwrap_or(b'?')).take(max).collect()
    }

    fn byte_size_string(&mut self, text: &str, size: usize) {
        let bytes = Self::latin1(text, size);
        self.u8(bytes.len() as u8);
        self.buf.extend_from_slice(&bytes);
        self.zeros(size - bytes.len());
    }

    fn int_byte_size_string(&mut self, text: &str) {
        let bytes = Self::latin1(text, 255);
        self.i32(bytes.len() as i32 + 1);
        self.u8(bytes.len() as u8);
        self.buf.extend_from_slice(&bytes);
    }

    fn int_size_string(&mut self, text: &str) {
        let bytes = Self::latin1(text, 255);
        self.i32(bytes.len() as i32);
        self.buf.extend_from_slice(&bytes);
    }
}

fn contract<T>(reason: impl Into<String>) -> Result<T, Gp5Error> {
    Err(Gp5Error::Contract(reason.into()))
}

fn max_drum_hits(track: &Track) -> usize {
    track.measures.iter().flat_map(|m| &m.beats).map(|b| b.content.notes().len()).max().unwrap_or(0)
}

fn check_writable(song: &Song) -> Result<(), Gp5Error> {
    song.check_invariants().map_err(|e| Gp5Error::Contract(e.to_string()))?;
    if song.tracks.is_empty() {
        return contract("song has no tracks");
    }
    if song.measure_headers.is_empty() {
        return contract("song has no measures");
    }
    if song.downtune != 0 && song.tracks.iter().all(|t| t.is_percussion) {
        return contract("downtune without a pitched track cannot be stored");
    }
    if song.tracks.iter().filter(|t| !t.is_percussion).count() > PITCHED_CHANNELS.len() {
        return contract("too many pitched tracks");
    }
    for t in &song.tracks {
        if t.is_percussion && max_drum_hits(t) > MAX_DRUM_HITS {
            return contract(format!("drum beat with more than {MAX_DRUM_HITS} hits"));
        }
        for (m, h) in t.measures.iter().zip(&song.measure_headers) {
            if h.time_signature.numerator > i8::MAX as u8 {
                return contract(format!("measure {} numerator too large", h.index));
            }
            for b in &m.beats {
                if representation(b.duration).is_none() {
                    return contract(format!(
                        "slot {} measure {} beat at {} has unrepresentable duration {}",
                        t.slot, h.index, b.onset, b.duration
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Serializes a song as a v5.00 file. Output depends only on the song.
/// Songs with durations that have no single GP5 encoding are rejected;
/// `fit_for_gp5` prepares arbitrary songs.
pub fn write_gp5(song: &Song) -> Result<Vec<u8>, Gp5Error> {
    check_writable(song)?;
    let mut o = Out::default();
    o.byte_size_string(VERSION_500, 30);
    for field in [song.title.as_str(), "", song.artist.as_str(), "", "", "", "", "", ""] {
        o.int_byte_size_string(field);
    }
    o.i32(0); // notice lines
    o.i32(0);
    for _ in 0..5 {
        o.i32(1);
        o.int_size_string("");
    }
    for v in [210, 297, 10, 10, 15, 10, 100] {
        o.i32(v);
    }
    o.u8(0xFF);
    o.u8(0x01);
    for h in PAGE_HEADERS {
        o.int_byte_size_string(h);
    }
    o.int_byte_size_string("Moderate");
    o.i32(song.initial_tempo as i32);
    o.i8(0);
    o.i32(0);

    let mut channels = Vec::new();
    let mut programs = [25i32; 64];
    let mut pitched = PITCHED_CHANNELS.iter();
    for t in &song.tracks {
        let pair = if t.is_percussion {
            (DRUM_CHANNEL, DRUM_CHANNEL)
        } else {
            *pitched.next().expect("checked track count")
        };
        programs[pair.0 as usize] = t.slot.program() as i32;
        channels.push(pair);
    }
    for (i, program) in programs.iter().enumerate() {
        o.i32(if i % 16 == DRUM_CHANNEL as usize { -1 } else { *program });
        o.i8(13);
        o.i8(8);
        o.zeros(4 + 2);
    }
    for _ in 0..19 {
        o.i16(-1);
    }
    o.i32(0);
    o.i32(song.measure_headers.len() as i32);
    o.i32(song.tracks.len() as i32);

    let mut previous = None;
    for (i, h) in song.measure_headers.iter().enumerate() {
        if i > 0 {
            o.u8(0);
        }
        let ts = h.time_signature;
        let mut flags = 0u8;
        if previous.is_none_or(|p: crate::TimeSignature| p.numerator != ts.numerator) {
            flags |= 0x01;
        }
        if previous.is_none_or(|p: crate::TimeSignature| p.denominator != ts.denominator) {
            flags |= 0x02;
        }
        o.u8(flags);
        if flags & 0x01 != 0 {
            o.i8(ts.numerator as i8);
        }
        if flags & 0x02 != 0 {
            o.i8(ts.denominator as i8);
        }
        if flags & 0x03 != 0 {
            o.buf.extend_from_slice(&[2, 2, 2, 2]);
        }
        o.u8(0);
        o.u8(0); // triplet feel
        previous = Some(ts);
    }

    for (t, &(channel, effect)) in song.tracks.iter().zip(&channels) {
        write_track(&mut o, t, channel, effect);
    }
    o.zeros(2);

    for (m, h) in song.measure_headers.iter().enumerate() {
        for (ti, t) in song.tracks.iter().enumerate() {
            let beats = &t.measures[m].beats;
            o.i32(beats.len() as i32);
            for (bi, b) in beats.iter().enumerate() {
                let tempo = if ti == 0 && bi == 0 { h.tempo_change } else { None };
                write_beat(&mut o, t, b, tempo);
            }
            o.i32(0); // second voice
            o.u8(0); // line break
        }
    }
    Ok(o.buf)
}

fn write_track(o: &mut Out, t: &Track, channel: i32, effect: i32) {
    o.u8(0);
    o.u8(t.is_percussion as u8);
    o.byte_size_string(t.slot.name(), 40);
    let strings = if t.is_percussion {
        if max_drum_hits(t) > 6 {
            7
        } else {
            6
        }
    } else {
        t.string_count as i32
    };
    o.i32(strings);
    for i in 0..7 {
        o.i32(t.tuning.get(i).copied().unwrap_or(0) as i32);
    }
    o.i32(1);
    o.i32(channel + 1);
    o.i32(effect + 1);
    let max_fret = t
        .measures
        .iter()
        .flat_map(|m| &m.beats)
        .flat_map(|b| b.content.notes())
        .filter_map(|n| match n.value {
            NoteValue::Fretted { fret, .. } => Some(fret as i32),
            NoteValue::Percussion(_) => None,
        })
        .max()
        .unwrap_or(0);
    o.i32(max_fret.max(24));
    o.i32(0);
    o.buf.extend_from_slice(&[255, 0, 0, 0]);
    o.i16(0x0003);
    o.u8(0);
    o.u8(0);
    o.u8(0);
    let clef = if t.tuning.last().is_some_and(|&p| p < 35) { 12 } else { 0 };
    o.i32(clef);
    o.i32(clef);
    o.i32(100);
    o.zeros(12);
    o.i32(-1);
    o.i32(-1);
    o.i32(-1);
    o.i16(-1);
    o.u8(0);
}

fn write_beat(o: &mut Out, t: &Track, b: &Beat, tempo: Option<u32>) {
    let d = representation(b.duration).expect("checked durations");
    let mut flags = 0u8;
    if d.dotted {
        flags |= 0x01;
    }
    if !b.effects.is_empty() {
        flags |= 0x08;
    }
    if tempo.is_some() {
        flags |= 0x10;
    }
    if d.enters != 1 {
        flags |= 0x20;
    }
    if b.is_rest() {
        flags |= 0x40;
    }
    o.u8(flags);
    if b.is_rest() {
        o.u8(2);
    }
    o.i8(d.code());
    if d.enters != 1 {
        o.i32(d.enters as i32);
    }
    if !b.effects.is_empty() {
        write_beat_effects(o, &b.effects);
    }
    if let Some(tempo) = tempo {
        write_tempo_change(o, tempo);
    }
    let placed: Vec<(u8, &Note)> = match &b.content {
        BeatContent::Rest => Vec::new(),
        BeatContent::Notes(notes) if t.is_percussion => {
            notes.iter().enumerate().map(|(i, n)| (i as u8 + 1, n)).collect()
        }
        BeatContent::Notes(notes) => notes.iter().map(|n| (n.string().expect("fretted"), n)).collect(),
    };
    let mut placed = placed;
    placed.sort_by_key(|(s, _)| *s);
    o.u8(placed.iter().fold(0u8, |acc, (s, _)| acc | 1 << (7 - s)));
    for (_, n) in placed {
        write_note(o, n);
    }
    o.i16(0);
}

fn write_beat_effects(o: &mut Out, effects: &[BeatEffect]) {
    let mut f1 = 0u8;
    let mut slap = 0i8;
    let mut stroke = None;
    for e in effects {
        match *e {
            BeatEffect::FadeIn => f1 |= 0x10,
            BeatEffect::Tapping => slap = 1,
            BeatEffect::Slapping => slap = 2,
            BeatEffect::Popping => slap = 3,
            BeatEffect::StrokeUp(v) => stroke = Some((v as i8, 0)),
            BeatEffect::StrokeDown(v) => stroke = Some((0, v as i8)),
        }
    }
    if slap != 0 {
        f1 |= 0x20;
    }
    if stroke.is_some() {
        f1 |= 0x40;
    }
    o.u8(f1);
    o.u8(0);
    if slap != 0 {
        o.i8(slap);
    }
    if let Some((up, down)) = stroke {
        o.i8(up);
        o.i8(down);
    }
}

fn write_tempo_change(o: &mut Out, tempo: u32) {
    o.i8(-1);
    o.i32(-1);
    o.i32(-1);
    o.i32(-1);
    o.i16(-1);
    o.u8(0);
    o.u8(0);
    for _ in 0..6 {
        o.i8(-1);
    }
    o.int_byte_size_string("");
    o.i32(tempo as i32);
    o.i8(0); // transition duration
    o.u8(0);
    o.i8(-1); // wah
}

fn write_note(o: &mut Out, n: &Note) {
    let mut flags = 0x20u8;
    let mut has_effects = false;
    for e in &n.effects {
        match e {
            NoteEffect::HeavyAccentuated => flags |= 0x02,
            NoteEffect::GhostNote => flags |= 0x04,
            NoteEffect::Accentuated => flags |= 0x40,
            NoteEffect::Tie => {}
            _ => has_effects = true,
        }
    }
    if has_effects {
        flags |= 0x08;
    }
    o.u8(flags);
    o.u8(if n.is_tied() { 2 } else { 1 });
    o.i8(match n.value {
        NoteValue::Fretted { fret, .. } => fret as i8,
        NoteValue::Percussion(m) => m as i8,
    });
    o.u8(0);
    if has_effects {
        write_note_effects(o, &n.effects);
    }
}

fn write_bend(o: &mut Out, bend: &Bend) {
    o.i8(bend.kind as i8);
    o.i32(bend.points.iter().map(|p| p.value as i32).max().unwrap_or(0) * 25);
    o.i32(bend.points.len() as i32);
    for p in &bend.points {
        o.i32(p.position as i32 * 5);
        o.i32(p.value as i32 * 25);
        o.bool(p.vibrato);
    }
}

fn write_note_effects(o: &mut Out, effects: &[NoteEffect]) {
    let (mut f1, mut f2) = (0u8, 0u8);
    let mut slides = 0u8;
    for e in effects {
        match e {
            NoteEffect::Bend(_) => f1 |= 0x01,
            NoteEffect::Hammer => f1 |= 0x02,
            NoteEffect::LetRing => f1 |= 0x08,
            NoteEffect::Grace(_) => f1 |= 0x10,
            NoteEffect::Staccato => f2 |= 0x01,
            NoteEffect::PalmMute => f2 |= 0x02,
            NoteEffect::TremoloPicking(_) => f2 |= 0x04,
            NoteEffect::Slide(k) => {
                f2 |= 0x08;
                slides |= k.gp5_bit();
            }
            NoteEffect::Harmonic(_) => f2 |= 0x10,
            NoteEffect::Trill { .. } => f2 |= 0x20,
            NoteEffect::Vibrato => f2 |= 0x40,
            NoteEffect::Tie | NoteEffect::GhostNote | NoteEffect::Accentuated | NoteEffect::HeavyAccentuated => {}
        }
    }
    o.u8(f1);
    o.u8(f2);
    for e in effects {
        if let NoteEffect::Bend(b) = e {
            write_bend(o, b);
        }
    }
    for e in effects {
        if let NoteEffect::Grace(g) = e {
            o.u8(g.fret);
            o.u8(6);
            o.u8(g.transition);
            o.u8(8 - (u8::BITS - g.duration.leading_zeros()) as u8);
            o.u8(g.dead as u8 | (g.on_beat as u8) << 1);
        }
    }
    for e in effects {
        if let NoteEffect::TremoloPicking(v) = e {
            o.i8(match v {
                8 => 1,
                16 => 2,
                _ => 3,
            });
        }
    }
    if slides != 0 {
        o.u8(slides);
    }
    for e in effects {
        if let NoteEffect::Harmonic(h) = e {
            match *h {
                HarmonicKind::Natural => o.i8(1),
                HarmonicKind::Artificial { semitone, accidental, octave } => {
                    o.i8(2);
                    o.u8(semitone);
                    o.i8(accidental);
                    o.u8(octave);
                }
                HarmonicKind::Tapped { fret } => {
                    o.i8(3);
                    o.u8(fret);
                }
                HarmonicKind::Pinch => o.i8(4),
                HarmonicKind::Semi => o.i8(5),
            }
        }
    }
    for e in effects {
        if let NoteEffect::Trill { fret, period } = e {
            o.i8(*fret as i8);
            o.i8(match period {
                16 => 1,
                32 => 2,
                _ => 3,
            });
        }
    }
}
