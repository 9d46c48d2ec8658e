//! Token grammar: lexing and rendering single tokens, `Song` -> tokens and
//! the total decoder tokens -> `Song`.
//!
//! Token text is colon-separated ASCII, one token per line:
//!
//! ```text
//! artist:<name>            downtune:<k<=0>        tempo:<bpm>
//! start  end  new_measure  measure:repeat         wait:<ticks>
//! <slot>:note:s<string>:f<fret>                   <slot>:note:rest
//! drums:note:<midi 35..81>                        <slot>:tuning:<strings>[:drop]
//! nfx:<effect>[:params]                           bfx:<effect>[:params]
//! ```

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::song_model::{
    canonicalize_beat_effects, canonicalize_note_effects, infer_time_signature, mark_repeats,
    normalize_artist, standard_tuning, tuning_for, validate_tuning, Beat, BeatContent, BeatEffect,
    Bend, BendPoint, Grace, HarmonicKind, InstrumentSlot, Measure, MeasureHeader, Note, NoteEffect,
    NoteValue, SlideKind, Song, Track, DEFAULT_TEMPO, MAX_DRUM, MAX_FRET, MAX_MEASURE_TICKS,
    MIN_DOWNTUNE, MIN_DRUM, TICKS_PER_QUARTER,
};

pub const MAX_TEMPO: u32 = 999;
pub const MAX_STRING: u8 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Token {
    /// Normalized spelling: lowercase, underscores for spaces.
    Artist(String),
    Downtune(i8),
    Tempo(u32),
    Start,
    End,
    NewMeasure,
    MeasureRepeat,
    Wait(u32),
    NoteOn { slot: InstrumentSlot, string: u8, fret: u8 },
    DrumHit(u8),
    Rest(InstrumentSlot),
    /// Non-default string count or a dropped lowest string for a pitched slot.
    Tuning { slot: InstrumentSlot, strings: u8, drop: bool },
    Nfx(NoteEffect),
    Bfx(BeatFx),
    Unknown(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeatFx {
    Effect(BeatEffect),
    TempoChange(u32),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TokenError {
    #[error("cannot render unknown token {0:?}")]
    RenderUnknown(String),
    #[error("song is not normalized: {0}")]
    Unnormalized(String),
    #[error("tempo must be positive")]
    ZeroTempo,
}

impl Token {
    /// Spelling used in files: the rendering, or the raw text of an unknown token.
    pub fn spelling(&self) -> String {
        match self {
            Token::Unknown(raw) => raw.clone(),
            t => render_known(t),
        }
    }

    /// Header tokens that may occur only once per stream.
    pub fn singleton_kind(&self) -> Option<SingletonKind> {
        match self {
            Token::Artist(_) => Some(SingletonKind::Artist),
            Token::Downtune(_) => Some(SingletonKind::Downtune),
            Token::Tempo(_) => Some(SingletonKind::Tempo),
            Token::Start => Some(SingletonKind::Start),
            Token::End => Some(SingletonKind::End),
            _ => None,
        }
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.spelling())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SingletonKind {
    Artist,
    Downtune,
    Tempo,
    Start,
    End,
}

impl SingletonKind {
    pub const ALL: [SingletonKind; 5] = [
        SingletonKind::Artist,
        SingletonKind::Downtune,
        SingletonKind::Tempo,
        SingletonKind::Start,
        SingletonKind::End,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SingletonKind::Artist => "artist",
            SingletonKind::Downtune => "downtune",
            SingletonKind::Tempo => "tempo",
            SingletonKind::Start => "start",
            SingletonKind::End => "end",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenSeq {
    pub tokens: Vec<Token>,
}

impl TokenSeq {
    pub fn new(tokens: Vec<Token>) -> Self {
        TokenSeq { tokens }
    }

    /// Header first, exactly one `end` as the last token, no adjacent waits.
    pub fn is_canonical(&self) -> bool {
        let t = &self.tokens;
        let header_ok = matches!(
            t.get(..4),
            Some([Token::Artist(_), Token::Downtune(_), Token::Tempo(_), Token::Start])
        );
        let ends = t.iter().filter(|x| **x == Token::End).count();
        header_ok
            && ends == 1
            && t.last() == Some(&Token::End)
            && t.iter().all(|x| !matches!(x, Token::Unknown(_)))
            && t.iter().filter(|x| x.singleton_kind().is_some()).count() == 5
            && !t.windows(2).any(|w| matches!(w, [Token::Wait(_), Token::Wait(_)]))
    }

    /// One token per line, LF-terminated.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(&t.spelling());
            out.push('\n');
        }
        out
    }

    /// Splits on whitespace; every word becomes one token.
    pub fn from_text(text: &str) -> Self {
        TokenSeq { tokens: text.split_whitespace().map(parse_token).collect() }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Seconds spanned by `ticks` at a constant tempo.
pub fn ticks_to_seconds(ticks: u64, tempo_bpm: u32) -> Result<f64, TokenError> {
    if tempo_bpm == 0 {
        return Err(TokenError::ZeroTempo);
    }
    Ok((ticks as f64 * 60.0) / (tempo_bpm as f64 * TICKS_PER_QUARTER as f64))
}

/// Parses a number only in its canonical decimal spelling.
fn num<T: std::str::FromStr + ToString>(s: &str) -> Option<T> {
    let v: T = s.parse().ok()?;
    (v.to_string() == s).then_some(v)
}

fn prefixed<T: std::str::FromStr + ToString>(s: &str, prefix: &str) -> Option<T> {
    num(s.strip_prefix(prefix)?)
}

fn flag(s: &str, prefix: &str) -> Option<bool> {
    match s.strip_prefix(prefix)? {
        "0" => Some(false),
        "1" => Some(true),
        _ => None,
    }
}

/// Parses one whitespace-free word. Never fails: anything outside the
/// grammar becomes `Token::Unknown`.
pub fn parse_token(text: &str) -> Token {
    parse_known(text).unwrap_or_else(|| Token::Unknown(text.to_string()))
}

fn parse_known(text: &str) -> Option<Token> {
    if let Some(name) = text.strip_prefix("artist:") {
        let ok = !name.is_empty() && !name.chars().any(char::is_whitespace);
        return ok.then(|| Token::Artist(name.to_string()));
    }
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["downtune", k] => num::<i8>(k).filter(|k| (MIN_DOWNTUNE..=0).contains(k)).map(Token::Downtune),
        ["tempo", b] => num::<u32>(b).filter(|b| (1..=MAX_TEMPO).contains(b)).map(Token::Tempo),
        ["start"] => Some(Token::Start),
        ["end"] => Some(Token::End),
        ["new_measure"] => Some(Token::NewMeasure),
        ["measure", "repeat"] => Some(Token::MeasureRepeat),
        ["wait", n] => num::<u32>(n).filter(|&n| n > 0).map(Token::Wait),
        ["drums", "note", "rest"] => Some(Token::Rest(InstrumentSlot::Drums)),
        ["drums", "note", m] => num::<u8>(m).filter(|m| (MIN_DRUM..=MAX_DRUM).contains(m)).map(Token::DrumHit),
        [slot, "note", "rest"] => pitched_slot(slot).map(Token::Rest),
        [slot, "note", s, f] => {
            let slot = pitched_slot(slot)?;
            let string = prefixed::<u8>(s, "s").filter(|s| (1..=MAX_STRING).contains(s))?;
            let fret = prefixed::<u8>(f, "f").filter(|f| *f <= MAX_FRET)?;
            Some(Token::NoteOn { slot, string, fret })
        }
        [slot, "tuning", n, rest @ ..] => {
            let slot = pitched_slot(slot)?;
            let strings = num::<u8>(n).filter(|n| slot.allowed_string_counts().contains(n))?;
            let drop = match rest {
                [] => false,
                ["drop"] => true,
                _ => return None,
            };
            Some(Token::Tuning { slot, strings, drop })
        }
        ["nfx", rest @ ..] => parse_nfx(rest).map(Token::Nfx),
        ["bfx", rest @ ..] => parse_bfx(rest).map(Token::Bfx),
        _ => None,
    }
}

fn pitched_slot(name: &str) -> Option<InstrumentSlot> {
    InstrumentSlot::from_name(name).filter(|s| !s.is_percussion())
}

fn parse_nfx(parts: &[&str]) -> Option<NoteEffect> {
    let effect = match parts {
        ["palm_mute"] => NoteEffect::PalmMute,
        ["vibrato"] => NoteEffect::Vibrato,
        ["hammer"] => NoteEffect::Hammer,
        ["tie"] => NoteEffect::Tie,
        ["let_ring"] => NoteEffect::LetRing,
        ["ghost_note"] => NoteEffect::GhostNote,
        ["accentuated_note"] => NoteEffect::Accentuated,
        ["heavy_accentuated_note"] => NoteEffect::HeavyAccentuated,
        ["staccato"] => NoteEffect::Staccato,
        ["bend", kind, points @ ..] => {
            let kind = prefixed::<u8>(kind, "type").filter(|k| (1..=11).contains(k))?;
            if points.len() % 3 != 0 {
                return None;
            }
            let points = points
                .chunks(3)
                .map(|p| {
                    Some(BendPoint {
                        position: prefixed::<u8>(p[0], "pos").filter(|p| *p <= 12)?,
                        value: prefixed::<i8>(p[1], "val")?,
                        vibrato: flag(p[2], "vib")?,
                    })
                })
                .collect::<Option<Vec<_>>>()?;
            NoteEffect::Bend(Bend { kind, points })
        }
        ["slide", kind] => NoteEffect::Slide(SlideKind::from_name(kind)?),
        ["harmonic", rest @ ..] => NoteEffect::Harmonic(match rest {
            ["natural"] => HarmonicKind::Natural,
            ["artificial", s, a, o] => HarmonicKind::Artificial {
                semitone: num::<u8>(s).filter(|s| *s <= 11)?,
                accidental: num::<i8>(a).filter(|a| (-1..=1).contains(a))?,
                octave: num::<u8>(o).filter(|o| *o <= 2)?,
            },
            ["tapped", f] => HarmonicKind::Tapped { fret: num::<u8>(f).filter(|f| *f <= MAX_FRET)? },
            ["pinch"] => HarmonicKind::Pinch,
            ["semi"] => HarmonicKind::Semi,
            _ => return None,
        }),
        ["trill", f, d] => NoteEffect::Trill {
            fret: prefixed::<u8>(f, "f").filter(|f| *f <= MAX_FRET)?,
            period: prefixed::<u8>(d, "d").filter(|d| [16, 32, 64].contains(d))?,
        },
        ["grace", f, d, dead, beat, tr] => NoteEffect::Grace(Grace {
            fret: prefixed::<u8>(f, "fret").filter(|f| *f <= MAX_FRET)?,
            duration: prefixed::<u8>(d, "duration").filter(|d| [16, 32, 64].contains(d))?,
            dead: flag(dead, "dead")?,
            on_beat: flag(beat, "beat")?,
            transition: prefixed::<u8>(tr, "transition").filter(|t| *t <= 3)?,
        }),
        ["tremolo_picking", d] => {
            NoteEffect::TremoloPicking(prefixed::<u8>(d, "duration").filter(|d| [8, 16, 32].contains(d))?)
        }
        _ => return None,
    };
    Some(effect)
}

fn parse_bfx(parts: &[&str]) -> Option<BeatFx> {
    let speed = |s: &str| num::<u8>(s).filter(|s| (1..=6).contains(s));
    let fx = match parts {
        ["stroke", "up", s] => BeatFx::Effect(BeatEffect::StrokeUp(speed(s)?)),
        ["stroke", "down", s] => BeatFx::Effect(BeatEffect::StrokeDown(speed(s)?)),
        ["fade_in"] => BeatFx::Effect(BeatEffect::FadeIn),
        ["tapping"] => BeatFx::Effect(BeatEffect::Tapping),
        ["slapping"] => BeatFx::Effect(BeatEffect::Slapping),
        ["popping"] => BeatFx::Effect(BeatEffect::Popping),
        ["tempo_change", b] => BeatFx::TempoChange(num::<u32>(b).filter(|b| (1..=MAX_TEMPO).contains(b))?),
        _ => return None,
    };
    Some(fx)
}

/// Canonical spelling of a token. Unknown tokens have none.
pub fn render_token(token: &Token) -> Result<String, TokenError> {
    match token {
        Token::Unknown(raw) => Err(TokenError::RenderUnknown(raw.clone())),
        t => Ok(render_known(t)),
    }
}

fn render_known(token: &Token) -> String {
    match token {
        Token::Artist(name) => format!("artist:{name}"),
        Token::Downtune(k) => format!("downtune:{k}"),
        Token::Tempo(b) => format!("tempo:{b}"),
        Token::Start => "start".into(),
        Token::End => "end".into(),
        Token::NewMeasure => "new_measure".into(),
        Token::MeasureRepeat => "measure:repeat".into(),
        Token::Wait(n) => format!("wait:{n}"),
        Token::NoteOn { slot, string, fret } => format!("{slot}:note:s{string}:f{fret}"),
        Token::DrumHit(m) => format!("drums:note:{m}"),
        Token::Rest(slot) => format!("{slot}:note:rest"),
        Token::Tuning { slot, strings, drop } => {
            format!("{slot}:tuning:{strings}{}", if *drop { ":drop" } else { "" })
        }
        Token::Nfx(e) => format!("nfx:{}", render_nfx(e)),
        Token::Bfx(BeatFx::Effect(e)) => format!("bfx:{}", render_bfx(*e)),
        Token::Bfx(BeatFx::TempoChange(b)) => format!("bfx:tempo_change:{b}"),
        Token::Unknown(raw) => raw.clone(),
    }
}

fn render_nfx(effect: &NoteEffect) -> String {
    match effect {
        NoteEffect::PalmMute => "palm_mute".into(),
        NoteEffect::Vibrato => "vibrato".into(),
        NoteEffect::Hammer => "hammer".into(),
        NoteEffect::Tie => "tie".into(),
        NoteEffect::LetRing => "let_ring".into(),
        NoteEffect::GhostNote => "ghost_note".into(),
        NoteEffect::Accentuated => "accentuated_note".into(),
        NoteEffect::HeavyAccentuated => "heavy_accentuated_note".into(),
        NoteEffect::Staccato => "staccato".into(),
        NoteEffect::Bend(b) => {
            let mut s = format!("bend:type{}", b.kind);
            for p in &b.points {
                s += &format!(":pos{}:val{}:vib{}", p.position, p.value, p.vibrato as u8);
            }
            s
        }
        NoteEffect::Slide(k) => format!("slide:{}", k.name()),
        NoteEffect::Harmonic(h) => match h {
            HarmonicKind::Natural => "harmonic:natural".into(),
            HarmonicKind::Artificial { semitone, accidental, octave } => {
                format!("harmonic:artificial:{semitone}:{accidental}:{octave}")
            }
            HarmonicKind::Tapped { fret } => format!("harmonic:tapped:{fret}"),
            HarmonicKind::Pinch => "harmonic:pinch".into(),
            HarmonicKind::Semi => "harmonic:semi".into(),
        },
        NoteEffect::Trill { fret, period } => format!("trill:f{fret}:d{period}"),
        NoteEffect::Grace(g) => format!(
            "grace:fret{}:duration{}:dead{}:beat{}:transition{}",
            g.fret, g.duration, g.dead as u8, g.on_beat as u8, g.transition
        ),
        NoteEffect::TremoloPicking(d) => format!("tremolo_picking:duration{d}"),
    }
}

fn render_bfx(effect: BeatEffect) -> String {
    match effect {
        BeatEffect::StrokeUp(s) => format!("stroke:up:{s}"),
        BeatEffect::StrokeDown(s) => format!("stroke:down:{s}"),
        BeatEffect::FadeIn => "fade_in".into(),
        BeatEffect::Tapping => "tapping".into(),
        BeatEffect::Slapping => "slapping".into(),
        BeatEffect::Popping => "popping".into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeOptions {
    /// Emit `measure:repeat` for measures identical to their predecessor.
    pub measure_repeat: bool,
}

impl Default for EncodeOptions {
    fn default() -> Self {
        EncodeOptions { measure_repeat: true }
    }
}

pub fn encode(song: &Song) -> Result<TokenSeq, TokenError> {
    encode_with(song, &EncodeOptions::default())
}

/// Renders a normalized song as a canonical token stream.
pub fn encode_with(song: &Song, options: &EncodeOptions) -> Result<TokenSeq, TokenError> {
    song.check_invariants().map_err(|e| TokenError::Unnormalized(e.to_string()))?;
    if song.tracks.windows(2).any(|w| w[0].slot >= w[1].slot) {
        return Err(TokenError::Unnormalized("tracks are not in slot order".into()));
    }
    let info = validate_tuning(song).map_err(|e| TokenError::Unnormalized(e.to_string()))?;
    if song.tracks.iter().any(|t| !t.is_percussion) && info.downtune != song.downtune {
        return Err(TokenError::Unnormalized("downtune does not match the tunings".into()));
    }
    if song.initial_tempo > MAX_TEMPO || song.measure_headers.iter().any(|h| h.tempo_change > Some(MAX_TEMPO)) {
        return Err(TokenError::Unnormalized(format!("tempo above {MAX_TEMPO}")));
    }

    let mut out = vec![
        Token::Artist(normalize_artist(&song.artist)),
        Token::Downtune(song.downtune),
        Token::Tempo(song.initial_tempo),
        Token::Start,
    ];
    for t in song.tracks.iter().filter(|t| !t.is_percussion) {
        let drop = info.drop_slots.contains(&t.slot);
        if t.string_count != t.slot.default_string_count() || drop {
            out.push(Token::Tuning { slot: t.slot, strings: t.string_count, drop });
        }
    }

    for (i, header) in song.measure_headers.iter().enumerate() {
        let repeat = options.measure_repeat
            && i > 0
            && header.span() == song.measure_headers[i - 1].span()
            && song.tracks.iter().all(|t| t.measures[i] == t.measures[i - 1]);
        out.push(if repeat { Token::MeasureRepeat } else { Token::NewMeasure });
        if let Some(bpm) = header.tempo_change {
            out.push(Token::Bfx(BeatFx::TempoChange(bpm)));
        }
        if repeat {
            out.push(Token::Wait(header.span()));
            continue;
        }
        let mut onsets: Vec<u32> =
            song.tracks.iter().flat_map(|t| t.measures[i].beats.iter().map(|b| b.onset)).collect();
        onsets.sort_unstable();
        onsets.dedup();
        for (k, &at) in onsets.iter().enumerate() {
            for track in &song.tracks {
                if let Some(beat) = track.measures[i].beats.iter().find(|b| b.onset == at) {
                    encode_beat(track.slot, beat, &mut out);
                }
            }
            let next = onsets.get(k + 1).copied().unwrap_or(header.span());
            out.push(Token::Wait(next - at));
        }
    }
    out.push(Token::End);
    Ok(TokenSeq::new(out))
}

fn encode_beat(slot: InstrumentSlot, beat: &Beat, out: &mut Vec<Token>) {
    match &beat.content {
        BeatContent::Rest => out.push(Token::Rest(slot)),
        BeatContent::Notes(notes) => {
            for note in notes {
                out.push(match note.value {
                    NoteValue::Fretted { string, fret } => Token::NoteOn { slot, string, fret },
                    NoteValue::Percussion(m) => Token::DrumHit(m),
                });
                out.extend(note.effects.iter().cloned().map(Token::Nfx));
            }
        }
    }
    out.extend(beat.effects.iter().map(|&e| Token::Bfx(BeatFx::Effect(e))));
}

#[derive(Debug, Default)]
struct BeatBuild {
    onset: u64,
    notes: Vec<Note>,
    effects: Vec<BeatEffect>,
}

#[derive(Debug, Default)]
struct MeasureBuild {
    waits: u64,
    repeat: bool,
    tempo_change: Option<u32>,
    tracks: BTreeMap<InstrumentSlot, Vec<BeatBuild>>,
    /// Beat that the next bfx token applies to.
    last_beat: Option<(InstrumentSlot, usize)>,
    /// Note that the next nfx token applies to.
    last_note: Option<(InstrumentSlot, usize, usize)>,
}

impl MeasureBuild {
    fn beat_at(&mut self, slot: InstrumentSlot) -> (usize, bool) {
        let at = self.waits;
        let beats = self.tracks.entry(slot).or_default();
        let fresh = beats.last().is_none_or(|b| b.onset != at);
        if fresh {
            beats.push(BeatBuild { onset: at, ..BeatBuild::default() });
        }
        (beats.len() - 1, fresh)
    }

    fn note(&mut self, slot: InstrumentSlot, note: Note) {
        let (bi, _) = self.beat_at(slot);
        self.last_beat = Some((slot, bi));
        let beat = &mut self.tracks.get_mut(&slot).expect("beat just opened")[bi];
        if beat.notes.iter().any(|n| n.value.key() == note.value.key()) {
            // a duplicate string is dropped together with its effects
            self.last_note = None;
            return;
        }
        beat.notes.push(note);
        self.last_note = Some((slot, bi, beat.notes.len() - 1));
    }

    fn rest(&mut self, slot: InstrumentSlot) {
        let (bi, _) = self.beat_at(slot);
        self.last_beat = Some((slot, bi));
    }
}

/// Statistics about what the decoder had to repair or ignore.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DecodeReport {
    pub unknown_tokens: usize,
    pub skipped_tokens: usize,
    pub clipped_events: usize,
    pub rounded_measures: usize,
}

pub fn decode(tokens: &TokenSeq) -> Song {
    decode_with_report(tokens).0
}

/// Builds a song from any token list. Missing header values take defaults,
/// decoding stops at the first `end`, and tokens that make no sense in
/// context are skipped.
pub fn decode_with_report(tokens: &TokenSeq) -> (Song, DecodeReport) {
    let mut report = DecodeReport::default();
    let mut artist = None;
    let mut downtune = None;
    let mut tempo = None;
    let mut tunings: BTreeMap<InstrumentSlot, (u8, bool)> = BTreeMap::new();
    let mut measures: Vec<MeasureBuild> = Vec::new();

    for token in &tokens.tokens {
        let opens_measure = matches!(
            token,
            Token::Wait(_) | Token::NoteOn { .. } | Token::DrumHit(_) | Token::Rest(_) | Token::Nfx(_) | Token::Bfx(_)
        );
        if opens_measure && measures.is_empty() {
            measures.push(MeasureBuild::default());
        }
        match token {
            Token::Artist(a) => {
                artist.get_or_insert_with(|| a.replace('_', " "));
            }
            Token::Downtune(k) => {
                downtune.get_or_insert(*k);
            }
            Token::Tempo(b) => {
                tempo.get_or_insert(*b);
            }
            Token::Start => {}
            Token::End => break,
            Token::NewMeasure => measures.push(MeasureBuild::default()),
            Token::MeasureRepeat => {
                let repeat = !measures.is_empty();
                measures.push(MeasureBuild { repeat, ..MeasureBuild::default() });
            }
            Token::Tuning { slot, strings, drop } => {
                tunings.entry(*slot).or_insert((*strings, *drop));
            }
            Token::Unknown(_) => report.unknown_tokens += 1,
            Token::Wait(n) => {
                let m = measures.last_mut().expect("measure opened");
                m.waits = m.waits.saturating_add(*n as u64);
            }
            Token::Bfx(BeatFx::TempoChange(bpm)) => {
                let m = measures.last_mut().expect("measure opened");
                m.tempo_change.get_or_insert(*bpm);
            }
            _ if measures.last().is_some_and(|m| m.repeat) => report.skipped_tokens += 1,
            Token::NoteOn { slot, string, fret } => {
                let note = Note { value: NoteValue::Fretted { string: *string, fret: *fret }, effects: Vec::new() };
                measures.last_mut().expect("measure opened").note(*slot, note);
            }
            Token::DrumHit(midi) => {
                measures.last_mut().expect("measure opened").note(InstrumentSlot::Drums, Note::drum(*midi));
            }
            Token::Rest(slot) => measures.last_mut().expect("measure opened").rest(*slot),
            Token::Nfx(effect) => {
                let m = measures.last_mut().expect("measure opened");
                match m.last_note {
                    Some((slot, bi, ni)) => {
                        m.tracks.get_mut(&slot).expect("noted track")[bi].notes[ni].effects.push(effect.clone())
                    }
                    None => report.skipped_tokens += 1,
                }
            }
            Token::Bfx(BeatFx::Effect(effect)) => {
                let m = measures.last_mut().expect("measure opened");
                match m.last_beat {
                    Some((slot, bi)) => m.tracks.get_mut(&slot).expect("touched track")[bi].effects.push(*effect),
                    None => report.skipped_tokens += 1,
                }
            }
        }
    }

    let mut song = Song {
        artist: artist.unwrap_or_else(|| "unknown".to_string()),
        initial_tempo: tempo.unwrap_or(DEFAULT_TEMPO),
        downtune: downtune.unwrap_or(0),
        ..Song::default()
    };
    let slots: Vec<InstrumentSlot> = {
        let mut s: Vec<_> = measures.iter().flat_map(|m| m.tracks.keys().copied()).collect();
        s.sort();
        s.dedup();
        s
    };
    let mut per_slot: BTreeMap<InstrumentSlot, Vec<Measure>> = slots.iter().map(|&s| (s, Vec::new())).collect();

    for (index, m) in measures.into_iter().enumerate() {
        let previous_span = song.measure_headers.last().map(MeasureHeader::span);
        if m.repeat {
            let span = previous_span.expect("repeat follows a measure");
            song.measure_headers.push(MeasureHeader {
                tempo_change: m.tempo_change,
                ..MeasureHeader::new(index, infer_time_signature(span))
            });
            for beats in per_slot.values_mut() {
                let copy = beats.last().cloned().expect("previous measure");
                beats.push(copy);
            }
            continue;
        }
        let signature = if m.waits == 0 {
            infer_time_signature(previous_span.unwrap_or(4 * TICKS_PER_QUARTER))
        } else {
            let (sig, rounded) = crate::song_model::infer_time_signature_checked(
                m.waits.min(MAX_MEASURE_TICKS as u64 + 1) as u32,
            );
            report.rounded_measures += rounded as usize;
            sig
        };
        let span = signature.span_ticks();
        song.measure_headers.push(MeasureHeader { tempo_change: m.tempo_change, ..MeasureHeader::new(index, signature) });
        let mut built = m.tracks;
        for (&slot, out) in per_slot.iter_mut() {
            let beats = built.remove(&slot).unwrap_or_default();
            let (measure, clipped) = finish_measure(beats, span);
            report.clipped_events += clipped;
            out.push(measure);
        }
    }

    for (slot, measures) in per_slot {
        song.tracks.push(finish_track(slot, measures, song.downtune, tunings.get(&slot).copied()));
    }
    mark_repeats(&mut song);
    (song, report)
}

/// Turns collected onsets into beats tiling `span`.
fn finish_measure(beats: Vec<BeatBuild>, span: u32) -> (Measure, usize) {
    let total = beats.len();
    let mut kept: Vec<BeatBuild> = beats.into_iter().filter(|b| b.onset < span as u64).collect();
    let clipped = total - kept.len();
    if kept.first().is_none_or(|b| b.onset != 0) {
        kept.insert(0, BeatBuild::default());
    }
    let onsets: Vec<u32> = kept.iter().map(|b| b.onset as u32).collect();
    let beats = kept
        .into_iter()
        .enumerate()
        .map(|(i, b)| {
            let end = onsets.get(i + 1).copied().unwrap_or(span);
            let notes = b
                .notes
                .into_iter()
                .map(|mut n| {
                    canonicalize_note_effects(&mut n.effects);
                    n
                })
                .collect();
            let mut effects = b.effects;
            canonicalize_beat_effects(&mut effects);
            Beat { onset: onsets[i], duration: end - onsets[i], content: BeatContent::canonical(notes), effects }
        })
        .collect();
    (Measure { beats }, clipped)
}

/// Settles string count and tuning, then drops notes on strings that do not exist.
fn finish_track(slot: InstrumentSlot, mut measures: Vec<Measure>, downtune: i8, declared: Option<(u8, bool)>) -> Track {
    let span_of = |m: &Measure| m.beats.last().map_or(0, Beat::end);
    if slot.is_percussion() {
        return Track::drums(measures);
    }
    let (declared_strings, drop) = declared.unwrap_or((slot.default_string_count(), false));
    let allowed = slot.allowed_string_counts();
    let max_allowed = *allowed.last().expect("pitched slot");
    let used = measures
        .iter()
        .flat_map(|m| m.beats.iter().flat_map(|b| b.content.notes().iter().filter_map(Note::string)))
        .filter(|&s| s <= max_allowed)
        .max()
        .unwrap_or(0);
    let strings = declared_strings.max(used);
    debug_assert!(standard_tuning(slot, strings).is_some());
    for m in &mut measures {
        let span = span_of(m);
        for b in &mut m.beats {
            if let BeatContent::Notes(notes) = &b.content {
                let kept: Vec<Note> = notes.iter().filter(|n| n.string().is_some_and(|s| s <= strings)).cloned().collect();
                if kept.len() != notes.len() {
                    b.content = BeatContent::canonical(kept);
                }
            }
        }
        debug_assert!(m.tiles(span));
    }
    let tuning = tuning_for(slot, strings, downtune, drop).unwrap_or_else(|| {
        tuning_for(slot, strings, 0, false).expect("standard tuning exists for allowed string count")
    });
    Track::pitched(slot, tuning, measures)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::song_model::{TimeSignature, GUITAR_6};

    fn toks(words: &str) -> Vec<Token> {
        words.split_whitespace().map(parse_token).collect()
    }

    #[test]
    fn parse_examples() {
        assert_eq!(parse_token("wait:480"), Token::Wait(480));
        assert_eq!(parse_token("drums:note:36"), Token::DrumHit(36));
        assert_eq!(parse_token("xyzzy:blorp"), Token::Unknown("xyzzy:blorp".into()));
        assert_eq!(
            parse_token("distorted0:note:s5:f7"),
            Token::NoteOn { slot: InstrumentSlot::Distorted0, string: 5, fret: 7 }
        );
    }

    #[test]
    fn render_examples() {
        assert_eq!(render_token(&Token::Wait(240)).unwrap(), "wait:240");
        assert_eq!(render_token(&Token::DrumHit(40)).unwrap(), "drums:note:40");
        assert_eq!(
            render_token(&Token::NoteOn { slot: InstrumentSlot::Distorted0, string: 5, fret: 7 }).unwrap(),
            "distorted0:note:s5:f7"
        );
        assert!(render_token(&Token::Unknown("x".into())).is_err());
    }

    #[test]
    fn out_of_range_values_are_unknown() {
        for w in [
            "wait:0", "wait:0480", "wait:-1", "tempo:0", "downtune:1", "downtune:-13", "drums:note:34",
            "drums:note:82", "bass:note:s8:f1", "bass:note:s0:f1", "bass:note:s1:f100", "drums:note:s1:f1",
            "drums:tuning:6", "bass:tuning:7", "leads:tuning:5", "nfx:bend:type1:pos13:val0:vib0",
            "nfx:trill:f1:d8", "bfx:stroke:up:7", "artist:", "new_measure:x", "nfx:slide:sideways",
        ] {
            assert!(matches!(parse_token(w), Token::Unknown(_)), "{w}");
        }
    }

    #[test]
    fn every_spelling_round_trips() {
        let words = "artist:ac/dc downtune:-3 tempo:92 start end new_measure measure:repeat wait:320 \
            clean1:note:s7:f99 pads:note:rest drums:note:rest leads:tuning:7 bass:tuning:5:drop \
            nfx:palm_mute nfx:vibrato nfx:hammer nfx:tie nfx:let_ring nfx:ghost_note nfx:accentuated_note \
            nfx:heavy_accentuated_note nfx:staccato nfx:bend:type1:pos0:val0:vib0:pos6:val4:vib1 nfx:bend:type3 \
            nfx:slide:in_above nfx:harmonic:natural nfx:harmonic:artificial:7:-1:1 nfx:harmonic:tapped:12 \
            nfx:harmonic:pinch nfx:harmonic:semi nfx:trill:f3:d32 \
            nfx:grace:fret2:duration32:dead0:beat1:transition3 nfx:tremolo_picking:duration16 \
            bfx:stroke:up:2 bfx:stroke:down:6 bfx:fade_in bfx:tapping bfx:slapping bfx:popping bfx:tempo_change:180";
        for w in words.split_whitespace() {
            let t = parse_token(w);
            assert!(!matches!(t, Token::Unknown(_)), "{w}");
            assert_eq!(render_token(&t).unwrap(), w);
        }
    }

    #[test]
    fn ticks_to_seconds_values() {
        assert_eq!(ticks_to_seconds(1, 100).unwrap(), 0.000625);
        assert_eq!(ticks_to_seconds(960, 60).unwrap(), 1.0);
        assert_eq!(ticks_to_seconds(480, 120).unwrap(), 0.25);
        assert_eq!(ticks_to_seconds(1, 0), Err(TokenError::ZeroTempo));
    }

    fn one_measure_song(beats: Vec<Beat>) -> Song {
        Song {
            tracks: vec![Track::pitched(InstrumentSlot::Clean0, GUITAR_6.to_vec(), vec![Measure { beats }])],
            measure_headers: vec![MeasureHeader::new(0, TimeSignature::new(4, 4))],
            ..Song::default()
        }
    }

    #[test]
    fn encode_empty_song() {
        let seq = encode(&Song::default()).unwrap();
        assert_eq!(seq.tokens, toks("artist:unknown downtune:0 tempo:120 start end"));
    }

    #[test]
    fn encode_quarter_then_rest() {
        let song = one_measure_song(vec![Beat::notes(0, 960, vec![Note::fretted(6, 0)]), Beat::rest(960, 2880)]);
        let seq = encode(&song).unwrap();
        assert_eq!(
            seq.tokens,
            toks("artist:unknown downtune:0 tempo:120 start new_measure clean0:note:s6:f0 wait:960 \
                  clean0:note:rest wait:2880 end")
        );
        assert!(seq.is_canonical());
        assert!(musically_equal(&decode(&seq), &song));
    }

    fn musically_equal(a: &Song, b: &Song) -> bool {
        crate::song_model::musically_equivalent(a, b)
    }

    #[test]
    fn identical_measures_become_repeats() {
        let mut song = one_measure_song(vec![Beat::notes(0, 3840, vec![Note::fretted(1, 3)])]);
        let m = song.tracks[0].measures[0].clone();
        song.tracks[0].measures.push(m);
        song.measure_headers.push(MeasureHeader::new(1, TimeSignature::new(4, 4)));
        let seq = encode(&song).unwrap();
        assert_eq!(&seq.tokens[seq.len() - 3..], &toks("measure:repeat wait:3840 end")[..]);
        let back = decode(&seq);
        assert!(back.measure_headers[1].repeat_of_previous);
        assert!(musically_equal(&back, &song));
        let plain = encode_with(&song, &EncodeOptions { measure_repeat: false }).unwrap();
        assert!(!plain.tokens.contains(&Token::MeasureRepeat));
        assert!(musically_equal(&decode(&plain), &song));
    }

    #[test]
    fn decode_defaults_and_end() {
        let song = decode(&TokenSeq::default());
        assert_eq!((song.artist.as_str(), song.initial_tempo, song.downtune), ("unknown", 120, 0));
        assert!(song.measure_headers.is_empty());

        let song = decode(&TokenSeq::new(toks("new_measure wait:960 end new_measure wait:960")));
        assert_eq!(song.measure_headers.len(), 1);
        assert_eq!(song.measure_headers[0].time_signature, TimeSignature::new(1, 4));
    }

    #[test]
    fn decode_repairs_measures() {
        // note at the measure end is clipped; a track missing tick 0 gets a rest there
        let seq = TokenSeq::new(toks("new_measure wait:480 bass:note:s1:f3 nfx:tie wait:480 leads:note:s1:f1"));
        let (song, report) = decode_with_report(&seq);
        assert_eq!(report.clipped_events, 1);
        assert_eq!(song.measure_headers[0].span(), 960);
        let bass = song.track(InstrumentSlot::Bass).unwrap();
        assert_eq!(bass.measures[0].beats[0], Beat::rest(0, 480));
        assert_eq!(
            bass.measures[0].beats[1].content,
            BeatContent::Notes(vec![Note::fretted(1, 3).with_effects(vec![NoteEffect::Tie])])
        );
        assert_eq!(song.track(InstrumentSlot::Leads).unwrap().measures[0], Measure::whole_rest(960));
    }

    #[test]
    fn decode_skips_orphan_effects_and_duplicates() {
        let seq = TokenSeq::new(toks(
            "nfx:tie bfx:fade_in new_measure leads:note:s2:f1 leads:note:s2:f5 nfx:vibrato leads:note:rest wait:3840",
        ));
        let (song, report) = decode_with_report(&seq);
        assert_eq!(report.skipped_tokens, 3);
        let beat = &song.tracks[0].measures[1].beats[0];
        assert_eq!(beat.content, BeatContent::Notes(vec![Note::fretted(2, 1)]));
    }

    #[test]
    fn decode_extends_string_count() {
        let seq = TokenSeq::new(toks("downtune:-2 new_measure leads:note:s7:f0 bass:note:s5:f0 wait:960"));
        let song = decode(&seq);
        let leads = song.track(InstrumentSlot::Leads).unwrap();
        assert_eq!(leads.tuning, vec![62, 57, 53, 48, 43, 38, 33]);
        assert_eq!(song.track(InstrumentSlot::Bass).unwrap().string_count, 5);
        assert!(song.check_invariants().is_ok());
    }

    #[test]
    fn tuning_tokens_round_trip() {
        let drop_d = vec![64, 59, 55, 50, 45, 38];
        let mut song = one_measure_song(vec![Beat::notes(0, 3840, vec![Note::fretted(6, 0)])]);
        song.tracks[0].tuning = drop_d.clone();
        let seq = encode(&song).unwrap();
        assert!(seq.tokens.contains(&parse_token("clean0:tuning:6:drop")));
        assert_eq!(decode(&seq).tracks[0].tuning, drop_d);
    }

    #[test]
    fn encode_rejects_unnormalized() {
        let mut song = one_measure_song(vec![Beat::notes(0, 960, vec![Note::fretted(6, 0)])]);
        assert!(matches!(encode(&song), Err(TokenError::Unnormalized(_))));
        song.tracks[0].measures[0].beats[0].duration = 3840;
        song.downtune = -1;
        assert!(matches!(encode(&song), Err(TokenError::Unnormalized(_))));
    }

    #[test]
    fn canonical_predicate() {
        assert!(TokenSeq::new(toks("artist:a downtune:0 tempo:1 start end")).is_canonical());
        assert!(!TokenSeq::new(toks("artist:a downtune:0 tempo:1 start wait:1 wait:1 end")).is_canonical());
        assert!(!TokenSeq::new(toks("artist:a downtune:0 tempo:1 start end end")).is_canonical());
        assert!(!TokenSeq::new(toks("downtune:0 artist:a tempo:1 start end")).is_canonical());
    }
}
