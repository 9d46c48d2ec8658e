//! In-memory score model shared by the GP5 reader/writer and the tokenizer,
//! plus the passes that turn an arbitrary score into an encodable one.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub const TICKS_PER_QUARTER: u32 = 960;
/// Longest measure the decoder will produce (32 quarters).
pub const MAX_MEASURE_TICKS: u32 = 32 * TICKS_PER_QUARTER;
/// Finest grid used by time-signature inference (one sixteenth).
pub const SIGNATURE_GRID: u32 = 240;
pub const DEFAULT_TEMPO: u32 = 120;
pub const DRUM_STRING_COUNT: u8 = 6;
pub const MIN_DRUM: u8 = 35;
pub const MAX_DRUM: u8 = 81;
pub const MAX_FRET: u8 = 99;
pub const MIN_DOWNTUNE: i8 = -12;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("structural error: {0}")]
    Structure(String),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TuningError {
    #[error("mixed downtune")]
    MixedDowntune,
    #[error("unsupported tuning on {0}")]
    Unsupported(InstrumentSlot),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InstrumentSlot {
    Distorted0,
    Distorted1,
    Distorted2,
    Clean0,
    Clean1,
    Bass,
    Drums,
    Leads,
    Pads,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Distorted,
    Clean,
    Bass,
    Drums,
    Leads,
    Pads,
}

impl InstrumentSlot {
    pub const ALL: [InstrumentSlot; 9] = [
        InstrumentSlot::Distorted0,
        InstrumentSlot::Distorted1,
        InstrumentSlot::Distorted2,
        InstrumentSlot::Clean0,
        InstrumentSlot::Clean1,
        InstrumentSlot::Bass,
        InstrumentSlot::Drums,
        InstrumentSlot::Leads,
        InstrumentSlot::Pads,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstrumentSlot::Distorted0 => "distorted0",
            InstrumentSlot::Distorted1 => "distorted1",
            InstrumentSlot::Distorted2 => "distorted2",
            InstrumentSlot::Clean0 => "clean0",
            InstrumentSlot::Clean1 => "clean1",
            InstrumentSlot::Bass => "bass",
            InstrumentSlot::Drums => "drums",
            InstrumentSlot::Leads => "leads",
            InstrumentSlot::Pads => "pads",
        }
    }

    pub fn from_name(name: &str) -> Option<InstrumentSlot> {
        Self::ALL.iter().copied().find(|s| s.name() == name)
    }

    pub fn family(self) -> Family {
        match self {
            InstrumentSlot::Distorted0 | InstrumentSlot::Distorted1 | InstrumentSlot::Distorted2 => {
                Family::Distorted
            }
            InstrumentSlot::Clean0 | InstrumentSlot::Clean1 => Family::Clean,
            InstrumentSlot::Bass => Family::Bass,
            InstrumentSlot::Drums => Family::Drums,
            InstrumentSlot::Leads => Family::Leads,
            InstrumentSlot::Pads => Family::Pads,
        }
    }

    pub fn is_percussion(self) -> bool {
        self == InstrumentSlot::Drums
    }

    /// Representative General MIDI program used when writing this slot.
    pub fn program(self) -> u8 {
        match self.family() {
            Family::Distorted => 30,
            Family::Clean => 25,
            Family::Bass => 33,
            Family::Drums => 0,
            Family::Leads => 0,
            Family::Pads => 48,
        }
    }

    /// String counts a pitched track in this slot may have.
    pub fn allowed_string_counts(self) -> &'static [u8] {
        match self.family() {
            Family::Bass => &[4, 5, 6],
            Family::Drums => &[],
            _ => &[6, 7],
        }
    }

    pub fn default_string_count(self) -> u8 {
        match self.family() {
            Family::Bass => 4,
            _ => 6,
        }
    }
}

impl fmt::Display for InstrumentSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Family {
    pub fn slots(self) -> &'static [InstrumentSlot] {
        use InstrumentSlot::*;
        match self {
            Family::Distorted => &[Distorted0, Distorted1, Distorted2],
            Family::Clean => &[Clean0, Clean1],
            Family::Bass => &[Bass],
            Family::Drums => &[Drums],
            Family::Leads => &[Leads],
            Family::Pads => &[Pads],
        }
    }

    pub fn for_program(program: u8, is_percussion: bool) -> Family {
        if is_percussion {
            return Family::Drums;
        }
        match program {
            29..=31 => Family::Distorted,
            24..=28 => Family::Clean,
            32..=39 => Family::Bass,
            16..=23 | 40..=54 | 88..=95 => Family::Pads,
            _ => Family::Leads,
        }
    }
}

/// Maps each raw track, given as (midi program, percussion flag), to a slot.
/// Families fill in order; overflowing tracks share the family's last slot.
pub fn assign_instrument_slots(raw_tracks: &[(u8, bool)]) -> Vec<InstrumentSlot> {
    let hinted: Vec<_> = raw_tracks.iter().map(|&(p, d)| (p, d, None)).collect();
    assign_instrument_slots_with_hints(&hinted)
}

/// Like [`assign_instrument_slots`], but a track whose hint is a slot of its
/// own family claims that slot first (used when re-reading written files).
pub fn assign_instrument_slots_with_hints(
    raw_tracks: &[(u8, bool, Option<InstrumentSlot>)],
) -> Vec<InstrumentSlot> {
    let mut result: Vec<Option<InstrumentSlot>> = vec![None; raw_tracks.len()];
    let mut taken = [false; 9];
    for (i, &(program, perc, hint)) in raw_tracks.iter().enumerate() {
        let family = Family::for_program(program, perc);
        if let Some(slot) = hint {
            if slot.family() == family && !taken[slot as usize] {
                taken[slot as usize] = true;
                result[i] = Some(slot);
            }
        }
    }
    for (i, &(program, perc, _)) in raw_tracks.iter().enumerate() {
        if result[i].is_some() {
            continue;
        }
        let slots = Family::for_program(program, perc).slots();
        let slot = slots
            .iter()
            .copied()
            .find(|s| !taken[*s as usize])
            .unwrap_or(slots[slots.len() - 1]);
        taken[slot as usize] = true;
        result[i] = Some(slot);
    }
    result.into_iter().map(|s| s.expect("every track assigned")).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TimeSignature {
    pub numerator: u8,
    pub denominator: u8,
}

impl TimeSignature {
    pub const fn new(numerator: u8, denominator: u8) -> Self {
        TimeSignature { numerator, denominator }
    }

    pub fn span_ticks(self) -> u32 {
        self.numerator as u32 * (TICKS_PER_QUARTER * 4 / self.denominator.max(1) as u32)
    }
}

impl Default for TimeSignature {
    fn default() -> Self {
        TimeSignature::new(4, 4)
    }
}

impl fmt::Display for TimeSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator, self.denominator)
    }
}

/// Simplest signature spanning `total` ticks: n/4, else n/8, else n/16.
pub fn infer_time_signature(total: u32) -> TimeSignature {
    infer_time_signature_checked(total).0
}

/// Returns the inferred signature and whether `total` had to be rounded
/// to the 240-tick grid (or clamped into range) first.
pub fn infer_time_signature_checked(total: u32) -> (TimeSignature, bool) {
    let mut rounded = ((total + SIGNATURE_GRID / 2) / SIGNATURE_GRID) * SIGNATURE_GRID;
    rounded = rounded.clamp(SIGNATURE_GRID, MAX_MEASURE_TICKS);
    let adjusted = rounded != total;
    let sig = if rounded.is_multiple_of(960) {
        TimeSignature::new((rounded / 960) as u8, 4)
    } else if rounded.is_multiple_of(480) {
        TimeSignature::new((rounded / 480) as u8, 8)
    } else {
        TimeSignature::new((rounded / 240) as u8, 16)
    };
    (sig, adjusted)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MeasureHeader {
    pub index: usize,
    pub time_signature: TimeSignature,
    pub repeat_of_previous: bool,
    pub tempo_change: Option<u32>,
}

impl MeasureHeader {
    pub fn new(index: usize, time_signature: TimeSignature) -> Self {
        MeasureHeader { index, time_signature, repeat_of_previous: false, tempo_change: None }
    }

    pub fn span(&self) -> u32 {
        self.time_signature.span_ticks()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BendPoint {
    /// 0..=12 across the note's length.
    pub position: u8,
    /// Quarter tones.
    pub value: i8,
    pub vibrato: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bend {
    /// GP bend type code (1 bend, 2 bend-release, ... 11 release-down).
    pub kind: u8,
    pub points: Vec<BendPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SlideKind {
    Shift,
    Legato,
    OutDownwards,
    OutUpwards,
    IntoFromBelow,
    IntoFromAbove,
}

impl SlideKind {
    pub const ALL: [SlideKind; 6] = [
        SlideKind::Shift,
        SlideKind::Legato,
        SlideKind::OutDownwards,
        SlideKind::OutUpwards,
        SlideKind::IntoFromBelow,
        SlideKind::IntoFromAbove,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SlideKind::Shift => "shift",
            SlideKind::Legato => "legato",
            SlideKind::OutDownwards => "out_down",
            SlideKind::OutUpwards => "out_up",
            SlideKind::IntoFromBelow => "in_below",
            SlideKind::IntoFromAbove => "in_above",
        }
    }

    pub fn from_name(name: &str) -> Option<SlideKind> {
        Self::ALL.iter().copied().find(|s| s.name() == name)
    }

    /// Bit in the GP5 slide flags byte.
    pub fn gp5_bit(self) -> u8 {
        1 << (self as u8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HarmonicKind {
    Natural,
    Artificial { semitone: u8, accidental: i8, octave: u8 },
    Tapped { fret: u8 },
    Pinch,
    Semi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Grace {
    pub fret: u8,
    /// 16, 32 or 64.
    pub duration: u8,
    /// 0 none, 1 slide, 2 bend, 3 hammer.
    pub transition: u8,
    pub dead: bool,
    pub on_beat: bool,
}

/// Note-level effects. Variant order is the canonical token order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoteEffect {
    PalmMute,
    Vibrato,
    Hammer,
    Tie,
    LetRing,
    GhostNote,
    Accentuated,
    HeavyAccentuated,
    Staccato,
    Bend(Bend),
    Slide(SlideKind),
    Harmonic(HarmonicKind),
    /// Period is 16, 32 or 64.
    Trill { fret: u8, period: u8 },
    Grace(Grace),
    /// 8, 16 or 32.
    TremoloPicking(u8),
}

impl NoteEffect {
    fn same_kind(&self, other: &NoteEffect) -> bool {
        match (self, other) {
            (NoteEffect::Slide(a), NoteEffect::Slide(b)) => a == b,
            _ => std::mem::discriminant(self) == std::mem::discriminant(other),
        }
    }
}

/// Sorts effects into canonical order and keeps the first of each kind.
/// Slides are the exception: distinct slide kinds may coexist.
pub fn canonicalize_note_effects(effects: &mut Vec<NoteEffect>) {
    effects.sort();
    effects.dedup_by(|b, a| a.same_kind(b));
}

/// Beat-level effects. Tempo changes live on the measure header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BeatEffect {
    /// Speed 1..=6.
    StrokeUp(u8),
    StrokeDown(u8),
    FadeIn,
    Tapping,
    Slapping,
    Popping,
}

impl BeatEffect {
    fn group(self) -> u8 {
        match self {
            BeatEffect::StrokeUp(_) | BeatEffect::StrokeDown(_) => 0,
            BeatEffect::FadeIn => 1,
            BeatEffect::Tapping | BeatEffect::Slapping | BeatEffect::Popping => 2,
        }
    }
}

/// Sorts beat effects and keeps at most one stroke and one slap kind.
pub fn canonicalize_beat_effects(effects: &mut Vec<BeatEffect>) {
    effects.sort();
    effects.dedup_by(|b, a| a.group() == b.group());
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NoteValue {
    Fretted { string: u8, fret: u8 },
    Percussion(u8),
}

impl NoteValue {
    /// String index for fretted notes, MIDI number for percussion.
    pub fn key(self) -> u8 {
        match self {
            NoteValue::Fretted { string, .. } => string,
            NoteValue::Percussion(m) => m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Note {
    pub value: NoteValue,
    pub effects: Vec<NoteEffect>,
}

impl Note {
    pub fn fretted(string: u8, fret: u8) -> Self {
        Note { value: NoteValue::Fretted { string, fret }, effects: Vec::new() }
    }

    pub fn drum(midi: u8) -> Self {
        Note { value: NoteValue::Percussion(midi), effects: Vec::new() }
    }

    pub fn with_effects(mut self, mut effects: Vec<NoteEffect>) -> Self {
        canonicalize_note_effects(&mut effects);
        self.effects = effects;
        self
    }

    pub fn has(&self, effect: &NoteEffect) -> bool {
        self.effects.contains(effect)
    }

    pub fn is_ghost(&self) -> bool {
        self.has(&NoteEffect::GhostNote)
    }

    pub fn is_tied(&self) -> bool {
        self.has(&NoteEffect::Tie)
    }

    pub fn lets_ring(&self) -> bool {
        self.has(&NoteEffect::LetRing)
    }

    pub fn string(&self) -> Option<u8> {
        match self.value {
            NoteValue::Fretted { string, .. } => Some(string),
            NoteValue::Percussion(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BeatContent {
    Rest,
    Notes(Vec<Note>),
}

impl BeatContent {
    pub fn notes(&self) -> &[Note] {
        match self {
            BeatContent::Rest => &[],
            BeatContent::Notes(n) => n,
        }
    }

    /// Sorts notes by string (or MIDI number) keeping the first per key;
    /// an empty note list becomes a rest.
    pub fn canonical(notes: Vec<Note>) -> BeatContent {
        let mut notes = notes;
        notes.sort_by_key(|n| n.value.key());
        notes.dedup_by_key(|n| n.value.key());
        if notes.is_empty() {
            BeatContent::Rest
        } else {
            BeatContent::Notes(notes)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Beat {
    pub onset: u32,
    pub duration: u32,
    pub content: BeatContent,
    pub effects: Vec<BeatEffect>,
}

impl Beat {
    pub fn rest(onset: u32, duration: u32) -> Self {
        Beat { onset, duration, content: BeatContent::Rest, effects: Vec::new() }
    }

    pub fn notes(onset: u32, duration: u32, notes: Vec<Note>) -> Self {
        Beat { onset, duration, content: BeatContent::canonical(notes), effects: Vec::new() }
    }

    pub fn end(&self) -> u32 {
        self.onset + self.duration
    }

    pub fn is_rest(&self) -> bool {
        matches!(self.content, BeatContent::Rest)
    }

    /// True when the beat has notes and every one is a ghost note.
    pub fn is_ghost_only(&self) -> bool {
        match &self.content {
            BeatContent::Rest => false,
            BeatContent::Notes(n) => n.iter().all(Note::is_ghost),
        }
    }

    fn same_music(&self, other: &Beat) -> bool {
        self.onset == other.onset
            && self.duration == other.duration
            && self.content == other.content
            && self.effects == other.effects
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Measure {
    pub beats: Vec<Beat>,
}

impl Measure {
    pub fn whole_rest(span: u32) -> Self {
        Measure { beats: vec![Beat::rest(0, span)] }
    }

    /// Beats start at 0, follow each other without gaps and end at `span`.
    pub fn tiles(&self, span: u32) -> bool {
        let mut t = 0;
        for b in &self.beats {
            if b.onset != t || b.duration == 0 {
                return false;
            }
            t = b.end();
        }
        !self.beats.is_empty() && t == span
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Track {
    pub slot: InstrumentSlot,
    pub string_count: u8,
    /// Open-string MIDI pitches, highest string first. Empty for percussion.
    pub tuning: Vec<u8>,
    pub is_percussion: bool,
    pub measures: Vec<Measure>,
}

impl Track {
    pub fn drums(measures: Vec<Measure>) -> Self {
        Track {
            slot: InstrumentSlot::Drums,
            string_count: DRUM_STRING_COUNT,
            tuning: Vec::new(),
            is_percussion: true,
            measures,
        }
    }

    pub fn pitched(slot: InstrumentSlot, tuning: Vec<u8>, measures: Vec<Measure>) -> Self {
        Track { slot, string_count: tuning.len() as u8, tuning, is_percussion: false, measures }
    }

    /// Tuning after removing `downtune`: whether it is standard or dropped.
    pub fn drop_tuning(&self, downtune: i8) -> Option<bool> {
        classify_tuning(self.slot, &self.tuning).and_then(|(k, drop)| (k == downtune).then_some(drop))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Song {
    pub artist: String,
    pub title: String,
    pub initial_tempo: u32,
    pub downtune: i8,
    pub tracks: Vec<Track>,
    pub measure_headers: Vec<MeasureHeader>,
}

impl Default for Song {
    fn default() -> Self {
        Song {
            artist: "unknown".to_string(),
            title: String::new(),
            initial_tempo: DEFAULT_TEMPO,
            downtune: 0,
            tracks: Vec::new(),
            measure_headers: Vec::new(),
        }
    }
}

impl Song {
    pub const TICKS_PER_QUARTER: u32 = TICKS_PER_QUARTER;

    pub fn track(&self, slot: InstrumentSlot) -> Option<&Track> {
        self.tracks.iter().find(|t| t.slot == slot)
    }

    /// Tempo in effect during each measure.
    pub fn tempo_map(&self) -> Vec<u32> {
        let mut tempo = self.initial_tempo;
        self.measure_headers
            .iter()
            .map(|h| {
                if let Some(t) = h.tempo_change {
                    tempo = t;
                }
                tempo
            })
            .collect()
    }

    /// Checks every structural invariant the writer and encoder rely on.
    pub fn check_invariants(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Structure(m));
        if self.initial_tempo == 0 {
            return err("initial tempo is zero".into());
        }
        if self.downtune > 0 || self.downtune < MIN_DOWNTUNE {
            return err(format!("downtune {} out of range", self.downtune));
        }
        for (i, h) in self.measure_headers.iter().enumerate() {
            if h.index != i {
                return err(format!("measure header {i} has index {}", h.index));
            }
            let ts = h.time_signature;
            if ts.numerator == 0 || ![1, 2, 4, 8, 16, 32, 64].contains(&ts.denominator) {
                return err(format!("measure {i} has time signature {ts}"));
            }
            if h.tempo_change == Some(0) {
                return err(format!("measure {i} has tempo change 0"));
            }
        }
        let mut seen = [false; 9];
        for t in &self.tracks {
            if std::mem::replace(&mut seen[t.slot as usize], true) {
                return err(format!("slot {} used twice", t.slot));
            }
            if t.is_percussion != t.slot.is_percussion() {
                return err(format!("slot {} has wrong percussion flag", t.slot));
            }
            if !t.is_percussion
                && (t.tuning.len() != t.string_count as usize
                    || !t.slot.allowed_string_counts().contains(&t.string_count))
            {
                return err(format!("slot {} has {} strings", t.slot, t.string_count));
            }
            if t.measures.len() != self.measure_headers.len() {
                return err(format!("slot {} has {} measures", t.slot, t.measures.len()));
            }
            for (m, h) in t.measures.iter().zip(&self.measure_headers) {
                if !m.tiles(h.span()) {
                    return err(format!("slot {} measure {} does not tile its span", t.slot, h.index));
                }
                for b in &m.beats {
                    check_beat(t, b).map_err(|e| {
                        ModelError::Structure(format!("slot {} measure {}: {e}", t.slot, h.index))
                    })?;
                }
            }
        }
        Ok(())
    }
}

fn check_beat(track: &Track, beat: &Beat) -> Result<(), String> {
    let mut effects = beat.effects.clone();
    canonicalize_beat_effects(&mut effects);
    if effects != beat.effects {
        return Err(format!("beat at {} has non-canonical effects", beat.onset));
    }
    let notes = match &beat.content {
        BeatContent::Rest => return Ok(()),
        BeatContent::Notes(n) => n,
    };
    if notes.is_empty() {
        return Err(format!("beat at {} has an empty note set", beat.onset));
    }
    let mut last_key = None;
    for n in notes {
        match n.value {
            NoteValue::Fretted { string, fret } => {
                if track.is_percussion || string == 0 || string > track.string_count || fret > MAX_FRET {
                    return Err(format!("bad fretted note s{string} f{fret}"));
                }
            }
            NoteValue::Percussion(m) => {
                if !track.is_percussion || !(MIN_DRUM..=MAX_DRUM).contains(&m) {
                    return Err(format!("bad percussion note {m}"));
                }
            }
        }
        if last_key.is_some_and(|k| k >= n.value.key()) {
            return Err(format!("beat at {} has unsorted or duplicate notes", beat.onset));
        }
        last_key = Some(n.value.key());
        let mut effects = n.effects.clone();
        canonicalize_note_effects(&mut effects);
        if effects != n.effects {
            return Err(format!("note at {} has non-canonical effects", beat.onset));
        }
    }
    Ok(())
}

pub const GUITAR_6: [u8; 6] = [64, 59, 55, 50, 45, 40];
pub const GUITAR_7: [u8; 7] = [64, 59, 55, 50, 45, 40, 35];
pub const BASS_4: [u8; 4] = [43, 38, 33, 28];
pub const BASS_5: [u8; 5] = [43, 38, 33, 28, 23];
pub const BASS_6: [u8; 6] = [48, 43, 38, 33, 28, 23];

/// Standard open-string pitches for a slot and string count.
pub fn standard_tuning(slot: InstrumentSlot, strings: u8) -> Option<&'static [u8]> {
    match (slot.family(), strings) {
        (Family::Drums, _) => None,
        (Family::Bass, 4) => Some(&BASS_4),
        (Family::Bass, 5) => Some(&BASS_5),
        (Family::Bass, 6) => Some(&BASS_6),
        (Family::Bass, _) => None,
        (_, 6) => Some(&GUITAR_6),
        (_, 7) => Some(&GUITAR_7),
        _ => None,
    }
}

/// Builds a tuning from the standard table, a uniform offset and an
/// optional whole-step drop on the lowest string.
pub fn tuning_for(slot: InstrumentSlot, strings: u8, downtune: i8, drop: bool) -> Option<Vec<u8>> {
    let std = standard_tuning(slot, strings)?;
    let n = std.len();
    std.iter()
        .enumerate()
        .map(|(i, &p)| {
            let offset = downtune as i16 - if drop && i == n - 1 { 2 } else { 0 };
            u8::try_from(p as i16 + offset).ok()
        })
        .collect()
}

/// Returns (uniform offset, dropped lowest string) for a recognized tuning.
pub fn classify_tuning(slot: InstrumentSlot, tuning: &[u8]) -> Option<(i8, bool)> {
    let std = standard_tuning(slot, tuning.len() as u8)?;
    let offsets: Vec<i16> = tuning.iter().zip(std).map(|(&a, &b)| a as i16 - b as i16).collect();
    let k = offsets[0];
    if !(MIN_DOWNTUNE as i16..=0).contains(&k) {
        return None;
    }
    let (last, rest) = offsets.split_last()?;
    if rest.iter().any(|&o| o != k) {
        return None;
    }
    if *last == k {
        Some((k as i8, false))
    } else if *last == k - 2 {
        Some((k as i8, true))
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuningInfo {
    pub downtune: i8,
    pub drop_slots: Vec<InstrumentSlot>,
}

/// Finds the downtune shared by every pitched track. Drop tunings (lowest
/// string a further whole step down) are accepted on any pitched track.
pub fn validate_tuning(song: &Song) -> Result<TuningInfo, TuningError> {
    let mut downtune = None;
    let mut drop_slots = Vec::new();
    for t in song.tracks.iter().filter(|t| !t.is_percussion) {
        let (k, drop) = classify_tuning(t.slot, &t.tuning).ok_or(TuningError::Unsupported(t.slot))?;
        if *downtune.get_or_insert(k) != k {
            return Err(TuningError::MixedDowntune);
        }
        if drop {
            drop_slots.push(t.slot);
        }
    }
    Ok(TuningInfo { downtune: downtune.unwrap_or(0), drop_slots })
}

fn check_measure_counts(tracks: &[Track]) -> Result<usize, ModelError> {
    let n = tracks.first().map_or(0, |t| t.measures.len());
    if tracks.iter().any(|t| t.measures.len() != n) {
        return Err(ModelError::Structure("tracks have different measure counts".into()));
    }
    Ok(n)
}

/// Beat boundaries of a measure across several tracks.
fn union_onsets<'a>(measures: impl Iterator<Item = &'a Measure>) -> (Vec<u32>, u32) {
    let mut onsets = std::collections::BTreeSet::new();
    let mut end = 0;
    for m in measures {
        for b in &m.beats {
            onsets.insert(b.onset);
            end = end.max(b.end());
        }
    }
    (onsets.into_iter().collect(), end)
}

fn beats_from_onsets(onsets: &[u32], end: u32, mut content_at: impl FnMut(u32) -> (Vec<Note>, Vec<BeatEffect>)) -> Vec<Beat> {
    onsets
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let next = onsets.get(i + 1).copied().unwrap_or(end);
            let (notes, mut effects) = content_at(t);
            canonicalize_beat_effects(&mut effects);
            Beat { onset: t, duration: next - t, content: BeatContent::canonical(notes), effects }
        })
        .collect()
}

/// Unions percussion tracks beat by beat. Identical hits at the same onset
/// collapse to one; the first track's note effects win.
pub fn merge_drum_tracks(tracks: &[Track]) -> Result<Track, ModelError> {
    if tracks.iter().any(|t| !t.is_percussion) {
        return Err(ModelError::Structure("merge_drum_tracks given a pitched track".into()));
    }
    let n = check_measure_counts(tracks)?;
    let measures = (0..n)
        .map(|m| {
            let (onsets, end) = union_onsets(tracks.iter().map(|t| &t.measures[m]));
            let beats = beats_from_onsets(&onsets, end, |at| {
                let mut notes = Vec::new();
                let mut effects = Vec::new();
                for t in tracks {
                    if let Some(b) = t.measures[m].beats.iter().find(|b| b.onset == at) {
                        notes.extend(b.content.notes().iter().cloned());
                        effects.extend(b.effects.iter().copied());
                    }
                }
                (notes, effects)
            });
            Measure { beats }
        })
        .collect();
    Ok(Track::drums(measures))
}

/// Unions pitched tracks that landed in the same slot. New attacks take
/// precedence over sustained notes and earlier tracks win per string; a note
/// still sounding across another track's onset continues as a tied note.
pub fn merge_overflow_tracks(tracks: &[Track]) -> Result<Track, ModelError> {
    let first = tracks
        .first()
        .ok_or_else(|| ModelError::Structure("no tracks to merge".into()))?;
    if tracks.iter().any(|t| t.is_percussion) {
        return Err(ModelError::Structure("merge_overflow_tracks given a percussion track".into()));
    }
    let n = check_measure_counts(tracks)?;
    let string_count = tracks.iter().map(|t| t.string_count).max().unwrap_or(first.string_count);
    let tuning = tracks
        .iter()
        .find(|t| t.string_count == string_count)
        .map_or_else(|| first.tuning.clone(), |t| t.tuning.clone());
    let measures = (0..n)
        .map(|m| {
            let (onsets, end) = union_onsets(tracks.iter().map(|t| &t.measures[m]));
            let beats = beats_from_onsets(&onsets, end, |at| {
                let mut notes = Vec::new();
                let mut effects = Vec::new();
                for t in tracks {
                    if let Some(b) = t.measures[m].beats.iter().find(|b| b.onset == at) {
                        notes.extend(b.content.notes().iter().cloned());
                        effects.extend(b.effects.iter().copied());
                    }
                }
                for t in tracks {
                    if let Some(b) = t.measures[m].beats.iter().find(|b| b.onset < at && b.end() > at) {
                        notes.extend(
                            b.content.notes().iter().map(|n| Note { value: n.value, effects: vec![NoteEffect::Tie] }),
                        );
                    }
                }
                // canonical() keeps the first note per string, so order above sets priority
                (notes, effects)
            });
            Measure { beats }
        })
        .collect();
    Ok(Track { slot: first.slot, string_count, tuning, is_percussion: false, measures })
}

/// Groups tracks by slot, merges each group and returns them in slot order.
pub fn merge_tracks_into_slots(tracks: Vec<Track>) -> Result<Vec<Track>, ModelError> {
    let mut groups: BTreeMap<InstrumentSlot, Vec<Track>> = BTreeMap::new();
    for t in tracks {
        groups.entry(t.slot).or_default().push(t);
    }
    groups
        .into_iter()
        .map(|(slot, group)| {
            if group.len() == 1 {
                return Ok(group.into_iter().next().expect("group of one"));
            }
            log::debug!("merging {} tracks into {slot}", group.len());
            if slot.is_percussion() {
                merge_drum_tracks(&group)
            } else {
                let mut merged = merge_overflow_tracks(&group)?;
                merged.slot = slot;
                Ok(merged)
            }
        })
        .collect()
}

/// A measure repeats its predecessor when spans and every track's beats match.
pub fn mark_repeats(song: &mut Song) {
    for i in 0..song.measure_headers.len() {
        let repeat = i > 0
            && song.measure_headers[i].span() == song.measure_headers[i - 1].span()
            && song.tracks.iter().all(|t| t.measures[i] == t.measures[i - 1]);
        song.measure_headers[i].repeat_of_previous = repeat;
    }
}

/// Lowercase, whitespace runs become underscores; empty becomes "unknown".
pub fn normalize_artist(artist: &str) -> String {
    let joined = artist.split_whitespace().collect::<Vec<_>>().join("_").to_lowercase();
    if joined.is_empty() {
        "unknown".to_string()
    } else {
        joined
    }
}

/// One sounding note in absolute ticks from the start of the song.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SoundingNote {
    pub start: u64,
    pub end: u64,
    pub value: NoteValue,
}

/// Expands a track's beats into sounding notes. A note lasts until the next
/// beat of its track, except that ghost-only beats do not cut earlier notes
/// and let-ring notes last to the end of the measure or the next note on the
/// same string.
pub fn sounding_intervals(song: &Song, track: &Track) -> Vec<SoundingNote> {
    let mut out = Vec::new();
    let mut measure_start = 0u64;
    for (m, header) in track.measures.iter().zip(&song.measure_headers) {
        let measure_end = measure_start + header.span() as u64;
        for (i, beat) in m.beats.iter().enumerate() {
            let later = &m.beats[i + 1..];
            for note in beat.content.notes() {
                let end = if note.lets_ring() {
                    later
                        .iter()
                        .find(|b| b.content.notes().iter().any(|n| n.value.key() == note.value.key()))
                        .map_or(measure_end, |b| measure_start + b.onset as u64)
                } else {
                    later
                        .iter()
                        .find(|b| !b.is_ghost_only())
                        .map_or(measure_end, |b| measure_start + b.onset as u64)
                };
                out.push(SoundingNote { start: measure_start + beat.onset as u64, end, value: note.value });
            }
        }
        measure_start = measure_end;
    }
    out
}

/// Describes the first difference between two songs under musical
/// equivalence: measure spans, tempo map, downtune, normalized artist and,
/// per slot, tuning and every beat with its notes and effects. The title and
/// the numerator/denominator split of a span (3/4 vs 6/8) are ignored.
pub fn equivalence_diff(a: &Song, b: &Song) -> Option<String> {
    if normalize_artist(&a.artist) != normalize_artist(&b.artist) {
        return Some(format!("artist {:?} vs {:?}", a.artist, b.artist));
    }
    if a.downtune != b.downtune {
        return Some(format!("downtune {} vs {}", a.downtune, b.downtune));
    }
    if a.measure_headers.len() != b.measure_headers.len() {
        return Some(format!("{} vs {} measures", a.measure_headers.len(), b.measure_headers.len()));
    }
    for (i, (x, y)) in a.measure_headers.iter().zip(&b.measure_headers).enumerate() {
        if x.span() != y.span() {
            return Some(format!("measure {i} spans {} vs {}", x.span(), y.span()));
        }
    }
    if a.tempo_map() != b.tempo_map() {
        return Some("tempo maps differ".into());
    }
    let slots = |s: &Song| s.tracks.iter().map(|t| t.slot).collect::<Vec<_>>();
    if slots(a) != slots(b) {
        return Some(format!("slots {:?} vs {:?}", slots(a), slots(b)));
    }
    for (x, y) in a.tracks.iter().zip(&b.tracks) {
        if !x.is_percussion && x.tuning != y.tuning {
            return Some(format!("{} tuning {:?} vs {:?}", x.slot, x.tuning, y.tuning));
        }
        for (i, (mx, my)) in x.measures.iter().zip(&y.measures).enumerate() {
            if mx.beats.len() != my.beats.len()
                || mx.beats.iter().zip(&my.beats).any(|(p, q)| !p.same_music(q))
            {
                return Some(format!("{} measure {i} differs", x.slot));
            }
        }
    }
    None
}

pub fn musically_equivalent(a: &Song, b: &Song) -> bool {
    equivalence_diff(a, b).is_none()
}
