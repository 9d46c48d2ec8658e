//! Random songs and token streams for property tests and benchmarks.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::song_model::{
    canonicalize_beat_effects, mark_repeats, tuning_for, Beat, BeatEffect, Bend, BendPoint, Grace,
    HarmonicKind, InstrumentSlot, Measure, MeasureHeader, Note, NoteEffect, SlideKind, Song, TimeSignature, Track,
    MAX_DRUM, MIN_DRUM,
};
use crate::gp5_io::{fix_ties, FitReport};
use crate::stats::Vocab;
use crate::tokenizer::{parse_token, TokenSeq};

pub const SIGNATURES: [TimeSignature; 6] = [
    TimeSignature::new(4, 4),
    TimeSignature::new(3, 4),
    TimeSignature::new(2, 4),
    TimeSignature::new(5, 4),
    TimeSignature::new(6, 8),
    TimeSignature::new(7, 8),
];

/// Rhythm cells. Triplets come as whole groups so every cell is a
/// multiple of 120 ticks and every piece has a single GP5 encoding.
const CELLS: [&[u32]; 8] = [&[1920], &[1440], &[960], &[480], &[240], &[120], &[320, 320, 320], &[160, 160, 160]];

#[derive(Debug, Clone)]
pub struct SynthParams {
    pub max_measures: usize,
    pub rest_probability: f64,
    pub effect_probability: f64,
    pub beat_effect_probability: f64,
    pub tempo_change_probability: f64,
    pub repeat_probability: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            max_measures: 6,
            rest_probability: 0.2,
            effect_probability: 0.3,
            beat_effect_probability: 0.1,
            tempo_change_probability: 0.2,
            repeat_probability: 0.2,
        }
    }
}

/// A song that satisfies every model invariant, encodes to tokens and
/// writes to GP5 without fitting.
pub fn random_song<R: Rng>(rng: &mut R, p: &SynthParams) -> Song {
    let mut slots: Vec<InstrumentSlot> = InstrumentSlot::ALL.iter().copied().filter(|_| rng.gen_bool(0.5)).collect();
    if slots.is_empty() {
        slots.push(*InstrumentSlot::ALL.choose(rng).expect("nine slots"));
    }
    // GP5 stores tunings only, so a drums-only song always reads back at 0
    let pitched = slots.iter().any(|s| !s.is_percussion());
    let downtune = if !pitched || rng.gen_bool(0.5) { 0 } else { -rng.gen_range(1..=5) };
    let n = rng.gen_range(1..=p.max_measures);
    let mut headers: Vec<MeasureHeader> = Vec::with_capacity(n);
    let mut copy_previous = vec![false; n];
    for i in 0..n {
        copy_previous[i] = i > 0 && rng.gen_bool(p.repeat_probability);
        let ts = if copy_previous[i] { headers[i - 1].time_signature } else { *SIGNATURES.choose(rng).expect("nonempty") };
        let tempo_change = rng.gen_bool(p.tempo_change_probability).then(|| rng.gen_range(30..=300));
        headers.push(MeasureHeader { tempo_change, ..MeasureHeader::new(i, ts) });
    }
    let tracks = slots
        .into_iter()
        .map(|slot| {
            let mut gen = TrackGen { rng: &mut *rng, p, drums: slot.is_percussion(), strings: 6, last_fret: [None; 8] };
            let tuning = if gen.drums {
                Vec::new()
            } else {
                let counts = slot.allowed_string_counts();
                gen.strings = *counts.choose(gen.rng).expect("pitched slot");
                let drop = gen.rng.gen_bool(0.3);
                tuning_for(slot, gen.strings, downtune, drop).expect("downtune in range")
            };
            let mut measures: Vec<Measure> = Vec::with_capacity(n);
            for (h, &copy) in headers.iter().zip(&copy_previous) {
                let m = if copy { measures.last().cloned().expect("repeat follows a measure") } else { gen.measure(h.span()) };
                gen.remember(&m);
                measures.push(m);
            }
            if gen.drums {
                Track::drums(measures)
            } else {
                // copied measures may follow different notes than their originals
                let mut t = Track::pitched(slot, tuning, measures);
                fix_ties(&mut t, &mut FitReport::default());
                t
            }
        })
        .collect();
    let mut song = Song {
        artist: format!("band {}", rng.gen_range(0..50)),
        title: String::new(),
        initial_tempo: rng.gen_range(40..=240),
        downtune,
        tracks,
        measure_headers: headers,
    };
    mark_repeats(&mut song);
    debug_assert!(song.check_invariants().is_ok());
    song
}

struct TrackGen<'a, R: Rng> {
    rng: &'a mut R,
    p: &'a SynthParams,
    drums: bool,
    strings: u8,
    last_fret: [Option<u8>; 8],
}

impl<R: Rng> TrackGen<'_, R> {
    fn measure(&mut self, span: u32) -> Measure {
        let mut lengths = Vec::new();
        let mut left = span;
        while left > 0 {
            let fitting: Vec<&[u32]> = CELLS.iter().copied().filter(|c| c.iter().sum::<u32>() <= left).collect();
            let cell = fitting.choose(self.rng).expect("120 always fits");
            lengths.extend_from_slice(cell);
            left -= cell.iter().sum::<u32>();
        }
        let mut onset = 0;
        let mut beats = Vec::with_capacity(lengths.len());
        for d in lengths {
            let mut beat = if self.rng.gen_bool(self.p.rest_probability) {
                Beat::rest(onset, d)
            } else {
                let notes = self.notes();
                Beat::notes(onset, d, notes)
            };
            if self.rng.gen_bool(self.p.beat_effect_probability) {
                beat.effects.push(self.beat_effect());
                canonicalize_beat_effects(&mut beat.effects);
            }
            self.remember_beat(&beat);
            beats.push(beat);
            onset += d;
        }
        Measure { beats }
    }

    fn remember(&mut self, m: &Measure) {
        for b in &m.beats {
            self.remember_beat(b);
        }
    }

    fn remember_beat(&mut self, b: &Beat) {
        for n in b.content.notes() {
            if let crate::song_model::NoteValue::Fretted { string, fret } = n.value {
                self.last_fret[string as usize] = Some(fret);
            }
        }
    }

    fn notes(&mut self) -> Vec<Note> {
        let count = self.rng.gen_range(1..=3);
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let note = if self.drums {
                let mut n = Note::drum(self.rng.gen_range(MIN_DRUM..=MAX_DRUM));
                if self.rng.gen_bool(self.p.effect_probability) {
                    let e = [NoteEffect::GhostNote, NoteEffect::Accentuated, NoteEffect::HeavyAccentuated]
                        .choose(self.rng)
                        .expect("nonempty")
                        .clone();
                    n = n.with_effects(vec![e]);
                }
                n
            } else {
                let string = self.rng.gen_range(1..=self.strings);
                let mut effects = Vec::new();
                while self.rng.gen_bool(self.p.effect_probability) && effects.len() < 4 {
                    effects.push(self.note_effect());
                }
                let tie_fret = self.last_fret[string as usize];
                let fret = match tie_fret {
                    Some(f) if effects.contains(&NoteEffect::Tie) => f,
                    _ => {
                        effects.retain(|e| *e != NoteEffect::Tie);
                        self.rng.gen_range(0..=24)
                    }
                };
                Note::fretted(string, fret).with_effects(effects)
            };
            out.push(note);
        }
        // duplicates on one string or drum are dropped by canonical()
        out
    }

    fn note_effect(&mut self) -> NoteEffect {
        let r = &mut *self.rng;
        match r.gen_range(0..15) {
            0 => NoteEffect::PalmMute,
            1 => NoteEffect::Vibrato,
            2 => NoteEffect::Hammer,
            3 => NoteEffect::Tie,
            4 => NoteEffect::LetRing,
            5 => NoteEffect::GhostNote,
            6 => NoteEffect::Accentuated,
            7 => NoteEffect::HeavyAccentuated,
            8 => NoteEffect::Staccato,
            9 => {
                let points = (0..r.gen_range(1..=4))
                    .map(|_| BendPoint { position: r.gen_range(0..=12), value: r.gen_range(-4..=12), vibrato: r.gen_bool(0.2) })
                    .collect();
                NoteEffect::Bend(Bend { kind: r.gen_range(1..=11), points })
            }
            10 => NoteEffect::Slide(*SlideKind::ALL.choose(r).expect("nonempty")),
            11 => NoteEffect::Harmonic(match r.gen_range(0..5) {
                0 => HarmonicKind::Natural,
                1 => HarmonicKind::Artificial {
                    semitone: r.gen_range(0..=11),
                    accidental: r.gen_range(-1..=1),
                    octave: r.gen_range(0..=2),
                },
                2 => HarmonicKind::Tapped { fret: r.gen_range(0..=24) },
                3 => HarmonicKind::Pinch,
                _ => HarmonicKind::Semi,
            }),
            12 => NoteEffect::Trill { fret: r.gen_range(0..=24), period: *[16, 32, 64].choose(r).expect("nonempty") },
            13 => NoteEffect::Grace(Grace {
                fret: r.gen_range(0..=24),
                duration: *[16, 32, 64].choose(r).expect("nonempty"),
                transition: r.gen_range(0..=3),
                dead: r.gen_bool(0.2),
                on_beat: r.gen_bool(0.5),
            }),
            _ => NoteEffect::TremoloPicking(*[8, 16, 32].choose(r).expect("nonempty")),
        }
    }

    fn beat_effect(&mut self) -> BeatEffect {
        match self.rng.gen_range(0..6) {
            0 => BeatEffect::StrokeUp(self.rng.gen_range(1..=6)),
            1 => BeatEffect::StrokeDown(self.rng.gen_range(1..=6)),
            2 => BeatEffect::FadeIn,
            3 => BeatEffect::Tapping,
            4 => BeatEffect::Slapping,
            _ => BeatEffect::Popping,
        }
    }
}

/// Up to `max_len` tokens drawn uniformly from `vocab`, in any order.
pub fn random_tokens<R: Rng>(rng: &mut R, vocab: &Vocab, max_len: usize) -> TokenSeq {
    let len = rng.gen_range(0..=max_len);
    let tokens = (0..len).filter_map(|_| vocab.tokens.choose(rng)).map(|s| parse_token(s)).collect();
    TokenSeq::new(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use crate::song_model::BeatContent;

    #[test]
    fn songs_are_valid_and_vary() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let mut seen = std::collections::BTreeSet::new();
        for _ in 0..50 {
            let s = random_song(&mut rng, &SynthParams::default());
            s.check_invariants().unwrap();
            for t in &s.tracks {
                seen.insert(t.slot);
            }
        }
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn ties_continue_the_previous_fret() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let s = random_song(&mut rng, &SynthParams { effect_probability: 0.8, ..SynthParams::default() });
        for t in s.tracks.iter().filter(|t| !t.is_percussion) {
            let mut last = [None; 8];
            for b in t.measures.iter().flat_map(|m| &m.beats) {
                if let BeatContent::Notes(notes) = &b.content {
                    for n in notes {
                        let s = n.string().unwrap() as usize;
                        if n.is_tied() {
                            assert!(last[s].is_some());
                        }
                        if let crate::song_model::NoteValue::Fretted { fret, .. } = n.value {
                            if n.is_tied() {
                                assert_eq!(last[s], Some(fret));
                            }
                            last[s] = Some(fret);
                        }
                    }
                }
            }
        }
    }
}
