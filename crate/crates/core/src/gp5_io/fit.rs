use serde::Serialize;

use super::durations::decompose;
use crate::song_model::{
    mark_repeats, tuning_for, Beat, BeatContent, InstrumentSlot, Measure, MeasureHeader, Note, NoteEffect,
    NoteValue, Song, TimeSignature, Track,
};

/// Edits made by [`fit_for_gp5`]. Splits keep the sound; the other counts
/// mark lossy repairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FitReport {
    pub added_measure: bool,
    pub added_track: bool,
    pub rounded_onsets: usize,
    pub collapsed_beats: usize,
    pub merged_beats: usize,
    pub split_beats: usize,
    pub capped_drum_hits: usize,
    pub removed_ties: usize,
    pub retargeted_ties: usize,
    /// GP5 keeps tunings, not a downtune value, so songs without pitched
    /// tracks lose it.
    pub dropped_downtune: bool,
}

impl FitReport {
    pub fn is_lossless(&self) -> bool {
        *self == FitReport { split_beats: self.split_beats, ..FitReport::default() }
    }
}

const GRID: u32 = 4;
const MAX_DRUM_HITS: usize = 7;

/// Rewrites a valid song so that `write_gp5` accepts it: every beat gets a
/// duration with a single GP5 encoding and tied notes point at the fret
/// they continue.
pub fn fit_for_gp5(song: &Song) -> (Song, FitReport) {
    let mut report = FitReport::default();
    let mut song = song.clone();
    if song.measure_headers.is_empty() {
        report.added_measure = true;
        let header = MeasureHeader::new(0, TimeSignature::default());
        for t in &mut song.tracks {
            t.measures = vec![Measure::whole_rest(header.span())];
        }
        song.measure_headers.push(header);
    }
    if song.tracks.is_empty() {
        report.added_track = true;
        let tuning = tuning_for(InstrumentSlot::Leads, 6, song.downtune, false)
            .expect("downtune is within the supported range");
        let measures = song.measure_headers.iter().map(|h| Measure::whole_rest(h.span())).collect();
        song.tracks.push(Track::pitched(InstrumentSlot::Leads, tuning, measures));
    }
    if song.downtune != 0 && song.tracks.iter().all(|t| t.is_percussion) {
        song.downtune = 0;
        report.dropped_downtune = true;
    }
    let spans: Vec<u32> = song.measure_headers.iter().map(MeasureHeader::span).collect();
    for track in &mut song.tracks {
        for (m, &span) in track.measures.iter_mut().zip(&spans) {
            fit_measure(m, span, track.is_percussion, &mut report);
        }
        if !track.is_percussion {
            fix_ties(track, &mut report);
        }
    }
    mark_repeats(&mut song);
    (song, report)
}

fn fit_measure(measure: &mut Measure, span: u32, drums: bool, report: &mut FitReport) {
    let mut beats: Vec<Beat> = Vec::with_capacity(measure.beats.len());
    for b in measure.beats.drain(..) {
        let onset = (b.onset + GRID / 2) / GRID * GRID;
        if onset != b.onset {
            report.rounded_onsets += 1;
        }
        if onset >= span || beats.last().is_some_and(|p| p.onset >= onset) {
            report.collapsed_beats += 1;
            continue;
        }
        beats.push(Beat { onset, ..b });
    }
    // the first beat always sits at 0, so rounding never leaves a gap there
    for i in 0..beats.len() {
        let end = beats.get(i + 1).map_or(span, |n| n.onset);
        beats[i].duration = end - beats[i].onset;
    }
    let mut i = 0;
    while i < beats.len() {
        if decompose(beats[i].duration).is_some() {
            i += 1;
        } else if i > 0 {
            let d = beats.remove(i).duration;
            beats[i - 1].duration += d;
            report.merged_beats += 1;
            i -= 1;
        } else {
            let d = beats.remove(1).duration;
            beats[0].duration += d;
            report.merged_beats += 1;
        }
    }
    let mut out = Vec::with_capacity(beats.len());
    for mut b in beats {
        if drums && b.content.notes().len() > MAX_DRUM_HITS {
            report.capped_drum_hits += b.content.notes().len() - MAX_DRUM_HITS;
            b.content = BeatContent::canonical(b.content.notes()[..MAX_DRUM_HITS].to_vec());
        }
        let chunks = decompose(b.duration).expect("merged until decomposable");
        if chunks.len() > 1 {
            report.split_beats += 1;
        }
        let continuation = if drums {
            BeatContent::Rest
        } else {
            BeatContent::canonical(
                b.content
                    .notes()
                    .iter()
                    .map(|n| Note { value: n.value, effects: vec![NoteEffect::Tie] })
                    .collect(),
            )
        };
        let mut onset = b.onset;
        for (k, &d) in chunks.iter().enumerate() {
            if k == 0 {
                out.push(Beat { onset, duration: d, ..b.clone() });
            } else {
                out.push(Beat { onset, duration: d, content: continuation.clone(), effects: Vec::new() });
            }
            onset += d;
        }
    }
    measure.beats = out;
}

/// A tie must continue the last fret played on its string; without a
/// previous note it becomes a plain note.
pub(crate) fn fix_ties(track: &mut Track, report: &mut FitReport) {
    let mut last: [Option<u8>; 8] = [None; 8];
    for b in track.measures.iter_mut().flat_map(|m| m.beats.iter_mut()) {
        let BeatContent::Notes(notes) = &mut b.content else { continue };
        for n in notes.iter_mut() {
            let NoteValue::Fretted { string, fret } = &mut n.value else { continue };
            let s = *string as usize;
            if n.effects.contains(&NoteEffect::Tie) {
                match last[s] {
                    None => {
                        n.effects.retain(|e| *e != NoteEffect::Tie);
                        report.removed_ties += 1;
                    }
                    Some(f) if f != *fret => {
                        *fret = f;
                        report.retargeted_ties += 1;
                    }
                    Some(_) => {}
                }
            }
            last[s] = Some(*fret);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_measure(beats: Vec<Beat>) -> Song {
        let h = MeasureHeader::new(0, TimeSignature::default());
        let tuning = tuning_for(InstrumentSlot::Leads, 6, 0, false).unwrap();
        Song {
            tracks: vec![Track::pitched(InstrumentSlot::Leads, tuning, vec![Measure { beats }])],
            measure_headers: vec![h],
            ..Song::default()
        }
    }

    #[test]
    fn splits_into_ties() {
        let song = one_measure(vec![
            Beat::notes(0, 1200, vec![Note::fretted(1, 5)]),
            Beat::rest(1200, 2640),
        ]);
        let (fit, report) = fit_for_gp5(&song);
        assert!(report.is_lossless());
        assert_eq!(report.split_beats, 2);
        let beats = &fit.tracks[0].measures[0].beats;
        assert_eq!(beats[1].onset, 960);
        assert_eq!(beats[1].content.notes()[0], Note::fretted(1, 5).with_effects(vec![NoteEffect::Tie]));
        fit.check_invariants().unwrap();
    }

    #[test]
    fn merges_tiny_beats_and_fixes_ties() {
        let song = one_measure(vec![
            Beat::notes(0, 3838, vec![Note::fretted(2, 3).with_effects(vec![NoteEffect::Tie])]),
            Beat::rest(3838, 2),
        ]);
        let (fit, report) = fit_for_gp5(&song);
        assert_eq!(report.collapsed_beats, 1);
        assert_eq!(report.removed_ties, 1);
        assert_eq!(fit.tracks[0].measures[0].beats.len(), 1);
        assert!(!report.is_lossless());
    }

    #[test]
    fn empty_song_gets_a_track_and_measure() {
        let (fit, report) = fit_for_gp5(&Song::default());
        assert!(report.added_track && report.added_measure);
        fit.check_invariants().unwrap();
        assert_eq!(fit.tracks[0].measures[0].beats.len(), 1);
    }
}
