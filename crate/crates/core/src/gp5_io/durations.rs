//! Tick lengths that a single GP5 beat can express.

use std::collections::BTreeMap;
use std::sync::OnceLock;

/// Tuplets GP5 accepts, as (enters, times): `enters` notes in the time of `times`.
pub const TUPLETS: [(u32, u32); 9] = [(3, 2), (5, 4), (6, 4), (7, 4), (9, 8), (10, 8), (11, 8), (12, 8), (13, 8)];

/// Duration fields of one GP5 beat.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GpDuration {
    /// 1 = whole ... 64 = sixty-fourth.
    pub value: u32,
    pub dotted: bool,
    /// Tuplet `enters`; 1 for none.
    pub enters: u32,
}

impl GpDuration {
    /// Duration byte: -2 whole ... 4 sixty-fourth.
    pub fn code(self) -> i8 {
        self.value.trailing_zeros() as i8 - 2
    }

    pub fn times(self) -> u32 {
        TUPLETS.iter().find(|t| t.0 == self.enters).map_or(1, |t| t.1)
    }

    /// Exact length in ticks, or `None` when it is fractional.
    pub fn ticks(self) -> Option<u32> {
        let num = 3840 * self.times() * if self.dotted { 3 } else { 2 };
        let den = self.value * self.enters * 2;
        num.is_multiple_of(den).then_some(num / den)
    }

    /// Length rounded down, for reading files with fractional tuplets.
    pub fn ticks_floor(self) -> u32 {
        let num = 3840 * self.times() * if self.dotted { 3 } else { 2 };
        num / (self.value * self.enters * 2)
    }
}

fn table() -> &'static BTreeMap<u32, GpDuration> {
    static TABLE: OnceLock<BTreeMap<u32, GpDuration>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut map = BTreeMap::new();
        let enters = std::iter::once(1).chain(TUPLETS.iter().map(|t| t.0));
        for e in enters {
            for dotted in [false, true] {
                for value in [1, 2, 4, 8, 16, 32, 64] {
                    let d = GpDuration { value, dotted, enters: e };
                    if let Some(t) = d.ticks() {
                        map.entry(t).or_insert(d);
                    }
                }
            }
        }
        map
    })
}

/// Preferred encoding of a tick length: plain, then dotted, then tuplets.
pub fn representation(ticks: u32) -> Option<GpDuration> {
    table().get(&ticks).copied()
}

pub fn is_representable(ticks: u32) -> bool {
    table().contains_key(&ticks)
}

const GRID: u32 = 4;
const LIMIT: u32 = 32 * 960;

/// Representable multiples of the grid, plain first, then dotted, then
/// tuplets, longest first within each group.
fn preferred_chunks() -> &'static [u32] {
    static CHUNKS: OnceLock<Vec<u32>> = OnceLock::new();
    CHUNKS.get_or_init(|| {
        let mut chunks: Vec<u32> = table().keys().copied().filter(|t| t % GRID == 0).collect();
        chunks.sort_by_key(|&c| {
            let d = table()[&c];
            (d.enters != 1, d.dotted, std::cmp::Reverse(c))
        });
        chunks
    })
}

/// Fewest representable lengths summing to `ticks`; ties go to the
/// [`preferred_chunks`] order. Only multiples of 4 up to 32 quarters are
/// considered.
pub fn decompose(ticks: u32) -> Option<Vec<u32>> {
    static BEST: OnceLock<Vec<u16>> = OnceLock::new();
    if ticks == 0 || !ticks.is_multiple_of(GRID) || ticks > LIMIT {
        return None;
    }
    let chunks = preferred_chunks();
    let best = BEST.get_or_init(|| {
        let n = (LIMIT / GRID) as usize;
        let mut best = vec![u16::MAX; n + 1];
        best[0] = 0;
        for i in 1..=n {
            let g = i as u32 * GRID;
            for &c in chunks.iter().filter(|&&c| c <= g) {
                let prev = best[((g - c) / GRID) as usize];
                if prev != u16::MAX && prev + 1 < best[i] {
                    best[i] = prev + 1;
                }
            }
        }
        best
    });
    if best[(ticks / GRID) as usize] == u16::MAX {
        return None;
    }
    let mut out = Vec::new();
    let mut rest = ticks;
    while rest > 0 {
        let here = best[(rest / GRID) as usize];
        let c = chunks
            .iter()
            .copied()
            .find(|&c| c <= rest && best[((rest - c) / GRID) as usize] == here - 1)
            .expect("dp table is consistent");
        out.push(c);
        rest -= c;
    }
    Some(out)
}
