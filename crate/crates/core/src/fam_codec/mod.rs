//! Per-word fault-aware circular-shift mapping.
//!
//! Physical cells of a word are numbered `0..W` from the left. A logical
//! word is laid out MSB-first; with rotation `r` the logical bit of
//! significance `W-1-k` occupies physical position `(k + r) mod W`.
//! Physical patterns are held in integers whose bit `W-1-p` is cell `p`,
//! so encoding is a right rotation within `W` bits.

mod pattern;

use std::fmt;

pub use pattern::{
    derive_baseline_plan, derive_fam1_patterns, derive_fam2_pattern, plan_for, read_patterns,
    write_patterns, HierarchyPlan, MappingPattern, PatternError, PatternTag, Slot,
};

use crate::memory_model::low_bits;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Unprotected: consecutive addresses, no skipping, rotation 0.
    Baseline,
    /// Independent rotation per memory, each from that memory's own faults.
    Fam1,
    /// One rotation per word from the union of both memories' faults.
    Fam2,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Fam1 => "fam1",
            Strategy::Fam2 => "fam2",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(Strategy::Baseline),
            "fam1" => Ok(Strategy::Fam1),
            "fam2" => Ok(Strategy::Fam2),
            other => Err(format!("unknown strategy `{other}` (expected baseline, fam1 or fam2)")),
        }
    }
}

/// Faulty physical positions of one word (bit `p` set = cell `p` faulty).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WordFaultMask {
    width: u32,
    bits: u64,
}

impl WordFaultMask {
    pub fn empty(width: u32) -> Self {
        assert!((1..=64).contains(&width));
        Self { width, bits: 0 }
    }

    pub fn from_bits(width: u32, bits: u64) -> Self {
        assert!((1..=64).contains(&width));
        assert_eq!(bits & !low_bits(width), 0, "fault position outside word");
        Self { width, bits }
    }

    pub fn from_positions(width: u32, positions: &[u32]) -> Self {
        let bits = positions.iter().fold(0u64, |acc, &p| acc | (1 << p));
        Self::from_bits(width, bits)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn count(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn is_faulty(&self, position: u32) -> bool {
        self.bits >> position & 1 == 1
    }

    pub fn union(&self, other: &WordFaultMask) -> WordFaultMask {
        assert_eq!(self.width, other.width);
        WordFaultMask {
            width: self.width,
            bits: self.bits | other.bits,
        }
    }

    /// The same cells in the integer layout of physical patterns.
    pub fn layout_bits(&self) -> u64 {
        to_layout(self.bits, self.width)
    }
}

/// Maps a position-indexed mask to the integer layout (cell `p` -> bit `W-1-p`).
pub(crate) fn to_layout(position_bits: u64, width: u32) -> u64 {
    if position_bits == 0 {
        0
    } else {
        position_bits.reverse_bits() >> (64 - width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rotation(u32);

impl Rotation {
    pub const NONE: Rotation = Rotation(0);

    pub fn new(amount: u32, width: u32) -> Option<Rotation> {
        (amount < width).then_some(Rotation(amount))
    }

    pub fn amount(&self) -> u32 {
        self.0
    }
}

pub fn word_fault_budget_ok(mask: &WordFaultMask, max_faults: u32) -> bool {
    mask.count() <= max_faults
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CircularRun {
    pub start: u32,
    pub length: u32,
}

/// Longest run of non-faulty cells, wrapping from the right-most cell to
/// the left-most. Ties go to the smallest start; a fully faulty word
/// yields `(0, 0)`.
pub fn longest_circular_run(mask: &WordFaultMask) -> CircularRun {
    let w = mask.width;
    if mask.bits == 0 {
        return CircularRun { start: 0, length: w };
    }
    let mut best = CircularRun { start: 0, length: 0 };
    for start in 0..w {
        let prev = (start + w - 1) % w;
        // runs only start right after a faulty cell
        if mask.is_faulty(start) || !mask.is_faulty(prev) {
            continue;
        }
        let mut len = 0;
        while len < w && !mask.is_faulty((start + len) % w) {
            len += 1;
        }
        if len > best.length {
            best = CircularRun { start, length: len };
        }
    }
    best
}

/// Significance-weighted fault exposure of rotation `r`: the sum of
/// `2^significance` over the logical bits that land on faulty cells.
pub fn exposure(mask: &WordFaultMask, r: u32) -> u128 {
    let w = mask.width;
    (0..w)
        .filter(|&p| mask.is_faulty(p))
        .map(|p| 1u128 << (w - 1 - (p + w - r % w) % w))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RotationPolicy {
    /// Minimize [`exposure`], smallest rotation on ties.
    #[default]
    MinExposure,
    /// Put the MSB at the start of the longest non-faulty run.
    AlignRun,
}

pub fn select_rotation(mask: &WordFaultMask) -> Rotation {
    select_rotation_with(mask, RotationPolicy::MinExposure)
}

pub fn select_rotation_with(mask: &WordFaultMask, policy: RotationPolicy) -> Rotation {
    if mask.bits == 0 {
        return Rotation::NONE;
    }
    match policy {
        RotationPolicy::MinExposure => {
            let mut best = (exposure(mask, 0), 0);
            for r in 1..mask.width {
                let e = exposure(mask, r);
                if e < best.0 {
                    best = (e, r);
                }
            }
            Rotation(best.1)
        }
        RotationPolicy::AlignRun => Rotation(longest_circular_run(mask).start),
    }
}

/// Lays out a logical word with rotation `r`.
pub fn encode_word(word: u64, r: Rotation, width: u32) -> u64 {
    debug_assert!(word & !low_bits(width) == 0);
    rotate_right(word, r.0, width)
}

/// Inverse of [`encode_word`].
pub fn decode_word(pattern: u64, r: Rotation, width: u32) -> u64 {
    rotate_right(pattern, (width - r.0) % width, width)
}

fn rotate_right(v: u64, r: u32, width: u32) -> u64 {
    if r == 0 {
        return v;
    }
    ((v >> r) | (v << (width - r))) & low_bits(width)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(p: &[u32]) -> WordFaultMask {
        WordFaultMask::from_positions(8, p)
    }

    #[test]
    fn budget_check() {
        assert!(word_fault_budget_ok(&mask(&[]), 2));
        assert!(!word_fault_budget_ok(&mask(&[0, 3, 7]), 2));
        assert!(word_fault_budget_ok(&mask(&[0, 3]), 2));
    }

    #[test]
    fn runs() {
        assert_eq!(longest_circular_run(&mask(&[3])), CircularRun { start: 4, length: 7 });
        assert_eq!(longest_circular_run(&mask(&[])), CircularRun { start: 0, length: 8 });
        assert_eq!(longest_circular_run(&mask(&[0, 4])), CircularRun { start: 1, length: 3 });
        assert_eq!(
            longest_circular_run(&mask(&[0, 1, 2, 3, 4, 5, 6, 7])),
            CircularRun { start: 0, length: 0 }
        );
    }

    #[test]
    fn rotations() {
        assert_eq!(select_rotation(&mask(&[])), Rotation(0));
        let m = mask(&[3]);
        assert_eq!(select_rotation(&m), Rotation(4));
        assert_eq!(exposure(&m, 4), 1);
        let m = mask(&[0, 4]);
        assert_eq!(select_rotation(&m), Rotation(1));
        assert_eq!(exposure(&m, 1), 17);
        assert_eq!(exposure(&m, 5), 17);
    }

    #[test]
    fn align_run_policy_puts_msb_at_run_start() {
        assert_eq!(select_rotation_with(&mask(&[3]), RotationPolicy::AlignRun), Rotation(4));
        assert_eq!(select_rotation_with(&mask(&[0, 4]), RotationPolicy::AlignRun), Rotation(1));
    }

    #[test]
    fn encode_tracers() {
        assert_eq!(encode_word(0b1000_0000, Rotation(0), 8), 0b1000_0000);
        // MSB at physical position 1 = integer bit 6
        assert_eq!(encode_word(0b1000_0000, Rotation(1), 8), 0b0100_0000);
        assert_eq!(encode_word(0b0000_0001, Rotation(1), 8), 0b1000_0000);
        assert_eq!(decode_word(0, Rotation(5), 8), 0);
        assert_eq!(decode_word(0b1010_0110, Rotation(0), 8), 0b1010_0110);
    }

    #[test]
    fn faulty_cell_holds_lsb_after_rotation() {
        let r = select_rotation(&mask(&[3]));
        let pattern = encode_word(1, r, 8);
        assert_eq!(pattern, mask(&[3]).layout_bits());
    }

    #[test]
    fn rotation_bounds() {
        assert_eq!(Rotation::new(7, 8), Some(Rotation(7)));
        assert_eq!(Rotation::new(8, 8), None);
    }

    #[test]
    fn wide_words_roundtrip() {
        let v = 0xdead_beef_0123_4567u64;
        for r in [0, 1, 17, 63] {
            let r = Rotation::new(r, 64).unwrap();
            assert_eq!(decode_word(encode_word(v, r, 64), r, 64), v);
        }
    }
}
