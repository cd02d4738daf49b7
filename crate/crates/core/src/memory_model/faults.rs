use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Geometry, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FaultKind {
    Flip,
    StuckAt0,
    StuckAt1,
}

impl FaultKind {
    pub fn tag(&self) -> &'static str {
        match self {
            FaultKind::Flip => "flip",
            FaultKind::StuckAt0 => "sa0",
            FaultKind::StuckAt1 => "sa1",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for FaultKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "flip" => Ok(FaultKind::Flip),
            "sa0" | "stuck_at_0" => Ok(FaultKind::StuckAt0),
            "sa1" | "stuck_at_1" => Ok(FaultKind::StuckAt1),
            other => Err(ModelError::UnknownFaultKind(other.to_string())),
        }
    }
}

/// Per-cell fault probability, fault kind and the seed of the sampling stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaultSpec {
    rate: f64,
    kind: FaultKind,
    seed: u64,
}

impl FaultSpec {
    pub fn new(rate: f64, kind: FaultKind, seed: u64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(ModelError::Probability(rate));
        }
        Ok(Self { rate, kind, seed })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn kind(&self) -> FaultKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Faulty cells of one word, as masks over physical bit positions
/// (bit `p` of a mask set means position `p` is faulty).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct WordFaults {
    pub flip: u64,
    pub stuck0: u64,
    pub stuck1: u64,
}

impl WordFaults {
    pub fn uniform(kind: FaultKind, positions: u64) -> Self {
        let mut w = WordFaults::default();
        match kind {
            FaultKind::Flip => w.flip = positions,
            FaultKind::StuckAt0 => w.stuck0 = positions,
            FaultKind::StuckAt1 => w.stuck1 = positions,
        }
        w
    }

    pub fn positions(&self) -> u64 {
        self.flip | self.stuck0 | self.stuck1
    }

    pub fn count(&self) -> u32 {
        self.positions().count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.positions() == 0
    }

    pub fn kind_at(&self, position: u32) -> Option<FaultKind> {
        let bit = 1u64 << position;
        if self.flip & bit != 0 {
            Some(FaultKind::Flip)
        } else if self.stuck0 & bit != 0 {
            Some(FaultKind::StuckAt0)
        } else if self.stuck1 & bit != 0 {
            Some(FaultKind::StuckAt1)
        } else {
            None
        }
    }

    /// Adds the positions of `other` that are not already faulty here.
    pub fn merge(&mut self, other: &WordFaults) {
        let free = !self.positions();
        self.flip |= other.flip & free;
        self.stuck0 |= other.stuck0 & free & !other.flip;
        self.stuck1 |= other.stuck1 & free & !other.flip & !other.stuck0;
    }
}

/// Anything that can answer "which cells of this word are faulty".
pub trait FaultSource: Sync {
    fn geometry(&self) -> Geometry;
    fn word_faults(&self, addr: u64) -> WordFaults;
}

#[derive(Debug, Clone, Copy)]
enum Threshold {
    Never,
    Always,
    Below(u64),
}

impl Threshold {
    fn for_rate(rate: f64) -> Self {
        if rate <= 0.0 {
            Threshold::Never
        } else if rate >= 1.0 {
            Threshold::Always
        } else {
            // saturating float->int cast
            Threshold::Below((rate * 18_446_744_073_709_551_616.0) as u64)
        }
    }

    #[inline]
    fn hit(&self, draw: u64) -> bool {
        match *self {
            Threshold::Never => false,
            Threshold::Always => true,
            Threshold::Below(t) => draw < t,
        }
    }
}

/// Counter-based cell sampler: cell `i` is decided by the `i`-th 64-bit
/// output of a ChaCha8 stream keyed by the seed, so any address range can
/// be evaluated independently and in any order.
#[derive(Clone)]
struct CellStream {
    base: ChaCha8Rng,
    threshold: Threshold,
    width: u32,
}

impl CellStream {
    fn new(spec: &FaultSpec, width: u32) -> Self {
        Self {
            base: ChaCha8Rng::seed_from_u64(spec.seed),
            threshold: Threshold::for_rate(spec.rate),
            width,
        }
    }

    fn seek(&self, word: u64) -> ChaCha8Rng {
        let mut rng = self.base.clone();
        // two 32-bit stream words per cell
        rng.set_word_pos(2 * word as u128 * self.width as u128);
        rng
    }

    #[inline]
    fn next_mask(&self, rng: &mut ChaCha8Rng) -> u64 {
        let mut mask = 0u64;
        for p in 0..self.width {
            if self.threshold.hit(rng.next_u64()) {
                mask |= 1 << p;
            }
        }
        mask
    }

    fn word_mask(&self, word: u64) -> u64 {
        match self.threshold {
            Threshold::Never => 0,
            Threshold::Always => low_bits(self.width),
            Threshold::Below(_) => self.next_mask(&mut self.seek(word)),
        }
    }
}

pub(crate) fn low_bits(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// Materialized set of faulty cells over one memory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaultMap {
    geometry: Geometry,
    words: BTreeMap<u64, WordFaults>,
}

const GENERATE_CHUNK: u64 = 1 << 16;

impl FaultMap {
    pub fn empty(geometry: Geometry) -> Self {
        Self {
            geometry,
            words: BTreeMap::new(),
        }
    }

    /// Samples every cell independently with probability `spec.rate()`.
    pub fn generate(geometry: Geometry, spec: &FaultSpec) -> Self {
        let stream = CellStream::new(spec, geometry.word_width());
        let kind = spec.kind;
        let total = geometry.word_count();
        if matches!(stream.threshold, Threshold::Never) {
            return Self::empty(geometry);
        }
        let chunks = total.div_ceil(GENERATE_CHUNK);
        let parts: Vec<Vec<(u64, WordFaults)>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let start = c * GENERATE_CHUNK;
                let end = (start + GENERATE_CHUNK).min(total);
                let mut rng = stream.seek(start);
                let mut out = Vec::new();
                for addr in start..end {
                    let mask = match stream.threshold {
                        Threshold::Always => low_bits(stream.width),
                        _ => stream.next_mask(&mut rng),
                    };
                    if mask != 0 {
                        out.push((addr, WordFaults::uniform(kind, mask)));
                    }
                }
                out
            })
            .collect();
        Self {
            geometry,
            words: parts.into_iter().flatten().collect(),
        }
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn insert(&mut self, addr: u64, position: u32, kind: FaultKind) -> Result<(), ModelError> {
        if addr >= self.geometry.word_count() || position >= self.geometry.word_width() {
            return Err(ModelError::OutOfBounds { addr, position });
        }
        let entry = self.words.entry(addr).or_default();
        if entry.positions() & (1 << position) != 0 {
            return Err(ModelError::DuplicateCell { addr, position });
        }
        entry.merge(&WordFaults::uniform(kind, 1 << position));
        Ok(())
    }

    /// Union of two maps over the same geometry. Where both maps mark the
    /// same cell, the kind from `self` is kept.
    pub fn union(&self, other: &FaultMap) -> Result<FaultMap, ModelError> {
        if self.geometry != other.geometry {
            return Err(ModelError::GeometryMismatch);
        }
        let mut out = self.clone();
        for (addr, wf) in &other.words {
            out.words.entry(*addr).or_default().merge(wf);
        }
        Ok(out)
    }

    pub fn fault_count(&self) -> u64 {
        self.words.values().map(|w| w.count() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Words with at least one faulty cell, in address order.
    pub fn faulty_words(&self) -> impl Iterator<Item = (u64, &WordFaults)> {
        self.words.iter().map(|(a, w)| (*a, w))
    }

    /// All faulty cells as `(address, position, kind)`, sorted.
    pub fn cells(&self) -> impl Iterator<Item = (u64, u32, FaultKind)> + '_ {
        let width = self.geometry.word_width();
        self.words.iter().flat_map(move |(addr, wf)| {
            (0..width).filter_map(move |p| wf.kind_at(p).map(|k| (*addr, p, k)))
        })
    }
}

impl FaultSource for FaultMap {
    fn geometry(&self) -> Geometry {
        self.geometry
    }

    fn word_faults(&self, addr: u64) -> WordFaults {
        self.words.get(&addr).copied().unwrap_or_default()
    }
}

/// Lazily evaluated fault map. Answers lookups with exactly the cells
/// [`FaultMap::generate`] would produce for the same inputs, without
/// materializing the whole memory.
#[derive(Clone)]
pub struct FaultField {
    geometry: Geometry,
    kind: FaultKind,
    stream: CellStream,
}

impl FaultField {
    pub fn new(geometry: Geometry, spec: &FaultSpec) -> Self {
        Self {
            geometry,
            kind: spec.kind,
            stream: CellStream::new(spec, geometry.word_width()),
        }
    }

    pub fn materialize(&self, spec: &FaultSpec) -> FaultMap {
        FaultMap::generate(self.geometry, spec)
    }
}

impl fmt::Debug for FaultField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FaultField")
            .field("geometry", &self.geometry)
            .field("kind", &self.kind)
            .finish()
    }
}

impl FaultSource for FaultField {
    fn geometry(&self) -> Geometry {
        self.geometry
    }

    fn word_faults(&self, addr: u64) -> WordFaults {
        WordFaults::uniform(self.kind, self.stream.word_mask(addr))
    }
}

/// A memory with no faulty cells.
#[derive(Debug, Clone, Copy)]
pub struct FaultFree(pub Geometry);

impl FaultSource for FaultFree {
    fn geometry(&self) -> Geometry {
        self.0
    }

    fn word_faults(&self, _addr: u64) -> WordFaults {
        WordFaults::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory_model::{DramGeometry, SramGeometry};

    fn small() -> Geometry {
        DramGeometry::new(2, 2, 4, 16, 8).unwrap().into()
    }

    #[test]
    fn zero_rate_is_empty() {
        let spec = FaultSpec::new(0.0, FaultKind::Flip, 1).unwrap();
        assert!(FaultMap::generate(small(), &spec).is_empty());
    }

    #[test]
    fn unit_rate_marks_every_cell() {
        let spec = FaultSpec::new(1.0, FaultKind::StuckAt1, 1).unwrap();
        let m = FaultMap::generate(small(), &spec);
        assert_eq!(m.fault_count(), small().cell_count());
        assert!(m.cells().all(|(_, _, k)| k == FaultKind::StuckAt1));
    }

    #[test]
    fn rate_out_of_range_rejected() {
        assert!(FaultSpec::new(1.5, FaultKind::Flip, 0).is_err());
        assert!(FaultSpec::new(-0.1, FaultKind::Flip, 0).is_err());
        assert!(FaultSpec::new(f64::NAN, FaultKind::Flip, 0).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = FaultSpec::new(0.05, FaultKind::Flip, 42).unwrap();
        assert_eq!(FaultMap::generate(small(), &spec), FaultMap::generate(small(), &spec));
        let other = FaultSpec::new(0.05, FaultKind::Flip, 43).unwrap();
        assert_ne!(FaultMap::generate(small(), &spec), FaultMap::generate(small(), &other));
    }

    #[test]
    fn lazy_field_matches_materialized_map() {
        let g: Geometry = SramGeometry::new(4, 300, 8).unwrap().into();
        let spec = FaultSpec::new(0.03, FaultKind::StuckAt0, 9).unwrap();
        let map = FaultMap::generate(g, &spec);
        let field = FaultField::new(g, &spec);
        for addr in (0..g.word_count()).rev() {
            assert_eq!(map.word_faults(addr), field.word_faults(addr));
        }
    }

    #[test]
    fn higher_rate_nests_lower_rate_faults() {
        let lo = FaultMap::generate(small(), &FaultSpec::new(0.01, FaultKind::Flip, 5).unwrap());
        let hi = FaultMap::generate(small(), &FaultSpec::new(0.1, FaultKind::Flip, 5).unwrap());
        for (addr, wf) in lo.faulty_words() {
            let h = hi.word_faults(addr).positions();
            assert_eq!(wf.positions() & !h, 0);
        }
    }

    #[test]
    fn insert_checks_bounds_and_duplicates() {
        let mut m = FaultMap::empty(small());
        m.insert(3, 7, FaultKind::Flip).unwrap();
        assert!(matches!(m.insert(3, 7, FaultKind::StuckAt0), Err(ModelError::DuplicateCell { .. })));
        assert!(m.insert(3, 8, FaultKind::Flip).is_err());
        assert!(m.insert(small().word_count(), 0, FaultKind::Flip).is_err());
    }

    #[test]
    fn union_keeps_first_kind_on_overlap() {
        let mut a = FaultMap::empty(small());
        a.insert(1, 2, FaultKind::StuckAt0).unwrap();
        let mut b = FaultMap::empty(small());
        b.insert(1, 2, FaultKind::StuckAt1).unwrap();
        b.insert(1, 3, FaultKind::StuckAt1).unwrap();
        let u = a.union(&b).unwrap();
        assert_eq!(u.fault_count(), 2);
        assert_eq!(u.word_faults(1).kind_at(2), Some(FaultKind::StuckAt0));
        assert_eq!(u.word_faults(1).kind_at(3), Some(FaultKind::StuckAt1));
    }
}
