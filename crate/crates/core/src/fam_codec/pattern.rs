use std::collections::HashSet;
use std::fmt;
use std::io::{self, BufRead, Write};

use crate::memory_model::{DramGeometry, FaultSource, MemoryKind, SramGeometry};
use crate::memory_sim::{
    place_in_dram, place_tiles, tile_residency, DramFam, PlacementConfig, PlacementError, Residency, SramFam,
};

use super::{Rotation, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternTag {
    Baseline,
    Fam1Dram,
    Fam1Sram,
    Fam2,
}

impl PatternTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            PatternTag::Baseline => "BASELINE",
            PatternTag::Fam1Dram => "FAM1-DRAM",
            PatternTag::Fam1Sram => "FAM1-SRAM",
            PatternTag::Fam2 => "FAM2",
        }
    }
}

impl fmt::Display for PatternTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PatternTag {
    type Err = PatternError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "BASELINE" => PatternTag::Baseline,
            "FAM1-DRAM" => PatternTag::Fam1Dram,
            "FAM1-SRAM" => PatternTag::Fam1Sram,
            "FAM2" => PatternTag::Fam2,
            other => return Err(PatternError::Parse(0, format!("unknown pattern tag `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Slot {
    pub addr: u64,
    pub rotation: Rotation,
}

/// Physical slot and rotation of a run of consecutive logical words in
/// one memory, starting at `first_word`. Rotations form the side table
/// kept outside the faulty memories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingPattern {
    tag: PatternTag,
    memory: MemoryKind,
    word_width: u32,
    first_word: u64,
    slots: Vec<Slot>,
}

impl MappingPattern {
    pub fn new(tag: PatternTag, memory: MemoryKind, word_width: u32, first_word: u64, slots: Vec<Slot>) -> Self {
        debug_assert!(slots.iter().all(|s| s.rotation.amount() < word_width));
        Self {
            tag,
            memory,
            word_width,
            first_word,
            slots,
        }
    }

    pub fn tag(&self) -> PatternTag {
        self.tag
    }

    pub fn memory(&self) -> MemoryKind {
        self.memory
    }

    pub fn word_width(&self) -> u32 {
        self.word_width
    }

    pub fn first_word(&self) -> u64 {
        self.first_word
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn addresses_unique(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.slots.len());
        self.slots.iter().all(|s| seen.insert(s.addr))
    }

    /// Metadata bits of the rotation side table: `ceil(log2 W)` per word.
    pub fn side_table_bits(&self) -> u64 {
        let per_word = u64::from(32 - (self.word_width - 1).leading_zeros());
        per_word * self.slots.len() as u64
    }
}

/// Everything needed to stream a model through DRAM and the buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchyPlan {
    pub strategy: Strategy,
    pub dram: MappingPattern,
    /// One pattern per buffer tile, in logical word order.
    pub sram_tiles: Vec<MappingPattern>,
}

/// Unprotected layout: consecutive DRAM addresses, every buffer row used,
/// no rotations.
pub fn derive_baseline_plan(
    words: usize,
    dram_geometry: &DramGeometry,
    dram: &dyn FaultSource,
    sram_geometry: &SramGeometry,
    sram: &dyn FaultSource,
    config: &PlacementConfig,
) -> Result<HierarchyPlan, PlacementError> {
    let dram_pattern = place_in_dram(words, dram_geometry, dram, config, DramFam::Baseline)?;
    let residency = tile_residency(words, sram_geometry, sram, config, false)?;
    let sram_tiles = place_tiles(&residency, sram_geometry, sram, config, SramFam::Baseline)?;
    Ok(HierarchyPlan {
        strategy: Strategy::Baseline,
        dram: dram_pattern,
        sram_tiles,
    })
}

/// FAM1: independent patterns from each memory's own fault map.
pub fn derive_fam1_patterns(
    words: usize,
    dram_geometry: &DramGeometry,
    dram: &dyn FaultSource,
    sram_geometry: &SramGeometry,
    sram: &dyn FaultSource,
    config: &PlacementConfig,
) -> Result<HierarchyPlan, PlacementError> {
    let dram_pattern = place_in_dram(words, dram_geometry, dram, config, DramFam::Fam1)?;
    let residency = tile_residency(words, sram_geometry, sram, config, true)?;
    let sram_tiles = place_tiles(&residency, sram_geometry, sram, config, SramFam::Fam1)?;
    Ok(HierarchyPlan {
        strategy: Strategy::Fam1,
        dram: dram_pattern,
        sram_tiles,
    })
}

/// FAM2: one rotation per word from the union of the DRAM slot mask and
/// the mask of the buffer slot given by `residency`. Returns the DRAM-side
/// pattern; the buffer tiles reuse its rotations.
pub fn derive_fam2_pattern(
    words: usize,
    dram_geometry: &DramGeometry,
    dram: &dyn FaultSource,
    sram: &dyn FaultSource,
    residency: &Residency,
    config: &PlacementConfig,
) -> Result<MappingPattern, PlacementError> {
    place_in_dram(words, dram_geometry, dram, config, DramFam::Fam2 { sram, residency })
}

pub fn plan_for(
    strategy: Strategy,
    words: usize,
    dram_geometry: &DramGeometry,
    dram: &dyn FaultSource,
    sram_geometry: &SramGeometry,
    sram: &dyn FaultSource,
    config: &PlacementConfig,
) -> Result<HierarchyPlan, PlacementError> {
    match strategy {
        Strategy::Baseline => derive_baseline_plan(words, dram_geometry, dram, sram_geometry, sram, config),
        Strategy::Fam1 => derive_fam1_patterns(words, dram_geometry, dram, sram_geometry, sram, config),
        Strategy::Fam2 => {
            let residency = tile_residency(words, sram_geometry, sram, config, true)?;
            let shared = derive_fam2_pattern(words, dram_geometry, dram, sram, &residency, config)?;
            let sram_tiles =
                place_tiles(&residency, sram_geometry, sram, config, SramFam::Fam2 { shared: &shared })?;
            Ok(HierarchyPlan {
                strategy: Strategy::Fam2,
                dram: shared,
                sram_tiles,
            })
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PatternError {
    #[error("pattern line {0}: {1}")]
    Parse(usize, String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Writes patterns as consecutive sections:
///
/// ```text
/// pattern <tag> memory <dram|sram> wordwidth <w> first <i> words <n>
/// word <logical-index> addr <physical-address> rot <r>
/// ```
pub fn write_patterns<W: Write>(patterns: &[&MappingPattern], mut out: W) -> io::Result<()> {
    for p in patterns {
        writeln!(
            out,
            "pattern {} memory {} wordwidth {} first {} words {}",
            p.tag,
            p.memory,
            p.word_width,
            p.first_word,
            p.slots.len()
        )?;
        for (k, s) in p.slots.iter().enumerate() {
            writeln!(out, "word {} addr {} rot {}", p.first_word + k as u64, s.addr, s.rotation.amount())?;
        }
    }
    Ok(())
}

pub fn read_patterns<R: BufRead>(input: R) -> Result<Vec<MappingPattern>, PatternError> {
    let mut out: Vec<MappingPattern> = Vec::new();
    let mut expected = 0usize;
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        let bad = |m: &str| PatternError::Parse(n, m.to_string());
        let f: Vec<&str> = line.split_whitespace().collect();
        match f.as_slice() {
            [] => continue,
            ["pattern", tag, "memory", mem, "wordwidth", w, "first", first, "words", count] => {
                if out.last().is_some_and(|p| p.slots.len() != expected) {
                    return Err(bad("previous section is short"));
                }
                let memory = match *mem {
                    "dram" => MemoryKind::Dram,
                    "sram" => MemoryKind::Sram,
                    _ => return Err(bad("memory must be dram or sram")),
                };
                let width: u32 = w.parse().map_err(|_| bad("bad word width"))?;
                if !(1..=64).contains(&width) {
                    return Err(bad("word width outside 1..=64"));
                }
                expected = count.parse().map_err(|_| bad("bad word count"))?;
                out.push(MappingPattern {
                    tag: tag.parse().map_err(|_| bad("unknown tag"))?,
                    memory,
                    word_width: width,
                    first_word: first.parse().map_err(|_| bad("bad first word"))?,
                    slots: Vec::with_capacity(expected),
                });
            }
            ["word", idx, "addr", addr, "rot", rot] => {
                let p = out.last_mut().ok_or_else(|| bad("word line before header"))?;
                let idx: u64 = idx.parse().map_err(|_| bad("bad word index"))?;
                if idx != p.first_word + p.slots.len() as u64 {
                    return Err(bad("word indices must be consecutive"));
                }
                let r: u32 = rot.parse().map_err(|_| bad("bad rotation"))?;
                p.slots.push(Slot {
                    addr: addr.parse().map_err(|_| bad("bad address"))?,
                    rotation: Rotation::new(r, p.word_width).ok_or_else(|| bad("rotation >= word width"))?,
                });
            }
            _ => return Err(bad("unrecognized line")),
        }
    }
    if out.last().is_some_and(|p| p.slots.len() != expected) {
        return Err(PatternError::Parse(0, "last section is short".into()));
    }
    Ok(out)
}
