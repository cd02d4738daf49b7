use crate::fam_codec::{select_rotation, MappingPattern, PatternTag, Rotation, Slot, WordFaultMask};
use crate::memory_model::{DramGeometry, FaultSource, MemoryKind, SramGeometry, WordFaults};

use super::{PlacementConfig, PlacementError};

/// Slot acceptance and rotation rule for the DRAM scan.
#[derive(Clone, Copy)]
pub enum DramFam<'a> {
    /// Consecutive addresses of one bank, every slot used, rotation 0.
    Baseline,
    /// Guard and rotation from the DRAM mask alone.
    Fam1,
    /// Guard and rotation from the union of the DRAM mask and the mask of
    /// the buffer slot the word occupies while resident.
    Fam2 {
        sram: &'a dyn FaultSource,
        residency: &'a Residency,
    },
}

/// Slot acceptance and rotation rule for the buffer scan.
#[derive(Clone, Copy)]
pub enum SramFam<'a> {
    Baseline,
    Fam1,
    /// Rotations copied from the shared DRAM-side pattern.
    Fam2 { shared: &'a MappingPattern },
}

/// DRAM visiting order: row, then subarray, then bank, then column.
pub fn dram_scan_order(g: &DramGeometry) -> impl Iterator<Item = u64> + '_ {
    (0..g.rows).flat_map(move |ro| {
        (0..g.subarrays).flat_map(move |su| {
            (0..g.banks).flat_map(move |ba| (0..g.columns).map(move |co| g.linear(ba, su, ro, co)))
        })
    })
}

/// Buffer visiting order: row, then bank.
pub fn sram_scan_order(g: &SramGeometry) -> impl Iterator<Item = u64> + '_ {
    (0..g.rows).flat_map(move |ro| (0..g.banks).map(move |ba| g.linear(ba, ro)))
}

fn mask_of(wf: &WordFaults, width: u32) -> WordFaultMask {
    WordFaultMask::from_bits(width, wf.positions())
}

/// A word slot is usable when its faults fit the budget; a fully faulty
/// slot is never usable.
fn passes(mask: &WordFaultMask, budget: u32) -> bool {
    mask.count() <= budget && mask.count() < mask.width()
}

/// Places `word_count` logical words into DRAM.
pub fn place_in_dram(
    word_count: usize,
    geometry: &DramGeometry,
    faults: &dyn FaultSource,
    config: &PlacementConfig,
    fam: DramFam<'_>,
) -> Result<MappingPattern, PlacementError> {
    let width = config.word_width;
    let budget = config.dram_max_faults_per_word;
    let mut slots = Vec::with_capacity(word_count);
    let tag = match fam {
        DramFam::Baseline => {
            let total = geometry.word_count();
            slots.extend((0..total.min(word_count as u64)).map(|addr| Slot {
                addr,
                rotation: Rotation::NONE,
            }));
            PatternTag::Baseline
        }
        DramFam::Fam1 => {
            for addr in dram_scan_order(geometry) {
                if slots.len() == word_count {
                    break;
                }
                let mask = mask_of(&faults.word_faults(addr), width);
                if passes(&mask, budget) {
                    slots.push(Slot {
                        addr,
                        rotation: select_rotation(&mask),
                    });
                }
            }
            PatternTag::Fam1Dram
        }
        DramFam::Fam2 { sram, residency } => {
            for addr in dram_scan_order(geometry) {
                if slots.len() == word_count {
                    break;
                }
                let word = slots.len();
                let own = mask_of(&faults.word_faults(addr), width);
                let buffered = mask_of(&sram.word_faults(residency.slot(word)), width);
                let merged = own.union(&buffered);
                if passes(&merged, budget) {
                    slots.push(Slot {
                        addr,
                        rotation: select_rotation(&merged),
                    });
                }
            }
            PatternTag::Fam2
        }
    };
    if slots.len() < word_count {
        return Err(PlacementError::CapacityExhausted {
            memory: MemoryKind::Dram,
            placed: slots.len(),
            unplaceable: word_count - slots.len(),
        });
    }
    Ok(MappingPattern::new(tag, MemoryKind::Dram, width, 0, slots))
}

fn usable_sram_slots(
    geometry: &SramGeometry,
    faults: &dyn FaultSource,
    config: &PlacementConfig,
    skip_faulty: bool,
    limit: usize,
) -> Vec<(u64, WordFaultMask)> {
    let width = config.word_width;
    sram_scan_order(geometry)
        .map(|addr| (addr, mask_of(&faults.word_faults(addr), width)))
        .filter(|(_, m)| !skip_faulty || passes(m, config.sram_max_faults_per_word))
        .take(limit)
        .collect()
}

/// Places one tile of words, starting at logical word `first_word`, into
/// the buffer.
pub fn place_in_sram(
    first_word: u64,
    tile_words: usize,
    geometry: &SramGeometry,
    faults: &dyn FaultSource,
    config: &PlacementConfig,
    fam: SramFam<'_>,
) -> Result<MappingPattern, PlacementError> {
    let skip = !matches!(fam, SramFam::Baseline);
    let usable = usable_sram_slots(geometry, faults, config, skip, tile_words);
    if usable.len() < tile_words {
        return Err(PlacementError::TileOverflow {
            usable: usable.len(),
            needed: tile_words,
        });
    }
    let (tag, slots) = match fam {
        SramFam::Baseline => (
            PatternTag::Baseline,
            usable
                .iter()
                .map(|&(addr, _)| Slot {
                    addr,
                    rotation: Rotation::NONE,
                })
                .collect(),
        ),
        SramFam::Fam1 => (
            PatternTag::Fam1Sram,
            usable
                .iter()
                .map(|(addr, m)| Slot {
                    addr: *addr,
                    rotation: select_rotation(m),
                })
                .collect(),
        ),
        SramFam::Fam2 { shared } => (
            PatternTag::Fam2,
            usable
                .iter()
                .enumerate()
                .map(|(k, &(addr, _))| Slot {
                    addr,
                    rotation: shared.slots()[first_word as usize + k].rotation,
                })
                .collect(),
        ),
    };
    Ok(MappingPattern::new(tag, MemoryKind::Sram, config.word_width, first_word, slots))
}

/// Which buffer slot each logical word occupies while its tile is resident.
///
/// Weights stream through the buffer in consecutive tiles of `tile_len`
/// words; word `i` uses the `(i mod tile_len)`-th usable slot in buffer
/// scan order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Residency {
    slots: Vec<u64>,
    word_count: usize,
}

impl Residency {
    pub fn slot(&self, word: usize) -> u64 {
        self.slots[word % self.slots.len()]
    }

    pub fn tile_len(&self) -> usize {
        self.slots.len()
    }

    pub fn tile_count(&self) -> usize {
        self.word_count.div_ceil(self.slots.len())
    }

    pub fn word_count(&self) -> usize {
        self.word_count
    }

    /// Logical word range of tile `t`.
    pub fn tile_range(&self, t: usize) -> std::ops::Range<usize> {
        let start = t * self.tile_len();
        start..(start + self.tile_len()).min(self.word_count)
    }
}

pub fn tile_residency(
    word_count: usize,
    geometry: &SramGeometry,
    faults: &dyn FaultSource,
    config: &PlacementConfig,
    skip_faulty: bool,
) -> Result<Residency, PlacementError> {
    let slots: Vec<u64> = usable_sram_slots(geometry, faults, config, skip_faulty, word_count.max(1))
        .into_iter()
        .map(|(a, _)| a)
        .collect();
    if slots.is_empty() {
        return Err(PlacementError::TileOverflow {
            usable: 0,
            needed: word_count.min(geometry.word_count() as usize),
        });
    }
    Ok(Residency { slots, word_count })
}

/// Places every tile of the residency into the buffer.
pub fn place_tiles(
    residency: &Residency,
    geometry: &SramGeometry,
    faults: &dyn FaultSource,
    config: &PlacementConfig,
    fam: SramFam<'_>,
) -> Result<Vec<MappingPattern>, PlacementError> {
    (0..residency.tile_count())
        .map(|t| {
            let range = residency.tile_range(t);
            place_in_sram(range.start as u64, range.len(), geometry, faults, config, fam)
        })
        .collect()
}
