use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fam_codec::{decode_word, encode_word, to_layout, HierarchyPlan, MappingPattern, Rotation};
use crate::memory_model::{FaultSource, Geometry, WordFaults};
use crate::store::QuantizedWeightStore;

use super::{AccessLedger, PlacementError};

/// Physical patterns of `store` as laid out by `pattern`, indexed like the
/// pattern's slots.
pub fn encode_store(store: &QuantizedWeightStore, pattern: &MappingPattern) -> Vec<u64> {
    let first = pattern.first_word() as usize;
    pattern
        .slots()
        .iter()
        .enumerate()
        .map(|(k, s)| encode_word(store.words()[first + k], s.rotation, store.width()))
        .collect()
}

/// The value a read returns from a word whose cells carry `faults`:
/// flipped cells invert the stored bit, stuck-at cells force it.
pub fn apply_faults(pattern: u64, faults: &WordFaults, width: u32) -> u64 {
    let flip = to_layout(faults.flip, width);
    let clear = to_layout(faults.stuck0, width);
    let set = to_layout(faults.stuck1, width);
    ((pattern ^ flip) & !clear) | set
}

/// How flip-faulty cells behave on each read.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum FlipMode {
    /// Every flip-faulty cell inverts its bit on every read.
    #[default]
    Persistent,
    /// Each flip-faulty cell inverts its bit with `probability` per read,
    /// drawn from a stream keyed by `seed`.
    Intermittent { probability: f64, seed: u64 },
}

/// Reads back every word of `pattern` from a faulty memory and decodes it.
pub fn read_back(pattern: &MappingPattern, faults: &dyn FaultSource, stored: &[u64]) -> Vec<u64> {
    read_back_with(pattern, faults, stored, FlipMode::Persistent)
}

pub fn read_back_with(
    pattern: &MappingPattern,
    faults: &dyn FaultSource,
    stored: &[u64],
    mode: FlipMode,
) -> Vec<u64> {
    let width = pattern.word_width();
    let mut rng = match mode {
        FlipMode::Intermittent { seed, .. } => Some(ChaCha8Rng::seed_from_u64(seed)),
        FlipMode::Persistent => None,
    };
    pattern
        .slots()
        .iter()
        .zip(stored)
        .map(|(slot, &phys)| {
            let mut wf = faults.word_faults(slot.addr);
            if let (FlipMode::Intermittent { probability, .. }, Some(rng)) = (mode, rng.as_mut()) {
                let mut active = 0;
                for p in 0..width {
                    if wf.flip >> p & 1 == 1 && rng.gen_bool(probability) {
                        active |= 1 << p;
                    }
                }
                wf.flip = active;
            }
            decode_word(apply_faults(phys, &wf, width), slot.rotation, width)
        })
        .collect()
}

/// Faults of one word seen in logical bit space, after decoding.
///
/// Every bit is either passed through, inverted, forced to 0 or forced
/// to 1; `flip`, `clear` and `set` are disjoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WordTransfer {
    pub flip: u64,
    pub clear: u64,
    pub set: u64,
}

impl WordTransfer {
    /// Transfer of one memory stage that stores the word with rotation `r`.
    pub fn through(faults: &WordFaults, r: Rotation, width: u32) -> Self {
        let logical = |m: u64| decode_word(to_layout(m, width), r, width);
        WordTransfer {
            flip: logical(faults.flip),
            clear: logical(faults.stuck0),
            set: logical(faults.stuck1),
        }
    }

    pub fn is_identity(&self) -> bool {
        self.flip | self.clear | self.set == 0
    }

    pub fn apply(&self, v: u64) -> u64 {
        ((v ^ self.flip) & !self.clear) | self.set
    }

    /// `next` applied after `self`.
    pub fn then(&self, next: &WordTransfer) -> WordTransfer {
        let forced = next.clear | next.set;
        let open = !forced;
        let inv = next.flip & open;
        let keep = open & !next.flip;
        WordTransfer {
            flip: (self.flip ^ next.flip) & open & !(self.clear | self.set),
            clear: next.clear | (self.clear & keep) | (self.set & inv),
            set: next.set | (self.set & keep) | (self.clear & inv),
        }
    }
}

fn sram_slot_of(plan: &HierarchyPlan, word: usize) -> &crate::fam_codec::Slot {
    let tile_len = plan.sram_tiles[0].slots().len();
    let tile = &plan.sram_tiles[word / tile_len];
    &tile.slots()[word - tile.first_word() as usize]
}

fn check_plan(store: &QuantizedWeightStore, plan: &HierarchyPlan) -> Result<(), PlacementError> {
    let buffered: usize = plan.sram_tiles.iter().map(|t| t.slots().len()).sum();
    if plan.dram.slots().len() != store.len() || buffered != store.len() {
        return Err(PlacementError::Inconsistent(format!(
            "plan covers {} DRAM / {} buffer words, store has {}",
            plan.dram.slots().len(),
            buffered,
            store.len()
        )));
    }
    Ok(())
}

/// Streams the store through DRAM and the weight buffer.
///
/// Each word is written to its DRAM slot, read back through the DRAM
/// faults and decoded, re-encoded for its buffer slot, and read back
/// through the buffer faults. Under FAM2 both stages share one rotation.
pub fn simulate_hierarchy(
    store: &QuantizedWeightStore,
    plan: &HierarchyPlan,
    dram: &dyn FaultSource,
    sram: &dyn FaultSource,
) -> Result<(QuantizedWeightStore, AccessLedger), PlacementError> {
    check_plan(store, plan)?;
    let width = store.width();
    let stored = encode_store(store, &plan.dram);
    let from_dram = read_back(&plan.dram, dram, &stored);
    let mut effective = Vec::with_capacity(store.len());
    for tile in &plan.sram_tiles {
        let first = tile.first_word() as usize;
        let staged: Vec<u64> = tile
            .slots()
            .iter()
            .enumerate()
            .map(|(k, s)| encode_word(from_dram[first + k], s.rotation, width))
            .collect();
        effective.extend(read_back(tile, sram, &staged));
    }
    let ledger = AccessLedger::for_plan(plan, dram.geometry());
    Ok((store.with_words(effective), ledger))
}

/// The same composition as [`simulate_hierarchy`], folded into one
/// [`WordTransfer`] per faulty word. Words absent from the result pass
/// through unchanged.
pub fn transfer_table(
    plan: &HierarchyPlan,
    dram: &dyn FaultSource,
    sram: &dyn FaultSource,
) -> Vec<(usize, WordTransfer)> {
    let width = plan.dram.word_width();
    plan.dram
        .slots()
        .iter()
        .enumerate()
        .filter_map(|(i, d)| {
            let s = sram_slot_of(plan, i);
            let t = WordTransfer::through(&dram.word_faults(d.addr), d.rotation, width)
                .then(&WordTransfer::through(&sram.word_faults(s.addr), s.rotation, width));
            (!t.is_identity()).then_some((i, t))
        })
        .collect()
}

impl AccessLedger {
    /// One DRAM read and one buffer write + read per word, in logical
    /// order; a row activation whenever the `(bank, subarray, row)` of
    /// consecutive DRAM reads changes.
    pub fn for_plan(plan: &HierarchyPlan, dram: Geometry) -> Self {
        let mut ledger = AccessLedger::default();
        let Geometry::Dram(g) = dram else {
            return ledger;
        };
        let mut open: Option<(u32, u32, u32)> = None;
        for slot in plan.dram.slots() {
            let (ba, su, ro, _) = g.split(slot.addr);
            ledger.dram_reads += 1;
            if open == Some((ba, su, ro)) {
                ledger.dram_row_buffer_hits += 1;
            } else {
                ledger.dram_row_activations += 1;
                open = Some((ba, su, ro));
            }
        }
        let words = plan.dram.slots().len() as u64;
        ledger.sram_writes = words;
        ledger.sram_reads = words;
        ledger
    }
}
