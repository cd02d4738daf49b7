//! Weight placement in DRAM and the SRAM buffer, fault-affected read-back
//! and memory access accounting.

mod hierarchy;
mod placement;

use std::fmt;
use std::io::{self, Write};

pub use hierarchy::{
    apply_faults, encode_store, read_back, read_back_with, simulate_hierarchy, transfer_table, FlipMode,
    WordTransfer,
};
pub use placement::{
    dram_scan_order, place_in_dram, place_in_sram, place_tiles, sram_scan_order, tile_residency, DramFam,
    Residency, SramFam,
};

use crate::memory_model::{DramGeometry, MemoryKind, SramGeometry};
use crate::store::QuantizedWeightStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DramAddress {
    pub bank: u32,
    pub subarray: u32,
    pub row: u32,
    pub column: u32,
}

impl DramAddress {
    pub fn from_linear(g: &DramGeometry, addr: u64) -> Self {
        let (bank, subarray, row, column) = g.split(addr);
        Self {
            bank,
            subarray,
            row,
            column,
        }
    }

    pub fn linear(&self, g: &DramGeometry) -> u64 {
        g.linear(self.bank, self.subarray, self.row, self.column)
    }
}

impl fmt::Display for DramAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}.{}", self.bank, self.subarray, self.row, self.column)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SramAddress {
    pub bank: u32,
    pub row: u32,
}

impl SramAddress {
    pub fn from_linear(g: &SramGeometry, addr: u64) -> Self {
        let (bank, row) = g.split(addr);
        Self { bank, row }
    }
}

impl fmt::Display for SramAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.bank, self.row)
    }
}

/// Per-word fault budgets used as the slot guards of both scans.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlacementConfig {
    pub dram_max_faults_per_word: u32,
    pub sram_max_faults_per_word: u32,
    pub word_width: u32,
}

impl PlacementConfig {
    pub fn new(dram_budget: u32, sram_budget: u32, word_width: u32) -> Result<Self, PlacementError> {
        for (name, b) in [("dram", dram_budget), ("sram", sram_budget)] {
            if b > word_width {
                return Err(PlacementError::Inconsistent(format!(
                    "{name} fault budget {b} exceeds word width {word_width}"
                )));
            }
        }
        Ok(Self {
            dram_max_faults_per_word: dram_budget,
            sram_max_faults_per_word: sram_budget,
            word_width,
        })
    }
}

impl Default for PlacementConfig {
    /// At most 2 faulty bits per 8-bit word in either memory.
    fn default() -> Self {
        Self {
            dram_max_faults_per_word: 2,
            sram_max_faults_per_word: 2,
            word_width: 8,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum PlacementError {
    #[error("{memory} capacity exhausted: placed {placed} words, {unplaceable} unplaceable")]
    CapacityExhausted {
        memory: MemoryKind,
        placed: usize,
        unplaceable: usize,
    },
    #[error("buffer tile needs {needed} usable rows but only {usable} pass the fault budget")]
    TileOverflow { usable: usize, needed: usize },
    #[error("inconsistent placement: {0}")]
    Inconsistent(String),
}

impl PlacementError {
    pub fn unplaceable(&self) -> usize {
        match self {
            PlacementError::CapacityExhausted { unplaceable, .. } => *unplaceable,
            PlacementError::TileOverflow { usable, needed } => needed - usable,
            PlacementError::Inconsistent(_) => 0,
        }
    }
}

/// Memory access counts used as the energy proxy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessLedger {
    pub dram_row_activations: u64,
    pub dram_row_buffer_hits: u64,
    pub dram_reads: u64,
    pub sram_reads: u64,
    pub sram_writes: u64,
}

impl AccessLedger {
    pub const CSV_HEADER: &'static str =
        "dram_row_activations,dram_row_buffer_hits,dram_reads,sram_reads,sram_writes";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.dram_row_activations, self.dram_row_buffer_hits, self.dram_reads, self.sram_reads, self.sram_writes
        )
    }
}

/// Writes `word,value` rows for an effective weight store.
pub fn write_store_csv<W: Write>(store: &QuantizedWeightStore, mut out: W) -> io::Result<()> {
    writeln!(out, "word,value")?;
    for (i, w) in store.words().iter().enumerate() {
        writeln!(out, "{i},{w}")?;
    }
    Ok(())
}
