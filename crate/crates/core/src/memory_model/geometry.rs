use std::fmt;

use super::ModelError;

/// Bank / subarray / row / column organization of one DRAM chip.
///
/// Words are addressed linearly as
/// `((bank * subarrays + subarray) * rows + row) * columns + column`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DramGeometry {
    pub banks: u32,
    pub subarrays: u32,
    pub rows: u32,
    pub columns: u32,
    pub word_width: u32,
}

impl DramGeometry {
    pub fn new(
        banks: u32,
        subarrays: u32,
        rows: u32,
        columns: u32,
        word_width: u32,
    ) -> Result<Self, ModelError> {
        for (name, v) in [
            ("banks", banks),
            ("subarrays", subarrays),
            ("rows", rows),
            ("columns", columns),
        ] {
            if v == 0 {
                return Err(ModelError::ZeroDimension(name));
            }
        }
        check_width(word_width)?;
        Ok(Self {
            banks,
            subarrays,
            rows,
            columns,
            word_width,
        })
    }

    /// A 2Gb x8 chip split as 8 banks x 16 subarrays x 2048 rows x 1024 columns.
    pub fn ddr3_2gb() -> Self {
        Self {
            banks: 8,
            subarrays: 16,
            rows: 2048,
            columns: 1024,
            word_width: 8,
        }
    }

    /// Like [`DramGeometry::new`] but also checks the total against a declared chip size.
    pub fn with_capacity(
        banks: u32,
        subarrays: u32,
        rows: u32,
        columns: u32,
        word_width: u32,
        capacity_bits: u64,
    ) -> Result<Self, ModelError> {
        let g = Self::new(banks, subarrays, rows, columns, word_width)?;
        if g.cell_count() != capacity_bits {
            return Err(ModelError::CapacityMismatch {
                declared: capacity_bits,
                actual: g.cell_count(),
            });
        }
        Ok(g)
    }

    pub fn word_count(&self) -> u64 {
        self.banks as u64 * self.subarrays as u64 * self.rows as u64 * self.columns as u64
    }

    pub fn cell_count(&self) -> u64 {
        self.word_count() * self.word_width as u64
    }

    pub fn linear(&self, bank: u32, subarray: u32, row: u32, column: u32) -> u64 {
        ((bank as u64 * self.subarrays as u64 + subarray as u64) * self.rows as u64 + row as u64)
            * self.columns as u64
            + column as u64
    }

    /// Inverse of [`DramGeometry::linear`]: `(bank, subarray, row, column)`.
    pub fn split(&self, addr: u64) -> (u32, u32, u32, u32) {
        let column = addr % self.columns as u64;
        let rest = addr / self.columns as u64;
        let row = rest % self.rows as u64;
        let rest = rest / self.rows as u64;
        let subarray = rest % self.subarrays as u64;
        let bank = rest / self.subarrays as u64;
        (bank as u32, subarray as u32, row as u32, column as u32)
    }
}

/// Banked SRAM weight buffer; each row of a bank holds exactly one word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SramGeometry {
    pub banks: u32,
    pub rows: u32,
    pub word_width: u32,
}

impl SramGeometry {
    pub fn new(banks: u32, rows: u32, word_width: u32) -> Result<Self, ModelError> {
        if banks == 0 {
            return Err(ModelError::ZeroDimension("banks"));
        }
        if rows == 0 {
            return Err(ModelError::ZeroDimension("rows"));
        }
        check_width(word_width)?;
        Ok(Self {
            banks,
            rows,
            word_width,
        })
    }

    /// 32KB of 8-bit words: 16 banks x 2048 rows.
    pub fn buffer_32kb() -> Self {
        Self {
            banks: 16,
            rows: 2048,
            word_width: 8,
        }
    }

    pub fn word_count(&self) -> u64 {
        self.banks as u64 * self.rows as u64
    }

    pub fn cell_count(&self) -> u64 {
        self.word_count() * self.word_width as u64
    }

    pub fn linear(&self, bank: u32, row: u32) -> u64 {
        bank as u64 * self.rows as u64 + row as u64
    }

    pub fn split(&self, addr: u64) -> (u32, u32) {
        ((addr / self.rows as u64) as u32, (addr % self.rows as u64) as u32)
    }
}

fn check_width(w: u32) -> Result<(), ModelError> {
    if w == 0 || w > 64 {
        Err(ModelError::WordWidth(w))
    } else {
        Ok(())
    }
}

/// Either memory of the hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Geometry {
    Dram(DramGeometry),
    Sram(SramGeometry),
}

impl Geometry {
    pub fn word_width(&self) -> u32 {
        match self {
            Geometry::Dram(g) => g.word_width,
            Geometry::Sram(g) => g.word_width,
        }
    }

    pub fn word_count(&self) -> u64 {
        match self {
            Geometry::Dram(g) => g.word_count(),
            Geometry::Sram(g) => g.word_count(),
        }
    }

    pub fn cell_count(&self) -> u64 {
        self.word_count() * self.word_width() as u64
    }

    pub fn bank_count(&self) -> u32 {
        match self {
            Geometry::Dram(g) => g.banks,
            Geometry::Sram(g) => g.banks,
        }
    }

    /// Bank holding the word at a linear address.
    pub fn bank_of(&self, addr: u64) -> u32 {
        match self {
            Geometry::Dram(g) => g.split(addr).0,
            Geometry::Sram(g) => g.split(addr).0,
        }
    }

    pub fn kind(&self) -> MemoryKind {
        match self {
            Geometry::Dram(_) => MemoryKind::Dram,
            Geometry::Sram(_) => MemoryKind::Sram,
        }
    }
}

impl From<DramGeometry> for Geometry {
    fn from(g: DramGeometry) -> Self {
        Geometry::Dram(g)
    }
}

impl From<SramGeometry> for Geometry {
    fn from(g: SramGeometry) -> Self {
        Geometry::Sram(g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MemoryKind {
    Dram,
    Sram,
}

impl fmt::Display for MemoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MemoryKind::Dram => "dram",
            MemoryKind::Sram => "sram",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chip_is_2gb() {
        let g = DramGeometry::ddr3_2gb();
        assert_eq!(g.cell_count(), 2 * 1024 * 1024 * 1024);
        assert!(DramGeometry::with_capacity(8, 16, 2048, 1024, 8, 1 << 31).is_ok());
        assert!(DramGeometry::with_capacity(8, 16, 2048, 512, 8, 1 << 31).is_err());
    }

    #[test]
    fn default_buffer_is_32kb() {
        assert_eq!(SramGeometry::buffer_32kb().cell_count(), 32 * 1024 * 8);
    }

    #[test]
    fn zero_dimensions_rejected() {
        assert!(matches!(
            DramGeometry::new(1, 0, 1, 1, 8),
            Err(ModelError::ZeroDimension("subarrays"))
        ));
        assert!(SramGeometry::new(4, 4, 0).is_err());
        assert!(SramGeometry::new(4, 4, 65).is_err());
    }

    #[test]
    fn linear_split_roundtrip() {
        let g = DramGeometry::new(2, 3, 5, 7, 8).unwrap();
        for addr in 0..g.word_count() {
            let (ba, su, ro, co) = g.split(addr);
            assert_eq!(g.linear(ba, su, ro, co), addr);
        }
        let s = SramGeometry::new(3, 5, 8).unwrap();
        for addr in 0..s.word_count() {
            let (ba, ro) = s.split(addr);
            assert_eq!(s.linear(ba, ro), addr);
        }
    }
}
