//! Memory geometries, seeded bit-level fault maps and reliability helpers.

mod faults;
mod geometry;
mod reliability;
pub mod text;

pub use faults::{FaultField, FaultFree, FaultKind, FaultMap, FaultSource, FaultSpec, WordFaults};
pub(crate) use faults::low_bits;
pub use geometry::{DramGeometry, Geometry, MemoryKind, SramGeometry};
pub use reliability::{yield_of, VoltageFaultTable};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("dimension `{0}` must be at least 1")]
    ZeroDimension(&'static str),
    #[error("word width {0} is outside 1..=64")]
    WordWidth(u32),
    #[error("geometry holds {actual} bits but the chip is declared as {declared} bits")]
    CapacityMismatch { declared: u64, actual: u64 },
    #[error("probability {0} is outside [0, 1]")]
    Probability(f64),
    #[error("unknown fault kind `{0}`")]
    UnknownFaultKind(String),
    #[error("cell (addr {addr}, bit {position}) lies outside the geometry")]
    OutOfBounds { addr: u64, position: u32 },
    #[error("cell (addr {addr}, bit {position}) listed twice")]
    DuplicateCell { addr: u64, position: u32 },
    #[error("fault maps cover different geometries")]
    GeometryMismatch,
    #[error("voltage {voltage} V outside table span [{lo}, {hi}] V")]
    VoltageOutOfRange { voltage: f64, lo: f64, hi: f64 },
    #[error("voltage table: {0}")]
    Table(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}: {1}")]
    Io(String, #[source] std::io::Error),
}
