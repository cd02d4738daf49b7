//! Bit-level fault simulation of a DRAM + SRAM weight-memory hierarchy,
//! fault-aware circular-shift mapping of quantized weights, and a small
//! rate-coded spiking network that consumes the read-back weights.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod fam_codec;
pub mod fatm;
pub mod memory_model;
pub mod memory_sim;
pub mod pipeline;
pub mod resilience;
pub mod seeds;
pub mod snn;
pub mod store;

pub use store::QuantizedWeightStore;
