mod common;

use memfault_snn::memory_model::{FaultField, FaultKind, FaultMap, FaultSource, FaultSpec, Geometry};

#[test]
fn counts_and_bank_uniformity() {
    common::fault_stats_check().unwrap();
}

#[test]
fn lazy_field_matches_materialized_map() {
    let g: Geometry = common::million_cell_dram().into();
    let spec = FaultSpec::new(2e-3, FaultKind::StuckAt0, 77).unwrap();
    let map = FaultMap::generate(g, &spec);
    let field = FaultField::new(g, &spec);
    for addr in 0..g.word_count() {
        assert_eq!(field.word_faults(addr), map.word_faults(addr));
    }
}

#[test]
fn fault_sets_nest_across_rates() {
    let g: Geometry = common::toy_dram().into();
    let lo = FaultMap::generate(g, &FaultSpec::new(0.1, FaultKind::Flip, 5).unwrap());
    let hi = FaultMap::generate(g, &FaultSpec::new(0.3, FaultKind::Flip, 5).unwrap());
    for (addr, bit, _) in lo.cells() {
        assert!(hi.word_faults(addr).positions() >> bit & 1 == 1);
    }
}
