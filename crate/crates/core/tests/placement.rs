mod common;

use memfault_snn::fam_codec::{plan_for, Strategy};
use memfault_snn::memory_model::FaultFree;
use memfault_snn::memory_sim::PlacementConfig;

#[test]
fn toy_layouts_match_hand_simulation() {
    common::placement_toy_check().unwrap();
}

#[test]
fn fault_free_plans_have_no_rotations() {
    let (dg, sg) = (common::toy_dram(), common::toy_sram());
    let cfg = PlacementConfig::new(2, 2, 8).unwrap();
    for s in [Strategy::Baseline, Strategy::Fam1, Strategy::Fam2] {
        let plan = plan_for(s, 30, &dg, &FaultFree(dg.into()), &sg, &FaultFree(sg.into()), &cfg).unwrap();
        assert!(plan.dram.slots().iter().all(|x| x.rotation.amount() == 0));
        assert!(plan.sram_tiles.iter().flat_map(|t| t.slots()).all(|x| x.rotation.amount() == 0));
        assert_eq!(plan.sram_tiles.len(), 2);
    }
}

#[test]
fn fam2_matches_fam1_when_buffer_is_clean() {
    let (dg, sg) = (common::toy_dram(), common::toy_sram());
    let cfg = PlacementConfig::new(2, 2, 8).unwrap();
    let dram = common::toy_dram_faults();
    let clean = FaultFree(sg.into());
    let a = plan_for(Strategy::Fam1, 20, &dg, &dram, &sg, &clean, &cfg).unwrap();
    let b = plan_for(Strategy::Fam2, 20, &dg, &dram, &sg, &clean, &cfg).unwrap();
    assert_eq!(a.dram.slots(), b.dram.slots());
}
