//! Oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use num_bigint::BigUint;

use memfault_snn::fam_codec::{
    decode_word, encode_word, plan_for, select_rotation, MappingPattern, Rotation, Strategy, WordFaultMask,
};
use memfault_snn::memory_model::{DramGeometry, FaultKind, FaultMap, FaultSpec, Geometry, SramGeometry};
use memfault_snn::memory_sim::{
    place_in_dram, place_in_sram, place_tiles, tile_residency, DramFam, PlacementConfig, PlacementError, SramFam,
};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

/// Exposure of rotation `r` measured by encoding one-hot words: bit `s`
/// of the logical word counts `2^s` when its encoded cell is faulty.
pub fn brute_exposure(mask: &WordFaultMask, r: u32) -> u128 {
    let w = mask.width();
    let rot = Rotation::new(r, w).unwrap();
    (0..w)
        .filter(|&s| encode_word(1 << s, rot, w) & mask.layout_bits() != 0)
        .map(|s| 1u128 << s)
        .sum()
}

/// Smallest rotation with minimal brute-force exposure.
pub fn brute_best_rotation(mask: &WordFaultMask) -> u32 {
    let w = mask.width();
    let mut best = 0;
    for r in 1..w {
        if brute_exposure(mask, r) < brute_exposure(mask, best) {
            best = r;
        }
    }
    best
}

/// `(1 - p)^m` from exact big-integer arithmetic, rounded once to f64.
/// Assumes the result is a normal double.
pub fn yield_oracle(p: f64, m: u32) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    let bits = p.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let mant = (bits & ((1 << 52) - 1)) | (1 << 52);
    // p = mant * 2^(exp - 1075), so 1 - p = (2^e - mant) / 2^e
    let e = (1075 - exp) as u64;
    let one = BigUint::from(1u32) << e;
    let base = one - BigUint::from(mant);
    let num = base.pow(m);
    let len = num.bits();
    let (top, shift) = if len > 64 { (&num >> (len - 64), len as i64 - 64) } else { (num.clone(), 0) };
    let q = top.to_u64_digits().first().copied().unwrap_or(0);
    let k = shift - (e * u64::from(m)) as i64;
    let half = (k / 2) as i32;
    q as f64 * 2f64.powi(half) * 2f64.powi(k as i32 - half)
}

pub fn ulp_distance(a: f64, b: f64) -> u64 {
    assert!(a >= 0.0 && b >= 0.0);
    (a.to_bits() as i64 - b.to_bits() as i64).unsigned_abs()
}

/// 2 banks x 2 subarrays x 2 rows x 4 columns.
pub fn toy_dram() -> DramGeometry {
    DramGeometry::new(2, 2, 2, 4, 8).unwrap()
}

/// 4 banks x 4 rows.
pub fn toy_sram() -> SramGeometry {
    SramGeometry::new(4, 4, 8).unwrap()
}

/// Toy DRAM visiting order worked out by hand: row-major over
/// (row, subarray, bank) blocks of 4 columns, linear address
/// `((bank * 2 + subarray) * 2 + row) * 4 + column`.
pub const TOY_DRAM_ORDER: [u64; 32] = [
    0, 1, 2, 3, 16, 17, 18, 19, 8, 9, 10, 11, 24, 25, 26, 27, 4, 5, 6, 7, 20, 21, 22, 23, 12, 13, 14, 15, 28, 29,
    30, 31,
];

/// Toy buffer visiting order, linear address `bank * 4 + row`.
pub const TOY_SRAM_ORDER: [u64; 16] = [0, 4, 8, 12, 1, 5, 9, 13, 2, 6, 10, 14, 3, 7, 11, 15];

/// Upper 1% point of the chi-square distribution with 7 degrees of freedom.
pub const CHI2_7DOF_99: f64 = 18.475;

pub fn chi_square(observed: &[u64]) -> f64 {
    let total: u64 = observed.iter().sum();
    let expected = total as f64 / observed.len() as f64;
    observed.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn std_error(x: &[f64]) -> f64 {
    let m = mean(x);
    let var = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0);
    (var / x.len() as f64).sqrt()
}

/// Std error of the mean of paired differences `a[k] - b[k]`.
pub fn paired_std_error(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    std_error(&d)
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn layout(p: &MappingPattern) -> Vec<(u64, u32)> {
    p.slots().iter().map(|s| (s.addr, s.rotation.amount())).collect()
}

fn with_rot(addrs: &[u64], rots: &[(u64, u32)]) -> Vec<(u64, u32)> {
    addrs
        .iter()
        .map(|&a| (a, rots.iter().find(|r| r.0 == a).map_or(0, |r| r.1)))
        .collect()
}

/// Toy DRAM faults: cells 0,1 of word 2 (rotation 2 clears them off the
/// top bits), three faults in word 17 (over budget), word 9 fully faulty.
pub fn toy_dram_faults() -> FaultMap {
    let mut m = FaultMap::empty(toy_dram().into());
    for (addr, cells) in [(2u64, vec![0u32, 1]), (17, vec![1, 3, 6]), (9, (0..8).collect())] {
        for c in cells {
            m.insert(addr, c, FaultKind::StuckAt1).unwrap();
        }
    }
    m
}

/// Toy buffer faults: three in slot 4 (over budget), slot 9 fully faulty,
/// single faults in cell 0 of slot 8, cell 4 of slot 12 and cell 7 of
/// slot 13.
pub fn toy_sram_faults() -> FaultMap {
    let mut m = FaultMap::empty(toy_sram().into());
    for (addr, cells) in [(4u64, vec![0u32, 3, 5]), (9, (0..8).collect()), (8, vec![0]), (12, vec![4]), (13, vec![7])] {
        for c in cells {
            m.insert(addr, c, FaultKind::StuckAt0).unwrap();
        }
    }
    m
}

/// Placement on the toy geometries against hand-worked layouts.
pub fn placement_toy_check() -> Result<(), String> {
    let (dg, sg) = (toy_dram(), toy_sram());
    let cfg = PlacementConfig::new(2, 2, 8).unwrap();
    let (dram, sram) = (toy_dram_faults(), toy_sram_faults());
    let free = memfault_snn::memory_model::FaultFree(Geometry::Dram(dg));
    let e = |x| format!("{x:?}");

    let p = place_in_dram(32, &dg, &free, &cfg, DramFam::Fam1).map_err(e)?;
    let got: Vec<u64> = p.slots().iter().map(|s| s.addr).collect();
    ensure(got == TOY_DRAM_ORDER, || format!("fault-free DRAM order {got:?}"))?;

    let p = place_in_dram(12, &dg, &dram, &cfg, DramFam::Fam1).map_err(e)?;
    let want = with_rot(&[0, 1, 2, 3, 16, 18, 19, 8, 10, 11, 24, 25], &[(2, 2)]);
    ensure(layout(&p) == want, || format!("FAM1 DRAM {:?}", layout(&p)))?;

    let p = place_in_dram(12, &dg, &dram, &cfg, DramFam::Baseline).map_err(e)?;
    let want: Vec<(u64, u32)> = (0..12).map(|a| (a, 0)).collect();
    ensure(layout(&p) == want, || format!("baseline DRAM {:?}", layout(&p)))?;

    let loose = PlacementConfig::new(8, 8, 8).unwrap();
    let p = place_in_dram(12, &dg, &dram, &loose, DramFam::Fam1).map_err(e)?;
    let r17 = brute_best_rotation(&WordFaultMask::from_positions(8, &[1, 3, 6]));
    let want = with_rot(&[0, 1, 2, 3, 16, 17, 18, 19, 8, 10, 11, 24], &[(2, 2), (17, r17)]);
    ensure(layout(&p) == want, || format!("FAM1 DRAM, budget 8 {:?}", layout(&p)))?;

    match place_in_dram(31, &dg, &dram, &cfg, DramFam::Fam1) {
        Err(PlacementError::CapacityExhausted { placed: 30, unplaceable: 1, .. }) => {}
        other => return Err(format!("over-capacity DRAM: {other:?}")),
    }

    let p = place_in_sram(0, 6, &sg, &sram, &cfg, SramFam::Fam1).map_err(e)?;
    let want = with_rot(&[0, 8, 12, 1, 5, 13], &[(8, 1), (12, 5)]);
    ensure(layout(&p) == want, || format!("FAM1 buffer {:?}", layout(&p)))?;

    let p = place_in_sram(0, 6, &sg, &sram, &cfg, SramFam::Baseline).map_err(e)?;
    let want: Vec<(u64, u32)> = [0, 4, 8, 12, 1, 5].iter().map(|&a| (a, 0)).collect();
    ensure(layout(&p) == want, || format!("baseline buffer {:?}", layout(&p)))?;

    match place_in_sram(0, 15, &sg, &sram, &cfg, SramFam::Fam1) {
        Err(PlacementError::TileOverflow { usable: 14, needed: 15 }) => {}
        other => return Err(format!("buffer overflow: {other:?}")),
    }

    let res = tile_residency(20, &sg, &sram, &cfg, true).map_err(e)?;
    let tiles = place_tiles(&res, &sg, &sram, &cfg, SramFam::Fam1).map_err(e)?;
    let addrs: Vec<Vec<u64>> = tiles.iter().map(|t| t.slots().iter().map(|s| s.addr).collect()).collect();
    let want = vec![vec![0, 8, 12, 1, 5, 13, 2, 6, 10, 14, 3, 7, 11, 15], vec![0, 8, 12, 1, 5, 13]];
    ensure(addrs == want, || format!("buffer tiles {addrs:?}"))?;

    // word 1 sits in slot 8 (cell 0), word 2 in slot 12 (cell 4): the
    // union with DRAM word 2's cells 0,1 is over budget, so word 2 shifts
    let plan = plan_for(Strategy::Fam2, 12, &dg, &dram, &sg, &sram, &cfg).map_err(e)?;
    let want = with_rot(&[0, 1, 3, 16, 18, 19, 8, 10, 11, 24, 25, 26], &[(1, 1), (3, 5)]);
    ensure(layout(&plan.dram) == want, || format!("FAM2 DRAM {:?}", layout(&plan.dram)))?;
    let want = with_rot(&[0, 8, 12, 1, 5, 13, 2, 6, 10, 14, 3, 7], &[(8, 1), (12, 5)]);
    ensure(layout(&plan.sram_tiles[0]) == want, || format!("FAM2 buffer {:?}", layout(&plan.sram_tiles[0])))?;
    Ok(())
}

/// Exhaustive codec check at W = 8.
pub fn codec_exhaustive_check() -> Result<(), String> {
    for bits in 0..256u64 {
        let mask = WordFaultMask::from_bits(8, bits);
        let r = select_rotation(&mask).amount();
        let best = brute_best_rotation(&mask);
        ensure(r == best, || format!("mask {bits:08b}: rotation {r}, brute force {best}"))?;
    }
    for r in 0..8 {
        let rot = Rotation::new(r, 8).unwrap();
        for v in 0..256u64 {
            let back = decode_word(encode_word(v, rot, 8), rot, 8);
            ensure(back == v, || format!("round trip r {r} v {v} -> {back}"))?;
        }
    }
    Ok(())
}

/// 100 random `(p, M)` pairs against the exact oracle; returns the worst
/// ulp distance.
pub fn yield_check() -> Result<u64, String> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0;
    for _ in 0..100 {
        let p = 10f64.powf(rng.gen_range(-6.0..-1.0));
        let m = rng.gen_range(1..=5000u32);
        let d = ulp_distance(memfault_snn::memory_model::yield_of(p, u64::from(m)), yield_oracle(p, m));
        worst = worst.max(d);
        ensure(d <= 4, || format!("p {p:e} m {m}: {d} ulp"))?;
    }
    Ok(worst)
}

/// 8 banks x 5 subarrays x 25 rows x 125 columns of bytes: 10^6 cells.
pub fn million_cell_dram() -> DramGeometry {
    DramGeometry::new(8, 5, 25, 125, 8).unwrap()
}

/// Fault counts over 30 seeds at rate 1e-3 on 10^6 cells: the total
/// against the binomial 3-sigma band, bank counts against uniformity.
pub fn fault_stats_check() -> Result<String, String> {
    let g: Geometry = million_cell_dram().into();
    let (n, p, seeds) = (g.cell_count() as f64, 1e-3, 30u64);
    let mut total = 0u64;
    let mut banks = vec![0u64; g.bank_count() as usize];
    let mut outside = 0;
    for s in 0..seeds {
        let map = FaultMap::generate(g, &FaultSpec::new(p, FaultKind::Flip, s).unwrap());
        let c = map.fault_count();
        total += c;
        if (c as f64 - n * p).abs() > 3.0 * (n * p * (1.0 - p)).sqrt() {
            outside += 1;
        }
        for (addr, _, _) in map.cells() {
            banks[g.bank_of(addr) as usize] += 1;
        }
    }
    let big_n = n * seeds as f64;
    let sigma = (big_n * p * (1.0 - p)).sqrt();
    let dev = (total as f64 - big_n * p) / sigma;
    let chi2 = chi_square(&banks);
    let detail = format!("total {total} ({dev:+.2} sigma), {outside}/30 seeds outside 3 sigma, bank chi2 {chi2:.2}");
    ensure(dev.abs() <= 3.0 && chi2 < CHI2_7DOF_99, || detail.clone())?;
    Ok(detail)
}

/// Small but complete configuration for driving the binary.
pub fn small_config(dir: &Path) -> PathBuf {
    let data = data_dir();
    let text = format!(
        r#"seed = 5
strategy = "fam1"

[dram]
banks = 2
subarrays = 2
rows = 64
columns = 256
word_width = 8
fault_rate = 1e-3

[sram]
banks = 4
rows = 256
word_width = 8
fault_rate = 1e-3

[snn]
neurons = 16
epochs = 1

[data]
train_images = "{d}/train-images-idx3-ubyte"
train_labels = "{d}/train-labels-idx1-ubyte"
test_images = "{d}/test-images-idx3-ubyte"
test_labels = "{d}/test-labels-idx1-ubyte"
train_size = 200
validation_size = 60
test_size = 100

[sweep]
dram_rates = [0.0, 1e-3]
sram_rates = [0.0, 1e-2]
seeds = 2

[eval]
seeds = 2

[fatm]
stages = 2
boundary_dram = 1e-3
boundary_sram = 1e-3
"#,
        d = data.display()
    );
    let path = dir.join("small.toml");
    std::fs::write(&path, text).unwrap();
    path
}

pub fn memfault(config: &Path, out: &Path, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_memfault"));
    cmd.arg("--config").arg(config).arg("--out").arg(out).args(args);
    cmd.output().unwrap()
}
