mod common;

use memfault_snn::memory_model::{yield_of, VoltageFaultTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn yield_matches_exact_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let p = 10f64.powf(rng.gen_range(-6.0..-1.0));
        let m = rng.gen_range(1..=5000u32);
        let got = yield_of(p, u64::from(m));
        let want = common::yield_oracle(p, m);
        assert!(common::ulp_distance(got, want) <= 4, "p {p:e} m {m}: {got:e} vs {want:e}");
    }
}

#[test]
fn yield_is_multiplicative() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let p = 10f64.powf(rng.gen_range(-9.0..-2.0));
        let (a, b) = (rng.gen_range(1..1u64 << 32), rng.gen_range(1..1u64 << 32));
        let lhs = yield_of(p, a + b);
        let rhs = yield_of(p, a) * yield_of(p, b);
        if lhs > 1e-300 {
            assert!(common::ulp_distance(lhs, rhs) <= 4, "p {p:e} {a} {b}");
        }
    }
}

#[test]
fn shipped_voltage_tables_parse() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/voltage");
    for name in ["dram_approx.txt", "sram_approx.txt"] {
        let t = VoltageFaultTable::load(&dir.join(name)).unwrap();
        let (high_v, low_v) = (t.points()[0].0, t.points().last().unwrap().0);
        assert!(t.rate_at(low_v).unwrap() >= t.rate_at(high_v).unwrap());
    }
}
