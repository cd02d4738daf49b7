use std::path::Path;

use super::ModelError;

/// Probability that all `m_bits` cells are fault-free, `(1 - p_cell)^m_bits`.
///
/// Evaluated in double-double arithmetic with a separate binary exponent,
/// so the result is within one ulp of the exact value even when `m_bits`
/// is in the billions or the result is subnormal.
pub fn yield_of(p_cell: f64, m_bits: u64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p_cell), "p_cell = {p_cell}");
    if m_bits == 0 || p_cell == 0.0 {
        return 1.0;
    }
    if p_cell == 1.0 {
        return 0.0;
    }
    // 1 - p is exact as an unevaluated sum.
    let base = Scaled::normalized(two_sum(1.0, -p_cell));
    let mut acc = Scaled::ONE;
    let mut sq = base;
    let mut m = m_bits;
    loop {
        if m & 1 == 1 {
            acc = acc.mul(&sq);
        }
        m >>= 1;
        if m == 0 {
            break;
        }
        sq = sq.mul(&sq);
    }
    acc.to_f64()
}

/// Double-double mantissa in [0.5, 1) times `2^exp`.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    hi: f64,
    lo: f64,
    exp: i64,
}

impl Scaled {
    const ONE: Scaled = Scaled {
        hi: 0.5,
        lo: 0.0,
        exp: 1,
    };

    fn normalized((hi, lo): (f64, f64)) -> Scaled {
        let k = ((hi.to_bits() >> 52) & 0x7ff) as i64 - 1022;
        let s = pow2(-k);
        Scaled {
            hi: hi * s,
            lo: lo * s,
            exp: k,
        }
    }

    fn mul(&self, other: &Scaled) -> Scaled {
        let p = self.hi * other.hi;
        let e = self.hi.mul_add(other.hi, -p) + (self.hi * other.lo + self.lo * other.hi);
        let mut n = Scaled::normalized(fast_two_sum(p, e));
        n.exp += self.exp + other.exp;
        n
    }

    fn to_f64(self) -> f64 {
        let v = self.hi + self.lo;
        if self.exp >= -1021 {
            v * pow2(self.exp)
        } else if self.exp + 1000 >= -1022 {
            (v * pow2(-1000)) * pow2(self.exp + 1000)
        } else {
            0.0
        }
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// `2^e` for `e` in the normal exponent range.
fn pow2(e: i64) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Supply voltage to bit-fault-rate lookup for one memory type.
///
/// Points are kept sorted by decreasing voltage; the rate must not drop
/// as the voltage is lowered.
#[derive(Debug, Clone, PartialEq)]
pub struct VoltageFaultTable {
    points: Vec<(f64, f64)>,
}

impl VoltageFaultTable {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, ModelError> {
        if points.is_empty() {
            return Err(ModelError::Table("table has no points".into()));
        }
        for &(v, r) in &points {
            if !v.is_finite() {
                return Err(ModelError::Table(format!("voltage {v} is not finite")));
            }
            if !(0.0..=1.0).contains(&r) {
                return Err(ModelError::Probability(r));
            }
        }
        points.sort_by(|a, b| b.0.total_cmp(&a.0));
        for w in points.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(ModelError::Table(format!("duplicate voltage {}", w[0].0)));
            }
            if w[1].1 < w[0].1 {
                return Err(ModelError::Table(format!(
                    "rate decreases from {} at {} V to {} at {} V",
                    w[0].1, w[0].0, w[1].1, w[1].0
                )));
            }
        }
        Ok(Self { points })
    }

    /// Parses `<voltage> <rate>` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut it = line.split_whitespace();
            let parse = |s: Option<&str>| -> Result<f64, ModelError> {
                s.and_then(|s| s.parse().ok())
                    .ok_or_else(|| ModelError::Parse { line: i + 1, msg: "expected `<voltage> <rate>`".into() })
            };
            let v = parse(it.next())?;
            let r = parse(it.next())?;
            if it.next().is_some() {
                return Err(ModelError::Parse {
                    line: i + 1,
                    msg: "trailing fields".into(),
                });
            }
            points.push((v, r));
        }
        Self::new(points)
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
        Self::parse(&text)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Linearly interpolated fault rate at `voltage`.
    pub fn rate_at(&self, voltage: f64) -> Result<f64, ModelError> {
        let hi = self.points[0].0;
        let lo = self.points[self.points.len() - 1].0;
        if !(lo..=hi).contains(&voltage) {
            return Err(ModelError::VoltageOutOfRange { voltage, lo, hi });
        }
        for w in self.points.windows(2) {
            let (v0, r0) = w[0];
            let (v1, r1) = w[1];
            if voltage == v0 {
                return Ok(r0);
            }
            if voltage == v1 {
                return Ok(r1);
            }
            if voltage < v0 && voltage > v1 {
                return Ok(r0 + (r1 - r0) * (v0 - voltage) / (v0 - v1));
            }
        }
        Ok(self.points[0].1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_yields() {
        assert_eq!(yield_of(0.0, 12345), 1.0);
        assert_eq!(yield_of(0.5, 1), 0.5);
        assert_eq!(yield_of(0.3, 0), 1.0);
        assert_eq!(yield_of(1.0, 3), 0.0);
        assert_eq!(yield_of(0.5, 1074), f64::from_bits(1));
        assert_eq!(yield_of(0.5, 1075), 0.0);
    }

    #[test]
    fn buffer_yield_near_0_769() {
        let y = yield_of(1e-6, 262_144);
        assert!((y - 0.769_400_121_251_182_7).abs() < 1e-15, "{y}");
    }

    #[test]
    fn multiplicative_in_bits() {
        for &(p, a, b) in &[(1e-3, 1000u64, 2345u64), (0.2, 3, 7), (1e-9, 1 << 30, 1 << 29)] {
            let lhs = yield_of(p, a + b);
            let rhs = yield_of(p, a) * yield_of(p, b);
            let ulps = (lhs.to_bits() as i64 - rhs.to_bits() as i64).abs();
            assert!(ulps <= 4, "p={p} a={a} b={b}: {ulps} ulps");
        }
    }

    fn table() -> VoltageFaultTable {
        VoltageFaultTable::new(vec![(0.8, 1e-4), (1.0, 0.0)]).unwrap()
    }

    #[test]
    fn exact_points_and_midpoint() {
        assert_eq!(table().rate_at(1.0).unwrap(), 0.0);
        assert_eq!(table().rate_at(0.8).unwrap(), 1e-4);
        assert!((table().rate_at(0.9).unwrap() - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn outside_span_is_error() {
        assert!(matches!(table().rate_at(0.7), Err(ModelError::VoltageOutOfRange { .. })));
        assert!(table().rate_at(1.1).is_err());
    }

    #[test]
    fn rejects_non_monotone_tables() {
        assert!(VoltageFaultTable::new(vec![(1.0, 1e-3), (0.8, 1e-4)]).is_err());
        assert!(VoltageFaultTable::new(vec![(1.0, 0.0), (1.0, 1e-4)]).is_err());
        assert!(VoltageFaultTable::new(vec![(1.0, 2.0)]).is_err());
    }

    #[test]
    fn parses_two_column_text() {
        let t = VoltageFaultTable::parse("# approx\n1.0 0\n0.8 1e-4 # low\n").unwrap();
        assert_eq!(t, table());
        assert!(VoltageFaultTable::parse("1.0\n").is_err());
    }
}
