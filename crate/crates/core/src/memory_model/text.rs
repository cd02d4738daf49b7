//! Line-based fault map files.
//!
//! ```text
//! geometry dram <banks> <subarrays> <rows> <columns> wordwidth <w>
//! geometry sram <banks> <rows> wordwidth <w>
//! addr <linear-address> bit <position> kind <flip|sa0|sa1>
//! ```

use std::fmt::Write as _;
use std::io::{self, BufRead, Write};

use super::{DramGeometry, FaultKind, FaultMap, Geometry, ModelError, SramGeometry};

pub fn geometry_header(g: &Geometry) -> String {
    match g {
        Geometry::Dram(d) => format!(
            "geometry dram {} {} {} {} wordwidth {}",
            d.banks, d.subarrays, d.rows, d.columns, d.word_width
        ),
        Geometry::Sram(s) => format!("geometry sram {} {} wordwidth {}", s.banks, s.rows, s.word_width),
    }
}

pub fn parse_geometry_header(line: &str) -> Result<Geometry, ModelError> {
    let f: Vec<&str> = line.split_whitespace().collect();
    let bad = || ModelError::Parse {
        line: 1,
        msg: format!("bad geometry header `{line}`"),
    };
    let num = |s: &str| s.parse::<u32>().map_err(|_| bad());
    match f.as_slice() {
        ["geometry", "dram", ba, su, ro, co, "wordwidth", w] => {
            Ok(DramGeometry::new(num(ba)?, num(su)?, num(ro)?, num(co)?, num(w)?)?.into())
        }
        ["geometry", "sram", ba, ro, "wordwidth", w] => Ok(SramGeometry::new(num(ba)?, num(ro)?, num(w)?)?.into()),
        _ => Err(bad()),
    }
}

pub fn write_fault_map<W: Write>(map: &FaultMap, mut out: W) -> io::Result<()> {
    writeln!(out, "{}", geometry_header(&map.geometry()))?;
    let mut buf = String::with_capacity(64 * 1024);
    for (addr, bit, kind) in map.cells() {
        let _ = writeln!(buf, "addr {addr} bit {bit} kind {kind}");
        if buf.len() > 60 * 1024 {
            out.write_all(buf.as_bytes())?;
            buf.clear();
        }
    }
    out.write_all(buf.as_bytes())
}

pub fn read_fault_map<R: BufRead>(input: R) -> Result<FaultMap, ModelError> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or(ModelError::Parse {
            line: 1,
            msg: "empty fault map".into(),
        })?
        .map_err(|e| ModelError::Io("fault map".into(), e))?;
    let mut map = FaultMap::empty(parse_geometry_header(&header)?);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| ModelError::Io("fault map".into(), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let n = i + 2;
        let bad = |msg: &str| ModelError::Parse {
            line: n,
            msg: msg.to_string(),
        };
        let f: Vec<&str> = line.split_whitespace().collect();
        let ["addr", addr, "bit", bit, "kind", kind] = f.as_slice() else {
            return Err(bad("expected `addr <a> bit <b> kind <k>`"));
        };
        let addr = addr.parse().map_err(|_| bad("bad address"))?;
        let bit = bit.parse().map_err(|_| bad("bad bit position"))?;
        let kind: FaultKind = kind.parse()?;
        map.insert(addr, bit, kind).map_err(|e| bad(&e.to_string()))?;
    }
    Ok(map)
}
