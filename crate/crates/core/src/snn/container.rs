//! Binary model container, little endian:
//!
//! ```text
//! "SNNW" version:u32 inputs:u32 neurons:u32 weight_bits:u32 w_max:f64
//! params:u32 { name_len:u8 name value:f64 }*
//! { tag:[u8;4] len:u64 payload }*   WGHT, THTA, LABL
//! ```
//!
//! Weights are stored as quantized words, one byte each up to 8 bits and
//! two bytes above. Label 255 marks an unassigned neuron.

use std::io::{Read, Write};
use std::path::Path;

use super::{dequantize, quantize_weights, SnnError, SnnModel, SnnProfile};
use crate::QuantizedWeightStore;

const MAGIC: &[u8; 4] = b"SNNW";
const VERSION: u32 = 1;
const UNASSIGNED: u8 = u8::MAX;

fn io_err(e: std::io::Error) -> SnnError {
    SnnError::Io("model container".into(), e)
}

pub fn write_model<W: Write>(model: &SnnModel, mut out: W) -> Result<(), SnnError> {
    model.validate()?;
    let store = quantize_weights(model);
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    for v in [VERSION, model.input_size as u32, model.neurons as u32, store.width()] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&model.profile.w_max.to_le_bytes());
    let params = model.profile.named();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, value) in params {
        buf.push(name.len() as u8);
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&value.to_le_bytes());
    }

    let weights: Vec<u8> = if store.width() <= 8 {
        store.words().iter().map(|&w| w as u8).collect()
    } else {
        store.words().iter().flat_map(|&w| (w as u16).to_le_bytes()).collect()
    };
    section(&mut buf, b"WGHT", &weights);
    let theta: Vec<u8> = model.theta.iter().flat_map(|t| t.to_le_bytes()).collect();
    section(&mut buf, b"THTA", &theta);
    let labels: Vec<u8> = model.labels.iter().map(|l| l.unwrap_or(UNASSIGNED)).collect();
    section(&mut buf, b"LABL", &labels);
    out.write_all(&buf).map_err(io_err)
}

fn section(buf: &mut Vec<u8>, tag: &[u8; 4], payload: &[u8]) {
    buf.extend_from_slice(tag);
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    buf.extend_from_slice(payload);
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], SnnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| SnnError::Format(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, SnnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, SnnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, SnnError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_model<R: Read>(mut input: R) -> Result<SnnModel, SnnError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(SnnError::Format("not a model container".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(SnnError::Format(format!("unsupported version {version}")));
    }
    let inputs = c.u32()? as usize;
    let neurons = c.u32()? as usize;
    let bits = c.u32()?;
    let w_max = c.f64()?;

    let mut profile = SnnProfile::default();
    for _ in 0..c.u32()? {
        let len = c.take(1)?[0] as usize;
        let name = std::str::from_utf8(c.take(len)?)
            .map_err(|_| SnnError::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let value = c.f64()?;
        profile.set(&name, value).map_err(|e| SnnError::Format(e.to_string()))?;
    }
    if profile.weight_bits != bits || profile.w_max != w_max {
        return Err(SnnError::Format("header disagrees with parameter block".into()));
    }

    let mut weights = None;
    let mut theta = None;
    let mut labels = None;
    while c.pos < bytes.len() {
        let tag: [u8; 4] = c.take(4)?.try_into().unwrap();
        let len = usize::try_from(c.u64()?).map_err(|_| SnnError::Format("section too large".into()))?;
        let body = c.take(len)?;
        match &tag {
            b"WGHT" => {
                let words: Vec<u64> = if bits <= 8 {
                    body.iter().map(|&b| u64::from(b)).collect()
                } else {
                    body.chunks_exact(2).map(|p| u64::from(u16::from_le_bytes([p[0], p[1]]))).collect()
                };
                if words.iter().any(|&w| w > crate::memory_model::low_bits(bits)) {
                    return Err(SnnError::Format(format!("weight word wider than {bits} bits")));
                }
                weights = Some(dequantize(&QuantizedWeightStore::new(bits, w_max as f32, words)));
            }
            b"THTA" => theta = Some(body.chunks_exact(4).map(|p| f32::from_le_bytes(p.try_into().unwrap())).collect()),
            b"LABL" => labels = Some(body.iter().map(|&l| (l != UNASSIGNED).then_some(l)).collect()),
            _ => {}
        }
    }
    let missing = |s: &str| SnnError::Format(format!("missing {s} section"));
    let model = SnnModel {
        input_size: inputs,
        neurons,
        weights: weights.ok_or_else(|| missing("WGHT"))?,
        theta: theta.ok_or_else(|| missing("THTA"))?,
        labels: labels.ok_or_else(|| missing("LABL"))?,
        profile,
    };
    model.validate().map_err(|e| SnnError::Format(e.to_string()))?;
    Ok(model)
}

impl SnnModel {
    pub fn save(&self, path: &Path) -> Result<(), SnnError> {
        let mut buf = Vec::new();
        write_model(self, &mut buf)?;
        std::fs::write(path, buf).map_err(|e| SnnError::Io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self, SnnError> {
        let f = std::fs::File::open(path).map_err(|e| SnnError::Io(path.display().to_string(), e))?;
        read_model(std::io::BufReader::new(f))
    }
}
