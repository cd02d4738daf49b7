use std::fs;
use std::ops::Range;
use std::path::Path;

use super::SnnError;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Grey-scale images with class labels, pixels stored as bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: usize,
    cols: usize,
    pixels: Vec<u8>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self, SnnError> {
        if rows * cols == 0 || pixels.len() != rows * cols * labels.len() {
            return Err(SnnError::Data(format!(
                "{} pixel bytes do not form {} images of {rows}x{cols}",
                pixels.len(),
                labels.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    /// Reads an IDX image file and its label file.
    pub fn load(images: &Path, labels: &Path) -> Result<Self, SnnError> {
        let (rows, cols, pixels) = load_idx_images(images)?;
        let labels = load_idx_labels(labels)?;
        Self::new(rows, cols, pixels, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_size(&self) -> usize {
        self.rows * self.cols
    }

    pub fn label(&self, k: usize) -> u8 {
        self.labels[k]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Pixels of image `k` scaled to `[0, 1]`.
    pub fn pixels(&self, k: usize) -> Vec<f32> {
        let n = self.input_size();
        self.pixels[k * n..(k + 1) * n].iter().map(|&p| f32::from(p) / 255.0).collect()
    }

    pub fn subset(&self, range: Range<usize>) -> Result<Self, SnnError> {
        if range.end > self.len() || range.start > range.end {
            return Err(SnnError::Data(format!(
                "subset {}..{} outside {} samples",
                range.start,
                range.end,
                self.len()
            )));
        }
        let n = self.input_size();
        Self::new(
            self.rows,
            self.cols,
            self.pixels[range.start * n..range.end * n].to_vec(),
            self.labels[range].to_vec(),
        )
    }
}

fn read(path: &Path) -> Result<Vec<u8>, SnnError> {
    fs::read(path).map_err(|e| SnnError::Io(path.display().to_string(), e))
}

fn header(bytes: &[u8], fields: usize, path: &Path) -> Result<Vec<u32>, SnnError> {
    if bytes.len() < 4 * fields {
        return Err(SnnError::Data(format!("{}: truncated IDX header", path.display())));
    }
    Ok(bytes[..4 * fields]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// Returns `(rows, cols, pixels)` of an IDX3 unsigned-byte file.
pub fn load_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>), SnnError> {
    let bytes = read(path)?;
    let h = header(&bytes, 4, path)?;
    if h[0] != IMAGE_MAGIC {
        return Err(SnnError::Data(format!("{}: bad image magic {:#010x}", path.display(), h[0])));
    }
    let (count, rows, cols) = (h[1] as usize, h[2] as usize, h[3] as usize);
    let body = &bytes[16..];
    if body.len() != count * rows * cols {
        return Err(SnnError::Data(format!(
            "{}: expected {} pixel bytes, found {}",
            path.display(),
            count * rows * cols,
            body.len()
        )));
    }
    Ok((rows, cols, body.to_vec()))
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, SnnError> {
    let bytes = read(path)?;
    let h = header(&bytes, 2, path)?;
    if h[0] != LABEL_MAGIC {
        return Err(SnnError::Data(format!("{}: bad label magic {:#010x}", path.display(), h[0])));
    }
    let body = &bytes[8..];
    if body.len() != h[1] as usize {
        return Err(SnnError::Data(format!(
            "{}: expected {} labels, found {}",
            path.display(),
            h[1],
            body.len()
        )));
    }
    Ok(body.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_tiny_idx_pair() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2];
        bytes.extend([0, 255, 51, 0]);
        fs::write(&img, bytes).unwrap();
        fs::write(&lab, [0, 0, 8, 1, 0, 0, 0, 2, 7, 3]).unwrap();
        let d = Dataset::load(&img, &lab).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.pixels(0), vec![0.0, 1.0]);
        assert_eq!(d.pixels(1), vec![0.2, 0.0]);
        assert_eq!(d.labels(), &[7, 3]);
        assert_eq!(d.subset(1..2).unwrap().label(0), 3);
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let lab = dir.path().join("lab");
        fs::write(&lab, [0, 0, 8, 3, 0, 0, 0, 0]).unwrap();
        assert!(matches!(load_idx_labels(&lab), Err(SnnError::Data(_))));
    }
}
