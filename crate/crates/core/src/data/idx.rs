use super::Dataset;
use crate::densemat::Matrix;
use crate::error::{Error, Result};
use crate::metrics::ClassIndex;
use flate2::read::GzDecoder;
use std::io::Read;
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image after image, row-major.
    pub pixels: Vec<u8>,
}

/// Reads a file, transparently inflating gzip input.
pub fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::Idx(format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("truncated header at byte {at}")))
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Idx(format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let need = count * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::Idx(format!("truncated image data: {} of {need} bytes", body.len())));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body[..need].to_vec(),
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::Idx(format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}")));
    }
    let count = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() < count {
        return Err(Error::Idx(format!("truncated label data: {} of {count} bytes", body.len())));
    }
    Ok(body[..count].to_vec())
}

pub fn write_idx_images(img: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + img.pixels.len());
    for v in [IMAGES_MAGIC, img.count as u32, img.rows as u32, img.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&img.pixels);
    out
}

pub fn write_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an image/label pair. Keeps the first `subset` items of each
/// requested class in file order (all of them when `subset` is `None`) and
/// regroups columns by class; class `classes[i]` becomes label `i`.
pub fn load_idx(images_path: &Path, labels_path: &Path, subset: Option<usize>, classes: &[usize]) -> Result<Dataset> {
    let images = parse_idx_images(&read_maybe_gz(images_path)?)?;
    let labels = parse_idx_labels(&read_maybe_gz(labels_path)?)?;
    if images.count != labels.len() {
        return Err(Error::Idx(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    if classes.is_empty() {
        return Err(Error::Config("no classes requested".into()));
    }
    let dim = images.rows * images.cols;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, &lab) in labels.iter().enumerate() {
        if let Some(c) = classes.iter().position(|&k| k == lab as usize) {
            if subset.map_or(true, |s| per_class[c].len() < s) {
                per_class[c].push(i);
            }
        }
    }
    let idx = ClassIndex::new(per_class.iter().map(Vec::len).collect())?;
    let order: Vec<usize> = per_class.into_iter().flatten().collect();
    let x = Matrix::from_fn(dim, order.len(), |p, j| images.pixels[order[j] * dim + p] as f64 / 255.0);
    Dataset::new(x, idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_errors() {
        assert!(parse_idx_images(&[0, 0, 8, 1, 0, 0, 0, 0]).is_err());
        let mut lab = write_idx_labels(&[1, 2, 3]);
        assert_eq!(parse_idx_labels(&lab).unwrap(), vec![1, 2, 3]);
        lab.pop();
        assert!(parse_idx_labels(&lab).is_err());
    }
}
