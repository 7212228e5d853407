//! Big-endian IDX containers: `0x00000803` for `count x rows x cols` unsigned
//! byte images, `0x00000801` for `count` unsigned byte labels.

use std::path::Path;

use crate::error::{Error, Result};
use crate::learners::Dataset;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

fn format_error(field: &'static str, offset: u64, message: impl Into<String>) -> Error {
    Error::IdxFormat {
        field,
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize, field: &'static str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_error(field, bytes.len() as u64, format!("file ends before the 4-byte {field} at offset {offset}")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = read_u32(bytes, 0, "magic")?;
    if magic != expected {
        return Err(format_error(
            "magic",
            0,
            format!("expected {expected:#010x}, found {magic:#010x}"),
        ));
    }
    Ok(())
}

fn payload<'a>(bytes: &'a [u8], start: usize, len: usize, field: &'static str) -> Result<&'a [u8]> {
    let end = start
        .checked_add(len)
        .ok_or_else(|| format_error(field, start as u64, "declared size overflows"))?;
    if bytes.len() < end {
        return Err(format_error(
            field,
            bytes.len() as u64,
            format!("truncated: {len} bytes declared from offset {start}, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > end {
        return Err(format_error(field, end as u64, format!("{} trailing bytes", bytes.len() - end)));
    }
    Ok(&bytes[start..end])
}

/// Decoded image file: `count` rows of `rows * cols` pixels scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IMAGE_MAGIC)?;
    let count = read_u32(bytes, 4, "count")? as usize;
    let rows = read_u32(bytes, 8, "rows")? as usize;
    let cols = read_u32(bytes, 12, "cols")? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| format_error("count", 4, "image dimensions overflow"))?;
    let data = payload(bytes, 16, len, "pixels")?;
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: data.iter().map(|&p| f64::from(p) / 255.0).collect(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, LABEL_MAGIC)?;
    let count = read_u32(bytes, 4, "count")? as usize;
    Ok(payload(bytes, 8, count, "labels")?.to_vec())
}

/// Pairs an image file with a label file. The class count is
/// `max(label) + 1`, at least 2.
pub fn load_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = parse_images(&std::fs::read(images)?)?;
    let lab = parse_labels(&std::fs::read(labels)?)?;
    if img.count != lab.len() {
        return Err(format_error(
            "count",
            4,
            format!("{} images but {} labels", img.count, lab.len()),
        ));
    }
    let num_classes = lab.iter().copied().max().map_or(2, |m| (usize::from(m) + 1).max(2));
    Dataset::new(
        img.pixels,
        lab.into_iter().map(usize::from).collect(),
        img.rows * img.cols,
        num_classes,
    )
}

/// Encodes an image file; `pixels` holds `count * rows * cols` raw bytes.
pub fn encode_images(rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let per = (rows * cols) as usize;
    let count = pixels.len().checked_div(per).unwrap_or(0);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, count as u32, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}
