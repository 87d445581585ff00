//! Reader and writer for the IDX format used by MNIST-style datasets.
//!
//! Files may be gzip-compressed; compression is detected from the content,
//! not the file name.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::DataError;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

/// Images as rows of pixels scaled to `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
}

impl IdxImages {
    pub fn features(&self) -> usize {
        self.rows * self.cols
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| DataError::Io(path.display().to_string(), e.to_string()))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| DataError::Malformed(format!("{}: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn header(bytes: &[u8], magic: u32, dims: usize) -> Result<Vec<usize>, DataError> {
    let need = 4 + 4 * dims;
    if bytes.len() < need {
        return Err(DataError::Malformed(format!(
            "header needs {need} bytes, file has {}",
            bytes.len()
        )));
    }
    let got = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    if got != magic {
        return Err(DataError::Malformed(format!(
            "magic 0x{got:08x}, expected 0x{magic:08x}"
        )));
    }
    Ok((0..dims)
        .map(|i| u32::from_be_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize)
        .collect())
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, DataError> {
    let dims = header(bytes, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let body = &bytes[16..];
    let expected = count * rows * cols;
    if body.len() != expected {
        return Err(DataError::Malformed(format!(
            "expected {expected} pixel bytes, found {}",
            body.len()
        )));
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: body.iter().map(|&p| p as f64 / 255.0).collect(),
    })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let dims = header(bytes, LABELS_MAGIC, 1)?;
    let body = &bytes[8..];
    if body.len() != dims[0] {
        return Err(DataError::Malformed(format!(
            "expected {} labels, found {}",
            dims[0],
            body.len()
        )));
    }
    Ok(body.to_vec())
}

/// Loads an image/label file pair and checks that the counts agree.
pub fn load_idx(images: &Path, labels: &Path) -> Result<(IdxImages, Vec<u8>), DataError> {
    let img = parse_images(&read_all(images)?)?;
    let lab = parse_labels(&read_all(labels)?)?;
    if img.count != lab.len() {
        return Err(DataError::Malformed(format!(
            "{} images but {} labels",
            img.count,
            lab.len()
        )));
    }
    Ok((img, lab))
}

/// Serializes raw pixel bytes as an uncompressed IDX image file.
pub fn write_images<W: Write>(
    w: &mut W,
    rows: usize,
    cols: usize,
    pixels: &[u8],
) -> std::io::Result<()> {
    let count = pixels.len() / (rows * cols);
    w.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for d in [count, rows, cols] {
        w.write_all(&(d as u32).to_be_bytes())?;
    }
    w.write_all(pixels)
}

pub fn write_labels<W: Write>(w: &mut W, labels: &[u8]) -> std::io::Result<()> {
    w.write_all(&LABELS_MAGIC.to_be_bytes())?;
    w.write_all(&(labels.len() as u32).to_be_bytes())?;
    w.write_all(labels)
}
