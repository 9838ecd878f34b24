//! Binary portable graymap (P5) export: `P5\n<cols> <rows>\n255\n` then one
//! byte per pixel, row-major.

use std::fs;
use std::path::Path;

use crate::error::{CoreError, Result};
use crate::image::{LabelMask, NUM_CLASSES};
use crate::projection::DetectionInput;

pub fn encode_pgm(rows: usize, cols: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| CoreError::Argument(format!("not a P5 graymap: {m}"));
    // Header: magic, width, height, maxval, each separated by whitespace.
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(bad("truncated header"));
        }
        fields.push(std::str::from_utf8(&bytes[start..i]).map_err(|_| bad("header"))?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("expected P5 with maxval 255"));
    }
    let cols: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let rows: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let body = &bytes[(i + 1).min(bytes.len())..];
    if body.len() != rows * cols {
        return Err(bad("payload length"));
    }
    Ok((rows, cols, body.to_vec()))
}

/// Detection image shifted from `[-127, 127]` to `[0, 254]`.
pub fn write_detection_pgm(img: &DetectionInput, path: &Path) -> Result<()> {
    let px: Vec<u8> = img.pixels.iter().map(|&p| (p as i16 + 127) as u8).collect();
    fs::write(path, encode_pgm(img.rows, img.cols, &px)).map_err(|e| CoreError::io(path, e))
}

/// Labels written as `64 * label`.
pub fn write_mask_pgm(mask: &LabelMask, path: &Path) -> Result<()> {
    let px: Vec<u8> = mask.labels.iter().map(|&l| l * 64).collect();
    fs::write(path, encode_pgm(mask.rows, mask.cols, &px)).map_err(|e| CoreError::io(path, e))
}

pub fn read_mask_pgm(path: &Path) -> Result<LabelMask> {
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    let (rows, cols, px) = decode_pgm(&bytes)?;
    let labels = px
        .iter()
        .map(|&v| {
            if v % 64 == 0 && ((v / 64) as usize) < NUM_CLASSES {
                Ok(v / 64)
            } else {
                Err(CoreError::Domain(format!("gray level {v} is not a label")))
            }
        })
        .collect::<Result<Vec<u8>>>()?;
    LabelMask::new(rows, cols, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let b = encode_pgm(2, 3, &[0, 1, 2, 3, 4, 254]);
        assert_eq!(&b[..11], b"P5\n3 2\n255\n");
        assert_eq!(decode_pgm(&b).unwrap(), (2, 3, vec![0, 1, 2, 3, 4, 254]));
    }

    #[test]
    fn mask_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.pgm");
        let m = LabelMask::new(2, 2, vec![0, 1, 2, 3]).unwrap();
        write_mask_pgm(&m, &p).unwrap();
        assert_eq!(&fs::read(&p).unwrap()[11..], &[0, 64, 128, 192]);
        assert_eq!(read_mask_pgm(&p).unwrap(), m);
    }
}
