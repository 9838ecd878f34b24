//! Plain 2D grids: real-valued images, label masks, and CT slices.

use crate::error::{CoreError, Result};

pub const BACKGROUND: u8 = 0;
pub const ERECTOR_SPINAE: u8 = 1;
pub const PSOAS: u8 = 2;
pub const RECTUS_ABDOMINIS: u8 = 3;
pub const NUM_CLASSES: usize = 4;
pub const MUSCLE_CLASSES: [u8; 3] = [ERECTOR_SPINAE, PSOAS, RECTUS_ABDOMINIS];

/// Row-major image of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(CoreError::Precondition(format!("empty image {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(CoreError::Dimension(format!(
                "{} samples for a {rows}x{cols} image",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// Bilinear sample at fractional `(r, c)`; `fill` outside the grid.
    pub fn sample(&self, r: f64, c: f64, fill: f64) -> f64 {
        let (rows, cols) = (self.rows as f64, self.cols as f64);
        if !(r >= 0.0 && c >= 0.0 && r <= rows - 1.0 && c <= cols - 1.0) {
            return fill;
        }
        let (r0, c0) = (r.floor() as usize, c.floor() as usize);
        let (tr, tc) = (r - r0 as f64, c - c0 as f64);
        let r1 = (r0 + 1).min(self.rows - 1);
        let c1 = (c0 + 1).min(self.cols - 1);
        let top = if tc == 0.0 {
            self.at(r0, c0)
        } else {
            self.at(r0, c0) * (1.0 - tc) + self.at(r0, c1) * tc
        };
        if tr == 0.0 {
            return top;
        }
        let bottom = if tc == 0.0 {
            self.at(r1, c0)
        } else {
            self.at(r1, c0) * (1.0 - tc) + self.at(r1, c1) * tc
        };
        top * (1.0 - tr) + bottom * tr
    }
}

/// Per-pixel class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub rows: usize,
    pub cols: usize,
    pub labels: Vec<u8>,
}

impl LabelMask {
    pub fn new(rows: usize, cols: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != rows * cols {
            return Err(CoreError::Dimension(format!(
                "{} labels for a {rows}x{cols} mask",
                labels.len()
            )));
        }
        if let Some(l) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(CoreError::Domain(format!("label {l} outside 0..{NUM_CLASSES}")));
        }
        Ok(Self { rows, cols, labels })
    }

    pub fn background(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            labels: vec![BACKGROUND; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> u8 {
        self.labels[r * self.cols + c]
    }

    /// Nearest-neighbour lookup at fractional `(r, c)`; background outside.
    pub fn sample_nearest(&self, r: f64, c: f64) -> u8 {
        let (ri, ci) = (r.round(), c.round());
        if ri < 0.0 || ci < 0.0 || ri >= self.rows as f64 || ci >= self.cols as f64 {
            return BACKGROUND;
        }
        self.at(ri as usize, ci as usize)
    }

    pub fn class(&self, label: u8) -> Vec<bool> {
        self.labels.iter().map(|&l| l == label).collect()
    }

    /// Sorted set of labels present.
    pub fn alphabet(&self) -> Vec<u8> {
        let mut seen = [false; 256];
        for &l in &self.labels {
            seen[l as usize] = true;
        }
        (0..=255u8).filter(|&l| seen[l as usize]).collect()
    }
}

/// Axial CT slice in HU with in-plane spacing `(sy, sx)` in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceImage {
    pub image: Image,
    pub spacing: [f64; 2],
}

pub const SLICE_MIN_DIM: usize = 32;
pub const SLICE_MAX_DIM: usize = 512;

impl SliceImage {
    pub fn new(image: Image, spacing: [f64; 2]) -> Result<Self> {
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(CoreError::Precondition(format!(
                "slice spacing {spacing:?} must be positive"
            )));
        }
        if !(SLICE_MIN_DIM..=SLICE_MAX_DIM).contains(&image.rows)
            || !(SLICE_MIN_DIM..=SLICE_MAX_DIM).contains(&image.cols)
        {
            return Err(CoreError::Dimension(format!(
                "slice {}x{} outside {SLICE_MIN_DIM}..={SLICE_MAX_DIM} per axis",
                image.rows, image.cols
            )));
        }
        Ok(Self { image, spacing })
    }

    pub fn rows(&self) -> usize {
        self.image.rows
    }

    pub fn cols(&self) -> usize {
        self.image.cols
    }
}

/// Union of the muscle classes.
pub fn combined_mask(m: &LabelMask) -> Vec<bool> {
    m.labels.iter().map(|&l| l != BACKGROUND).collect()
}
