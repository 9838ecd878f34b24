//! Maximal intensity projections and the detection input chain:
//! MIP, 100..1500 HU window mapped to `[-127, 127]`, bilinear resampling
//! to 1 x 1 mm pixels.

use std::fmt;
use std::str::FromStr;

use crate::error::{CoreError, Result};
use crate::volume::CtVolume;

pub const HU_LOW: f64 = 100.0;
pub const HU_HIGH: f64 = 1500.0;
pub const SAGITTAL_HALF_WIDTH_MM: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum View {
    Frontal,
    Sagittal,
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            View::Frontal => "frontal",
            View::Sagittal => "sagittal",
        })
    }
}

impl FromStr for View {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "frontal" => Ok(View::Frontal),
            "sagittal" => Ok(View::Sagittal),
            _ => Err(CoreError::Argument(format!(
                "unknown view `{s}` (expected frontal or sagittal)"
            ))),
        }
    }
}

/// 2D projection; rows run superior to inferior.
#[derive(Debug, Clone, PartialEq)]
pub struct MipImage {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f64>,
    pub row_spacing_mm: f64,
    pub col_spacing_mm: f64,
    pub view: View,
    pub source_slice_thickness_mm: f64,
}

impl MipImage {
    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.pixels[r * self.cols + c]
    }
}

/// `out(r, c) = max_y vol(z = r, y, x = c)`.
pub fn frontal_mip(vol: &CtVolume) -> MipImage {
    let [d, h, w] = vol.dims();
    let [sz, _, sx] = vol.spacing();
    let mut pixels = vec![f64::NEG_INFINITY; d * w];
    for z in 0..d {
        let slice = vol.slice(z);
        let out = &mut pixels[z * w..(z + 1) * w];
        for row in slice.chunks_exact(w).take(h) {
            for (o, &v) in out.iter_mut().zip(row) {
                *o = o.max(v as f64);
            }
        }
    }
    MipImage {
        rows: d,
        cols: w,
        pixels,
        row_spacing_mm: sz,
        col_spacing_mm: sx,
        view: View::Frontal,
        source_slice_thickness_mm: sz,
    }
}

/// Inclusive x range `[W/2 - hw/sx, W/2 + hw/sx]` clamped to the volume.
/// A window narrower than one voxel falls back to the column nearest the
/// center.
pub fn sagittal_window(width: usize, sx: f64, half_width_mm: f64) -> (usize, usize) {
    let center = width as f64 / 2.0;
    let half = half_width_mm / sx;
    let lo = (center - half).ceil().max(0.0);
    let hi = (center + half).floor().min(width as f64 - 1.0);
    if lo > hi {
        let c = (center.floor() as usize).min(width - 1);
        return (c, c);
    }
    (lo as usize, hi as usize)
}

/// `out(r, c) = max over the central x window of vol(z = r, y = c, x)`.
pub fn restricted_sagittal_mip(vol: &CtVolume, half_width_mm: f64) -> Result<MipImage> {
    if !(half_width_mm > 0.0) {
        return Err(CoreError::Precondition(format!(
            "half width {half_width_mm} mm must be positive"
        )));
    }
    let [d, h, w] = vol.dims();
    let [sz, sy, sx] = vol.spacing();
    let (x0, x1) = sagittal_window(w, sx, half_width_mm);
    let mut pixels = Vec::with_capacity(d * h);
    for z in 0..d {
        for row in vol.slice(z).chunks_exact(w) {
            let m = row[x0..=x1].iter().copied().max().expect("non-empty window");
            pixels.push(m as f64);
        }
    }
    Ok(MipImage {
        rows: d,
        cols: h,
        pixels,
        row_spacing_mm: sz,
        col_spacing_mm: sy,
        view: View::Sagittal,
        source_slice_thickness_mm: sz,
    })
}

pub fn mip(vol: &CtVolume, view: View) -> Result<MipImage> {
    match view {
        View::Frontal => Ok(frontal_mip(vol)),
        View::Sagittal => restricted_sagittal_mip(vol, SAGITTAL_HALF_WIDTH_MM),
    }
}

/// `round((clamp(v, 100, 1500) - 100) / 1400 * 254) - 127`.
#[inline]
pub fn map_hu_to_8bit(v: f64) -> i8 {
    let t = (v.clamp(HU_LOW, HU_HIGH) - HU_LOW) / (HU_HIGH - HU_LOW);
    ((t * 254.0).round() - 127.0) as i8
}

pub fn threshold_and_map_8bit(img: &MipImage) -> MipImage {
    MipImage {
        pixels: img
            .pixels
            .iter()
            .map(|&v| map_hu_to_8bit(v) as f64)
            .collect(),
        ..img.clone()
    }
}

/// Source coordinate of output sample `i` when `n_in` samples are
/// stretched to `n_out` with both end samples aligned.
#[inline]
fn source_coord(i: usize, n_in: usize, n_out: usize) -> f64 {
    if n_out <= 1 {
        0.0
    } else {
        (i * (n_in - 1)) as f64 / (n_out - 1) as f64
    }
}

/// Linear resampling of a 1D signal of stride `stride` to `n_out` samples.
fn lerp_axis(n_in: usize, n_out: usize) -> Vec<(usize, usize, f64)> {
    (0..n_out)
        .map(|i| {
            let s = source_coord(i, n_in, n_out);
            let i0 = (s.floor() as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}

/// Bilinear resampling of a row-major grid with aligned corners.
pub fn resize_bilinear(src: &[f64], rows: usize, cols: usize, out_rows: usize, out_cols: usize) -> Vec<f64> {
    let ry = lerp_axis(rows, out_rows);
    let rx = lerp_axis(cols, out_cols);
    let mut tmp = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let line = &src[r * cols..(r + 1) * cols];
        for (o, &(c0, c1, t)) in tmp[r * out_cols..(r + 1) * out_cols].iter_mut().zip(&rx) {
            *o = if t == 0.0 {
                line[c0]
            } else {
                line[c0] * (1.0 - t) + line[c1] * t
            };
        }
    }
    let mut out = vec![0.0; out_rows * out_cols];
    for (r, &(r0, r1, t)) in ry.iter().enumerate() {
        let a = &tmp[r0 * out_cols..(r0 + 1) * out_cols];
        let b = &tmp[r1 * out_cols..(r1 + 1) * out_cols];
        for ((o, &p), &q) in out[r * out_cols..(r + 1) * out_cols].iter_mut().zip(a).zip(b) {
            *o = if t == 0.0 { p } else { p * (1.0 - t) + q * t };
        }
    }
    out
}

/// Bilinear resampling onto a 1 x 1 mm grid of `round(rows * row_spacing)`
/// by `round(cols * col_spacing)` pixels (at least one each).
pub fn resample_to_unit(img: &MipImage) -> Result<MipImage> {
    if !(img.row_spacing_mm > 0.0 && img.col_spacing_mm > 0.0) {
        return Err(CoreError::Precondition("spacings must be positive".into()));
    }
    let out_rows = ((img.rows as f64 * img.row_spacing_mm).round() as usize).max(1);
    let out_cols = ((img.cols as f64 * img.col_spacing_mm).round() as usize).max(1);
    Ok(MipImage {
        rows: out_rows,
        cols: out_cols,
        pixels: resize_bilinear(&img.pixels, img.rows, img.cols, out_rows, out_cols),
        row_spacing_mm: 1.0,
        col_spacing_mm: 1.0,
        ..img.clone()
    })
}

/// Detector-ready image: signed 8-bit pixels on a 1 mm grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionInput {
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<i8>,
    pub view: View,
    /// Millimetres below the volume's superior edge per output row.
    pub mm_per_row: f64,
    pub source_slice_thickness_mm: f64,
    pub source_slices: usize,
}

impl DetectionInput {
    pub fn row_to_z_mm(&self, row: f64) -> f64 {
        row * self.mm_per_row
    }

    pub fn z_mm_to_row(&self, z_mm: f64) -> f64 {
        if self.mm_per_row > 0.0 {
            z_mm / self.mm_per_row
        } else {
            0.0
        }
    }

    /// Pixels as network input in `[-1, 1]`.
    pub fn normalized(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| p as f64 / 127.0).collect()
    }
}

pub fn make_detection_input(vol: &CtVolume, view: View) -> Result<DetectionInput> {
    let m = threshold_and_map_8bit(&mip(vol, view)?);
    let unit = resample_to_unit(&m)?;
    let d = vol.dims()[0];
    let mm_per_row = if unit.rows > 1 {
        (d - 1) as f64 * vol.slice_thickness() / (unit.rows - 1) as f64
    } else {
        0.0
    };
    Ok(DetectionInput {
        rows: unit.rows,
        cols: unit.cols,
        pixels: unit.pixels.iter().map(|&v| v.round() as i8).collect(),
        view,
        mm_per_row,
        source_slice_thickness_mm: vol.slice_thickness(),
        source_slices: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(rows: usize, cols: usize, pixels: Vec<f64>, rs: f64, cs: f64) -> MipImage {
        MipImage {
            rows,
            cols,
            pixels,
            row_spacing_mm: rs,
            col_spacing_mm: cs,
            view: View::Frontal,
            source_slice_thickness_mm: rs,
        }
    }

    #[test]
    fn single_voxel_frontal() {
        let mut v = CtVolume::filled([5, 8, 4], [1.0; 3], 0).unwrap();
        v.set(3, 7, 2, 500);
        let m = frontal_mip(&v);
        for r in 0..5 {
            for c in 0..4 {
                let want = if (r, c) == (3, 2) { 500.0 } else { 0.0 };
                assert_eq!(m.at(r, c), want);
            }
        }
    }

    #[test]
    fn constant_volume_constant_image() {
        let v = CtVolume::filled([3, 4, 5], [2.0, 1.0, 1.0], 42).unwrap();
        assert!(frontal_mip(&v).pixels.iter().all(|&p| p == 42.0));
        let s = restricted_sagittal_mip(&v, 1.0).unwrap();
        assert!(s.pixels.iter().all(|&p| p == 42.0));
        assert_eq!((s.rows, s.cols), (3, 4));
    }

    #[test]
    fn window_arithmetic() {
        assert_eq!(sagittal_window(40, 1.0, 20.0), (0, 39));
        assert_eq!(sagittal_window(40, 2.0, 20.0), (10, 30));
        assert_eq!(sagittal_window(41, 1.0, 0.1), (20, 20));
        assert_eq!(sagittal_window(1, 1.0, 0.2), (0, 0));
    }

    #[test]
    fn bright_voxel_outside_window_absent() {
        let mut v = CtVolume::filled([2, 3, 100], [1.0; 3], 0).unwrap();
        v.set(1, 1, 5, 900);
        v.set(0, 2, 50, 700);
        let s = restricted_sagittal_mip(&v, 20.0).unwrap();
        assert!(s.pixels.iter().all(|&p| p != 900.0));
        assert_eq!(s.at(0, 2), 700.0);
    }

    #[test]
    fn map_endpoints() {
        assert_eq!(map_hu_to_8bit(100.0), -127);
        assert_eq!(map_hu_to_8bit(1500.0), 127);
        assert_eq!(map_hu_to_8bit(800.0), 0);
        assert_eq!(map_hu_to_8bit(40.0), -127);
        assert_eq!(map_hu_to_8bit(2800.0), 127);
    }

    #[test]
    fn resample_identity_and_stretch() {
        let a = img(2, 3, vec![1.0, -2.0, 3.5, 4.0, 5.0, 6.0], 1.0, 1.0);
        assert_eq!(resample_to_unit(&a).unwrap().pixels, a.pixels);

        let b = img(2, 1, vec![0.0, 100.0], 2.0, 1.0);
        let r = resample_to_unit(&b).unwrap();
        assert_eq!(r.rows, 4);
        let want = [0.0, 100.0 / 3.0, 200.0 / 3.0, 100.0];
        for (g, w) in r.pixels.iter().zip(want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }

        let c = img(3, 2, vec![7.0; 6], 2.5, 0.7);
        let r = resample_to_unit(&c).unwrap();
        assert_eq!((r.rows, r.cols), (8, 1));
        assert!(r.pixels.iter().all(|&p| (p - 7.0).abs() < 1e-12));
    }

    #[test]
    fn detection_input_geometry() {
        let v = CtVolume::filled([40, 6, 10], [2.5, 1.0, 1.0], 0).unwrap();
        let d = make_detection_input(&v, View::Frontal).unwrap();
        assert_eq!(d.rows, 100);
        assert!((d.row_to_z_mm(99.0) - 39.0 * 2.5).abs() < 1e-9);
        assert!(d.pixels.iter().all(|&p| p == -127));
    }

    #[test]
    fn view_parse() {
        assert_eq!("sagittal".parse::<View>().unwrap(), View::Sagittal);
        assert_eq!(View::Frontal.to_string(), "frontal");
        assert!("axial".parse::<View>().is_err());
    }
}
