//! CT volumes and the two-file header + raw container.
//!
//! The header is UTF-8 `Key = Value` lines; the payload is little-endian
//! `i16`, x fastest, then y, then z. Slice `z = 0` is the most superior.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{CoreError, Result};

pub const MIN_HU: i16 = -1024;
/// Slice thicknesses outside this range load fine but are logged.
pub const USUAL_THICKNESS_MM: (f64, f64) = (0.5, 7.0);

#[derive(Debug, Clone, PartialEq)]
pub struct CtVolume {
    /// `(D, H, W)`
    dims: [usize; 3],
    /// `(sz, sy, sx)` in mm.
    spacing: [f64; 3],
    /// `(z0, y0, x0)` in mm.
    origin: [f64; 3],
    voxels: Vec<i16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolumeMeta {
    pub path: PathBuf,
    pub slice_thickness_mm: f64,
    pub origin_mm: [f64; 3],
}

impl CtVolume {
    pub fn new(dims: [usize; 3], spacing: [f64; 3], voxels: Vec<i16>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(CoreError::Precondition(format!(
                "volume dims {dims:?} must all be positive"
            )));
        }
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(CoreError::Precondition(format!(
                "spacing {spacing:?} must be finite and positive"
            )));
        }
        let n = dims[0] * dims[1] * dims[2];
        if voxels.len() != n {
            return Err(CoreError::Dimension(format!(
                "{} voxels for dims {dims:?} ({n} expected)",
                voxels.len()
            )));
        }
        if let Some(v) = voxels.iter().find(|&&v| v < MIN_HU) {
            return Err(CoreError::Domain(format!("HU value {v} below {MIN_HU}")));
        }
        let sz = spacing[0];
        if sz < USUAL_THICKNESS_MM.0 || sz > USUAL_THICKNESS_MM.1 {
            log::warn!("slice thickness {sz} mm outside the usual 0.5-7 mm range");
        }
        Ok(Self {
            dims,
            spacing,
            origin: [0.0; 3],
            voxels,
        })
    }

    /// Volume filled with `value`.
    pub fn filled(dims: [usize; 3], spacing: [f64; 3], value: i16) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(dims, spacing, vec![value; n])
    }

    pub fn with_origin(mut self, origin: [f64; 3]) -> Self {
        self.origin = origin;
        self
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn slice_thickness(&self) -> f64 {
        self.spacing[0]
    }

    pub fn voxels(&self) -> &[i16] {
        &self.voxels
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.dims[1] + y) * self.dims[2] + x
    }

    #[inline]
    pub fn get(&self, z: usize, y: usize, x: usize) -> i16 {
        self.voxels[self.index(z, y, x)]
    }

    /// Sets a voxel, clamping below [`MIN_HU`].
    #[inline]
    pub fn set(&mut self, z: usize, y: usize, x: usize, v: i16) {
        let i = self.index(z, y, x);
        self.voxels[i] = v.max(MIN_HU);
    }

    /// Axial slice `z` as a row-major `H x W` array.
    pub fn slice(&self, z: usize) -> &[i16] {
        let hw = self.dims[1] * self.dims[2];
        &self.voxels[z * hw..(z + 1) * hw]
    }

    pub fn meta(&self, path: &Path) -> VolumeMeta {
        VolumeMeta {
            path: path.to_path_buf(),
            slice_thickness_mm: self.spacing[0],
            origin_mm: self.origin,
        }
    }
}

/// Slice index nearest to `z_mm` (mm below the superior edge), clamped to
/// the volume.
pub fn z_mm_to_slice_index(z_mm: f64, vol: &CtVolume) -> Result<usize> {
    if z_mm.is_nan() || z_mm < 0.0 {
        return Err(CoreError::Domain(format!("z = {z_mm} mm is negative")));
    }
    let idx = (z_mm / vol.slice_thickness()).round();
    Ok((idx as usize).min(vol.dims()[0] - 1))
}

fn raw_path_for(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

/// Writes `<path>` (header) and the payload next to it with extension
/// `.raw`.
pub fn save_volume(vol: &CtVolume, path: &Path) -> Result<()> {
    let raw = raw_path_for(path);
    let raw_name = raw
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| CoreError::Precondition(format!("unusable path {}", path.display())))?
        .to_string();
    let [d, h, w] = vol.dims;
    let [sz, sy, sx] = vol.spacing;
    let [z0, y0, x0] = vol.origin;
    let mut header = String::new();
    let _ = writeln!(header, "NDims = 3");
    let _ = writeln!(header, "DimSize = {w} {h} {d}");
    let _ = writeln!(header, "ElementSpacing = {sx} {sy} {sz}");
    let _ = writeln!(header, "Offset = {x0} {y0} {z0}");
    let _ = writeln!(header, "BinaryDataByteOrderMSB = False");
    let _ = writeln!(header, "ElementType = MET_SHORT");
    let _ = writeln!(header, "ElementDataFile = {raw_name}");
    let mut bytes = Vec::with_capacity(vol.voxels.len() * 2);
    for v in &vol.voxels {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, header).map_err(|e| CoreError::io(path, e))?;
    fs::write(&raw, bytes).map_err(|e| CoreError::io(&raw, e))?;
    Ok(())
}

pub fn load_volume(path: &Path) -> Result<CtVolume> {
    load_volume_meta(path).map(|(v, _)| v)
}

pub fn load_volume_meta(path: &Path) -> Result<(CtVolume, VolumeMeta)> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    let bad = |field: &str, reason: String| CoreError::Format {
        path: path.to_path_buf(),
        field: field.to_string(),
        reason,
    };
    let mut ndims = None;
    let mut dim_size = None;
    let mut spacing = None;
    let mut offset = [0.0; 3];
    let mut element_type = None;
    let mut data_file = None;
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(line, "expected `Key = Value`".into()))?;
        let (key, value) = (key.trim(), value.trim());
        let triple = |field: &str| -> Result<Vec<f64>> {
            let v: Vec<f64> = value
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| bad(field, e.to_string()))?;
            if v.len() != 3 {
                return Err(bad(field, format!("expected 3 values, got {}", v.len())));
            }
            Ok(v)
        };
        match key {
            "NDims" => ndims = Some(value.to_string()),
            "DimSize" => {
                let v: Vec<usize> = value
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e: std::num::ParseIntError| bad(key, e.to_string()))?;
                if v.len() != 3 || v.contains(&0) {
                    return Err(bad(key, format!("expected 3 positive integers, got `{value}`")));
                }
                dim_size = Some([v[2], v[1], v[0]]);
            }
            "ElementSpacing" => {
                let v = triple(key)?;
                if v.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
                    return Err(bad(key, format!("spacing must be positive, got `{value}`")));
                }
                spacing = Some([v[2], v[1], v[0]]);
            }
            "Offset" | "Origin" => {
                let v = triple(key)?;
                offset = [v[2], v[1], v[0]];
            }
            "ElementType" => element_type = Some(value.to_string()),
            "ElementDataFile" => data_file = Some(value.to_string()),
            "BinaryDataByteOrderMSB" | "ElementByteOrderMSB" if value != "False" => {
                return Err(bad(key, "only little-endian payloads are supported".into()));
            }
            _ => {}
        }
    }
    match ndims.as_deref() {
        Some("3") => {}
        Some(v) => return Err(bad("NDims", format!("expected 3, got `{v}`"))),
        None => return Err(bad("NDims", "missing".into())),
    }
    match element_type.as_deref() {
        Some("MET_SHORT") => {}
        Some(v) => return Err(bad("ElementType", format!("expected MET_SHORT, got `{v}`"))),
        None => return Err(bad("ElementType", "missing".into())),
    }
    let dims = dim_size.ok_or_else(|| bad("DimSize", "missing".into()))?;
    let spacing = spacing.ok_or_else(|| bad("ElementSpacing", "missing".into()))?;
    let data_file = data_file.ok_or_else(|| bad("ElementDataFile", "missing".into()))?;
    let raw = path
        .parent()
        .map(|p| p.join(&data_file))
        .unwrap_or_else(|| PathBuf::from(&data_file));
    let bytes = fs::read(&raw).map_err(|e| CoreError::io(&raw, e))?;
    let expected = dims.iter().product::<usize>() * 2;
    if bytes.len() != expected {
        return Err(CoreError::Truncated {
            path: raw,
            expected,
            found: bytes.len(),
        });
    }
    let voxels = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]))
        .collect();
    let vol = CtVolume::new(dims, spacing, voxels)?.with_origin(offset);
    let meta = vol.meta(path);
    Ok((vol, meta))
}
