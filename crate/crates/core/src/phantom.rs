//! Synthetic CT phantoms with analytic ground truth.
//!
//! Anatomy is built from ellipsoids, elliptic cylinders and capsules in a
//! body frame: X left to right, Y anterior to posterior (both centred on
//! the volume axis), Z superior to inferior. The spine sits on X = 0, so
//! with `symmetric` set and no noise a phantom is exactly mirror
//! symmetric. Lumbar transverse processes peak in length at L3, which gives
//! the detector a local cue; the level is defined as the third free
//! vertebra above the sacrum.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::image::{
    Image, LabelMask, SliceImage, BACKGROUND, ERECTOR_SPINAE, PSOAS, RECTUS_ABDOMINIS,
};
use crate::rng::{derive_seed, stream_rng, Stream};
use crate::volume::{CtVolume, MIN_HU};

/// Fused sacral and coccygeal segments modelled as one block.
pub const FUSED_SEGMENTS: usize = 9;
const LUMBAR: usize = 5;
const FOV_X_MM: f64 = 160.0;
const FOV_Y_MM: f64 = 120.0;
const METAL_HU: f64 = 3000.0;
/// Transverse-process length by lumbar position L1..L6.
const TP_LENGTH_MM: [f64; 6] = [16.0, 22.0, 30.0, 22.0, 18.0, 18.0];

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomParams {
    /// Vertebrae from T10 down, counting the fused sacral block as nine.
    pub n_vertebrae: usize,
    pub vertebra_spacing_mm: (f64, f64),
    pub vertebra_hu: (f64, f64),
    pub muscle_hu: (f64, f64),
    pub fat_hu: (f64, f64),
    pub slice_thickness_mm: (f64, f64),
    pub in_plane_spacing_mm: f64,
    pub noise_sd: f64,
    /// Always add the extra lumbar vertebra.
    pub transitional: bool,
    pub transitional_probability: f64,
    pub metal_probability: f64,
    /// Mirror left-side jitter onto the right.
    pub symmetric: bool,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            n_vertebrae: 17,
            vertebra_spacing_mm: (25.0, 35.0),
            vertebra_hu: (300.0, 1200.0),
            muscle_hu: (20.0, 80.0),
            fat_hu: (-120.0, -80.0),
            slice_thickness_mm: (1.0, 7.0),
            in_plane_spacing_mm: 1.25,
            noise_sd: 15.0,
            transitional: false,
            transitional_probability: 0.0,
            metal_probability: 0.0,
            symmetric: false,
        }
    }
}

impl PhantomParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CoreError::Precondition(m));
        for (name, (lo, hi)) in [
            ("vertebra_spacing_mm", self.vertebra_spacing_mm),
            ("vertebra_hu", self.vertebra_hu),
            ("muscle_hu", self.muscle_hu),
            ("fat_hu", self.fat_hu),
            ("slice_thickness_mm", self.slice_thickness_mm),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad(format!("{name} range ({lo}, {hi}) is empty"));
            }
        }
        if self.n_vertebrae < FUSED_SEGMENTS + LUMBAR {
            return bad(format!(
                "n_vertebrae = {} leaves no room for five lumbar vertebrae and the sacrum",
                self.n_vertebrae
            ));
        }
        if !(self.fat_hu.1 < self.muscle_hu.0 && self.muscle_hu.1 < self.vertebra_hu.0) {
            return bad("HU ranges must be ordered fat < muscle < bone".into());
        }
        if self.vertebra_spacing_mm.0 < 15.0 {
            return bad("vertebra spacing below 15 mm".into());
        }
        if self.slice_thickness_mm.0 <= 0.0 || self.in_plane_spacing_mm <= 0.0 {
            return bad("spacings must be positive".into());
        }
        if self.noise_sd < 0.0 {
            return bad("noise sd must be non-negative".into());
        }
        for (name, p) in [
            ("transitional_probability", self.transitional_probability),
            ("metal_probability", self.metal_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Tissue {
    Air = 0,
    Fat,
    Organ,
    Erector,
    Psoas,
    Rectus,
    Bone,
    Metal,
}

impl Tissue {
    pub fn label(self) -> u8 {
        match self {
            Tissue::Erector => ERECTOR_SPINAE,
            Tissue::Psoas => PSOAS,
            Tissue::Rectus => RECTUS_ABDOMINIS,
            _ => BACKGROUND,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertebra {
    pub name: String,
    /// Centre, mm below the first slice (may be negative if outside).
    pub z_mm: f64,
}

/// Elliptic cross-section of one muscle cylinder, in mm from the axial
/// field-of-view centre (`y` anterior-negative).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuscleSection {
    pub label: u8,
    pub cy: f64,
    pub cx: f64,
    pub ry: f64,
    pub rx: f64,
}

impl MuscleSection {
    pub fn area_mm2(&self) -> f64 {
        std::f64::consts::PI * self.ry * self.rx
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomTruth {
    pub l3_z_mm: f64,
    pub l3_slice_index: usize,
    pub transitional: bool,
    /// The other plausible L3 level when `transitional`.
    pub alt_z_mm: Option<f64>,
    pub sacrum_top_z_mm: f64,
    pub vertebra_spacing_mm: f64,
    pub vertebrae: Vec<Vertebra>,
    pub muscles: Vec<MuscleSection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub id: String,
    pub seed: u64,
    pub volume: CtVolume,
    pub truth: PhantomTruth,
    /// Labels of the axial slice at `truth.l3_slice_index`.
    pub mask: LabelMask,
}

impl Phantom {
    /// Axial slice at the ground-truth L3 index.
    pub fn l3_slice(&self) -> SliceImage {
        slice_image(&self.volume, self.truth.l3_slice_index)
    }
}

/// Axial slice `z` of `vol` as an HU image.
pub fn slice_image(vol: &CtVolume, z: usize) -> SliceImage {
    let [_, h, w] = vol.dims();
    let [_, sy, sx] = vol.spacing();
    let data = vol.slice(z).iter().map(|&v| v as f64).collect();
    SliceImage {
        image: Image {
            rows: h,
            cols: w,
            data,
        },
        spacing: [sy, sx],
    }
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    /// Centre and semi-axes, both `(Z, Y, X)`.
    Ellipsoid { c: [f64; 3], r: [f64; 3] },
    /// Elliptic cylinder along Z.
    Cylinder {
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
        z0: f64,
        z1: f64,
    },
    Capsule { a: [f64; 3], b: [f64; 3], radius: f64 },
}

impl Shape {
    fn bounds(&self) -> ([f64; 3], [f64; 3]) {
        match *self {
            Shape::Ellipsoid { c, r } => (
                [c[0] - r[0], c[1] - r[1], c[2] - r[2]],
                [c[0] + r[0], c[1] + r[1], c[2] + r[2]],
            ),
            Shape::Cylinder {
                cy,
                cx,
                ry,
                rx,
                z0,
                z1,
            } => ([z0, cy - ry, cx - rx], [z1, cy + ry, cx + rx]),
            Shape::Capsule { a, b, radius } => {
                let lo = [0, 1, 2].map(|i| a[i].min(b[i]) - radius);
                let hi = [0, 1, 2].map(|i| a[i].max(b[i]) + radius);
                (lo, hi)
            }
        }
    }

    fn contains(&self, p: [f64; 3]) -> bool {
        match *self {
            Shape::Ellipsoid { c, r } => {
                (0..3).map(|i| ((p[i] - c[i]) / r[i]).powi(2)).sum::<f64>() <= 1.0
            }
            Shape::Cylinder {
                cy,
                cx,
                ry,
                rx,
                z0,
                z1,
            } => {
                p[0] >= z0
                    && p[0] <= z1
                    && ((p[1] - cy) / ry).powi(2) + ((p[2] - cx) / rx).powi(2) <= 1.0
            }
            Shape::Capsule { a, b, radius } => {
                let ab = [0, 1, 2].map(|i| b[i] - a[i]);
                let ap = [0, 1, 2].map(|i| p[i] - a[i]);
                let len2: f64 = ab.iter().map(|v| v * v).sum();
                let t = (ap.iter().zip(&ab).map(|(u, v)| u * v).sum::<f64>() / len2).clamp(0.0, 1.0);
                let d2: f64 = (0..3).map(|i| (ap[i] - t * ab[i]).powi(2)).sum();
                d2 <= radius * radius
            }
        }
    }
}

struct Part {
    shape: Shape,
    tissue: Tissue,
    hu: f64,
}

/// Voxel grid in the body frame.
struct Grid {
    dims: [usize; 3],
    sz: f64,
    sp: f64,
    top: f64,
}

impl Grid {
    fn coord(&self, k: usize, j: usize, i: usize) -> [f64; 3] {
        [
            self.top + k as f64 * self.sz,
            (j as f64 + 0.5 - self.dims[1] as f64 / 2.0) * self.sp,
            (i as f64 + 0.5 - self.dims[2] as f64 / 2.0) * self.sp,
        ]
    }

    /// Index range of voxel centres within `[lo, hi]` along one axis.
    fn span(lo: f64, hi: f64, origin: f64, step: f64, n: usize) -> Option<(usize, usize)> {
        let a = ((lo - origin) / step).ceil().max(0.0);
        let b = ((hi - origin) / step).floor().min(n as f64 - 1.0);
        (a <= b).then(|| (a as usize, b as usize))
    }

    fn paint(&self, part: &Part, tissue: &mut [Tissue], hu: &mut [f32]) {
        let (lo, hi) = part.shape.bounds();
        let [d, h, w] = self.dims;
        let y0 = -(h as f64) / 2.0 * self.sp + 0.5 * self.sp;
        let x0 = -(w as f64) / 2.0 * self.sp + 0.5 * self.sp;
        let (Some(kz), Some(jy), Some(ix)) = (
            Self::span(lo[0], hi[0], self.top, self.sz, d),
            Self::span(lo[1], hi[1], y0, self.sp, h),
            Self::span(lo[2], hi[2], x0, self.sp, w),
        ) else {
            return;
        };
        for k in kz.0..=kz.1 {
            for j in jy.0..=jy.1 {
                for i in ix.0..=ix.1 {
                    if part.shape.contains(self.coord(k, j, i)) {
                        let at = (k * h + j) * w + i;
                        tissue[at] = part.tissue;
                        hu[at] = part.hu as f32;
                    }
                }
            }
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Left/right jitter pair, equal when `symmetric`.
fn pair(rng: &mut ChaCha8Rng, symmetric: bool, f: impl Fn(&mut ChaCha8Rng) -> f64) -> [f64; 2] {
    let a = f(rng);
    let b = f(rng);
    if symmetric {
        [a, a]
    } else {
        [a, b]
    }
}

/// One phantom and its per-voxel tissue classes.
pub fn gen_phantom_with_tissue(seed: u64, params: &PhantomParams) -> Result<(Phantom, Vec<Tissue>)> {
    params.validate()?;
    let mut rng = stream_rng(seed, Stream::Data, 0);
    let sym = params.symmetric;
    let transitional =
        params.transitional || rng.gen_bool(params.transitional_probability.clamp(0.0, 1.0));
    let spacing = uniform(&mut rng, params.vertebra_spacing_mm);
    let n_thoracic = params.n_vertebrae - FUSED_SEGMENTS - LUMBAR;
    let n_lumbar = LUMBAR + transitional as usize;
    let n_free = n_thoracic + n_lumbar;

    let mut names = Vec::with_capacity(n_free);
    for t in 0..n_thoracic {
        names.push(format!("T{}", 12 + 1 + t - n_thoracic));
    }
    for l in 0..n_lumbar {
        names.push(format!("L{}", l + 1));
    }
    let mut centers = vec![0.0];
    for _ in 1..n_free {
        let last = *centers.last().expect("non-empty");
        centers.push(last + spacing * rng.gen_range(0.95..=1.05));
    }
    let sacrum_top = centers[n_free - 1] + 0.62 * spacing;
    let l3 = n_free - 3;
    let alt = transitional.then(|| l3 - 1);

    let upper = alt.map_or(centers[l3], |a| centers[a]);
    let top = upper - rng.gen_range(55.0..=85.0);
    let bottom = sacrum_top + rng.gen_range(30.0..=60.0);
    let sz = uniform(&mut rng, params.slice_thickness_mm);
    let sp = params.in_plane_spacing_mm;
    let grid = Grid {
        dims: [
            ((bottom - top) / sz).floor() as usize + 1,
            (FOV_Y_MM / sp).round() as usize,
            (FOV_X_MM / sp).round() as usize,
        ],
        sz,
        sp,
        top,
    };
    let (z_lo, z_hi) = (top - 1.0, bottom + 1.0);

    let mut parts = Vec::new();
    let body = rng.gen_range(0.95..=1.0);
    parts.push(Part {
        shape: Shape::Cylinder {
            cy: 0.0,
            cx: 0.0,
            ry: 55.0 * body,
            rx: 72.0 * body,
            z0: z_lo,
            z1: z_hi,
        },
        tissue: Tissue::Fat,
        hu: uniform(&mut rng, params.fat_hu),
    });

    // Soft-tissue confusers: kidneys and a bowel mass.
    let kidney_z = centers[n_thoracic] + 15.0;
    let kidney_hu = rng.gen_range(25.0..=40.0);
    let kx = pair(&mut rng, sym, |r| 55.0 + r.gen_range(-1.0..=1.0));
    for (side, x) in [-1.0, 1.0].into_iter().zip(kx) {
        parts.push(Part {
            shape: Shape::Ellipsoid {
                c: [kidney_z, 8.0, side * x],
                r: [50.0, 13.0, 8.0],
            },
            tissue: Tissue::Organ,
            hu: kidney_hu,
        });
    }
    parts.push(Part {
        shape: Shape::Ellipsoid {
            c: [centers[l3] + rng.gen_range(-15.0..=15.0), -20.0, 0.0],
            r: [70.0, 9.0, 22.0],
        },
        tissue: Tissue::Organ,
        hu: rng.gen_range(0.0..=40.0),
    });

    // Muscles: elliptic cylinders through the whole field of view.
    let muscle_base = uniform(&mut rng, params.muscle_hu);
    let mut muscles = Vec::with_capacity(6);
    for (tissue, cx, cy, rx, ry) in [
        (Tissue::Erector, 21.0, 35.0, 13.5, 9.5),
        (Tissue::Psoas, 33.0, 0.0, 9.0, 9.0),
        (Tissue::Rectus, 12.0, -44.0, 10.0, 5.0),
    ] {
        let hu = (muscle_base + rng.gen_range(-5.0..=5.0)).clamp(params.muscle_hu.0, params.muscle_hu.1);
        let jit = |r: &mut ChaCha8Rng| {
            [
                r.gen_range(-1.0..=1.0),
                r.gen_range(-1.0..=1.0),
                r.gen_range(0.92..=1.08),
                r.gen_range(0.92..=1.08),
            ]
        };
        let left = jit(&mut rng);
        let right = if sym { left } else { jit(&mut rng) };
        for (side, j) in [(-1.0, left), (1.0, right)] {
            let m = MuscleSection {
                label: tissue.label(),
                cy: cy + j[1],
                cx: side * (cx + j[0]),
                ry: ry * j[3],
                rx: rx * j[2],
            };
            muscles.push(m);
            parts.push(Part {
                shape: Shape::Cylinder {
                    cy: m.cy,
                    cx: m.cx,
                    ry: m.ry,
                    rx: m.rx,
                    z0: z_lo,
                    z1: z_hi,
                },
                tissue,
                hu,
            });
        }
    }

    // Spine.
    for (v, &zc) in centers.iter().enumerate() {
        let hu = uniform(&mut rng, params.vertebra_hu);
        let lumbar = v.checked_sub(n_thoracic);
        let bx = match lumbar {
            None => 13.0,
            Some(j) => 14.0 + 0.7 * j as f64,
        } * rng.gen_range(0.95..=1.05);
        let bone = |shape| Part {
            shape,
            tissue: Tissue::Bone,
            hu,
        };
        parts.push(bone(Shape::Ellipsoid {
            c: [zc, 8.0, 0.0],
            r: [0.38 * spacing, 0.8 * bx, bx],
        }));
        parts.push(bone(Shape::Ellipsoid {
            c: [zc, 30.0, 0.0],
            r: [0.28 * spacing, 9.0, 3.5],
        }));
        let nominal = match lumbar {
            None => 8.0,
            Some(_) if Some(v) == alt || v == l3 => TP_LENGTH_MM[2],
            Some(j) => TP_LENGTH_MM[j.min(TP_LENGTH_MM.len() - 1)],
        };
        let len = pair(&mut rng, sym, |r| nominal + r.gen_range(-1.5..=1.5));
        for (side, l) in [-1.0, 1.0].into_iter().zip(len) {
            // A capsule keeps its full length even when thick slices only
            // graze it.
            parts.push(bone(Shape::Capsule {
                a: [zc, 19.0, side * 8.0],
                b: [zc, 19.0, side * (10.0 + l)],
                radius: 4.0,
            }));
            if lumbar.is_none() {
                // Ribs stay level with their vertebra so the frontal
                // row profile peaks at the vertebra centre.
                parts.push(bone(Shape::Capsule {
                    a: [zc, 19.0, side * 20.0],
                    b: [zc, -15.0, side * 60.0],
                    radius: 3.5,
                }));
            }
        }
    }
    let pelvis_hu = uniform(&mut rng, params.vertebra_hu);
    parts.push(Part {
        shape: Shape::Ellipsoid {
            c: [sacrum_top + 45.0, 14.0, 0.0],
            r: [45.0, 16.0, 26.0],
        },
        tissue: Tissue::Bone,
        hu: pelvis_hu,
    });
    for side in [-1.0, 1.0] {
        parts.push(Part {
            shape: Shape::Ellipsoid {
                c: [sacrum_top + 24.0, 6.0, side * 56.0],
                r: [24.0, 18.0, 6.0],
            },
            tissue: Tissue::Bone,
            hu: pelvis_hu,
        });
    }
    if rng.gen_bool(params.metal_probability) {
        let (za, zb) = (centers[l3 - 1], centers[l3 + 1]);
        for side in [-1.0, 1.0] {
            parts.push(Part {
                shape: Shape::Cylinder {
                    cy: 23.0,
                    cx: side * 7.0,
                    ry: 2.0,
                    rx: 2.0,
                    z0: za,
                    z1: zb,
                },
                tissue: Tissue::Metal,
                hu: METAL_HU,
            });
        }
    }

    let n = grid.dims.iter().product();
    let mut tissue = vec![Tissue::Air; n];
    let mut base = vec![-1000.0f32; n];
    for p in &parts {
        grid.paint(p, &mut tissue, &mut base);
    }
    let voxels: Vec<i16> = if params.noise_sd > 0.0 {
        let noise = Normal::new(0.0, params.noise_sd).expect("finite sd");
        base.iter()
            .map(|&b| (b as f64 + noise.sample(&mut rng)).round().clamp(MIN_HU as f64, i16::MAX as f64) as i16)
            .collect()
    } else {
        base.iter().map(|&b| (b as f64).round().max(MIN_HU as f64) as i16).collect()
    };
    let volume = CtVolume::new(grid.dims, [sz, sp, sp], voxels)?;

    let rel = |z: f64| z - top;
    let l3_z_mm = rel(centers[l3]);
    let l3_slice_index = ((l3_z_mm / sz).round() as usize).min(grid.dims[0] - 1);
    let hw = grid.dims[1] * grid.dims[2];
    let labels = tissue[l3_slice_index * hw..(l3_slice_index + 1) * hw]
        .iter()
        .map(|t| t.label())
        .collect();
    let mask = LabelMask::new(grid.dims[1], grid.dims[2], labels)?;
    let truth = PhantomTruth {
        l3_z_mm,
        l3_slice_index,
        transitional,
        alt_z_mm: alt.map(|a| rel(centers[a])),
        sacrum_top_z_mm: rel(sacrum_top),
        vertebra_spacing_mm: spacing,
        vertebrae: names
            .into_iter()
            .zip(&centers)
            .map(|(name, &z)| Vertebra { name, z_mm: rel(z) })
            .collect(),
        muscles,
    };
    Ok((
        Phantom {
            id: format!("seed{seed}"),
            seed,
            volume,
            truth,
            mask,
        },
        tissue,
    ))
}

pub fn gen_phantom(seed: u64, params: &PhantomParams) -> Result<Phantom> {
    gen_phantom_with_tissue(seed, params).map(|(p, _)| p)
}

/// Case id for dataset index `i`.
pub fn case_id(i: usize) -> String {
    format!("ph{i:04}")
}

/// `n` phantoms with seeds drawn from the data stream of `seed`.
pub fn gen_dataset(n: usize, seed: u64, params: &PhantomParams) -> Result<Vec<Phantom>> {
    if n == 0 {
        return Err(CoreError::Precondition("dataset size must be at least 1".into()));
    }
    (0..n)
        .map(|i| {
            let s = derive_seed(seed, Stream::Data, i as u64);
            let mut p = gen_phantom(s, params)?;
            p.id = case_id(i);
            Ok(p)
        })
        .collect()
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub id: String,
    pub seed: u64,
    pub volume: String,
    pub slices: usize,
    pub rows: usize,
    pub cols: usize,
    pub slice_thickness_mm: f64,
    pub pixel_spacing_mm: f64,
    pub vertebra_spacing_mm: f64,
    pub gt_l3_z_mm: f64,
    pub gt_slice_index: usize,
    pub transitional: bool,
    pub alt_z_mm: Option<f64>,
    pub mask: String,
}

impl ManifestRow {
    pub fn of(p: &Phantom) -> Self {
        let [d, h, w] = p.volume.dims();
        Self {
            id: p.id.clone(),
            seed: p.seed,
            volume: format!("{}.mhd", p.id),
            slices: d,
            rows: h,
            cols: w,
            slice_thickness_mm: p.volume.slice_thickness(),
            pixel_spacing_mm: p.volume.spacing()[2],
            vertebra_spacing_mm: p.truth.vertebra_spacing_mm,
            gt_l3_z_mm: p.truth.l3_z_mm,
            gt_slice_index: p.truth.l3_slice_index,
            transitional: p.truth.transitional,
            alt_z_mm: p.truth.alt_z_mm,
            mask: format!("{}_mask.mhd", p.id),
        }
    }
}

pub fn write_manifest(rows: &[ManifestRow], path: &Path) -> Result<()> {
    let csv_err = |source| CoreError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let csv_err = |source| CoreError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_per_seed() {
        let p = PhantomParams::default();
        let a = gen_phantom(3, &p).unwrap();
        assert_eq!(a, gen_phantom(3, &p).unwrap());
        let b = gen_phantom(4, &p).unwrap();
        assert_ne!(a.volume, b.volume);
        assert_eq!(
            a.truth.vertebrae.iter().map(|v| &v.name).collect::<Vec<_>>(),
            b.truth.vertebrae.iter().map(|v| &v.name).collect::<Vec<_>>()
        );
    }

    #[test]
    fn l3_is_third_above_sacrum() {
        let p = gen_phantom(1, &PhantomParams::default()).unwrap();
        let v = &p.truth.vertebrae;
        assert_eq!(v.last().unwrap().name, "L5");
        assert_eq!(v[v.len() - 3].name, "L3");
        assert_eq!(v[v.len() - 3].z_mm, p.truth.l3_z_mm);
        assert!(p.truth.alt_z_mm.is_none());
        let d = p.volume.dims()[0] as f64 * p.volume.slice_thickness();
        assert!(p.truth.l3_z_mm > 0.0 && p.truth.l3_z_mm < d);
        assert!(p.truth.sacrum_top_z_mm < d);
    }

    #[test]
    fn transitional_has_two_candidates() {
        let params = PhantomParams {
            transitional: true,
            ..Default::default()
        };
        let p = gen_phantom(9, &params).unwrap();
        let v = &p.truth.vertebrae;
        assert_eq!(v.last().unwrap().name, "L6");
        assert_eq!(v[v.len() - 3].name, "L4");
        assert_eq!(p.truth.alt_z_mm, Some(v[v.len() - 4].z_mm));
        assert!(p.truth.alt_z_mm.unwrap() > 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        let p = PhantomParams {
            muscle_hu: (20.0, 400.0),
            ..Default::default()
        };
        assert!(p.validate().is_err());
        let p = PhantomParams {
            n_vertebrae: 13,
            ..Default::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let params = PhantomParams {
            transitional_probability: 0.5,
            ..Default::default()
        };
        let rows: Vec<ManifestRow> = gen_dataset(4, 2, &params)
            .unwrap()
            .iter()
            .map(ManifestRow::of)
            .collect();
        write_manifest(&rows, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), rows);
    }
}
