//! Seeded image augmentation for detection projections and segmentation
//! slices. Every transform has an identity setting that returns the input
//! unchanged; masks are resampled with nearest neighbour so no new labels
//! appear.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::image::{Image, LabelMask};
use crate::rng::{stream_rng, Stream};

pub const PIXEL_MIN: f64 = -127.0;
pub const PIXEL_MAX: f64 = 127.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub hflip_p: f64,
    pub scale_p: f64,
    pub scale_range: (f64, f64),
    pub offset_p: f64,
    /// Intensity offsets are drawn from `[-offset_max, offset_max]`, in
    /// 8-bit units for projections and HU for slices.
    pub offset_max: f64,
    pub affine_p: f64,
    pub affine_grid: usize,
    pub affine_jitter_mm: f64,
    pub dropout_p: f64,
    pub overexposure_p: f64,
    /// Upper bound on a dropout/overexposure rectangle, as image fraction.
    pub region_max_frac: f64,
    pub subsample_p: f64,
    pub subsample_max: usize,
    /// Apply dropout, overexposure and vertical subsampling to
    /// segmentation slices too.
    pub detection_only_on_slices: bool,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            hflip_p: 0.5,
            scale_p: 0.5,
            scale_range: (0.9, 1.1),
            offset_p: 0.5,
            offset_max: 10.0,
            affine_p: 0.3,
            affine_grid: 4,
            affine_jitter_mm: 3.0,
            dropout_p: 0.2,
            overexposure_p: 0.2,
            region_max_frac: 0.25,
            subsample_p: 0.3,
            subsample_max: 7,
            detection_only_on_slices: false,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled.
    pub fn none() -> Self {
        Self {
            hflip_p: 0.0,
            scale_p: 0.0,
            offset_p: 0.0,
            affine_p: 0.0,
            dropout_p: 0.0,
            overexposure_p: 0.0,
            subsample_p: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("hflip_p", self.hflip_p),
            ("scale_p", self.scale_p),
            ("offset_p", self.offset_p),
            ("affine_p", self.affine_p),
            ("dropout_p", self.dropout_p),
            ("overexposure_p", self.overexposure_p),
            ("subsample_p", self.subsample_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(CoreError::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        let (lo, hi) = self.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(CoreError::Config(format!("scale range ({lo}, {hi})")));
        }
        if !(1..=7).contains(&self.subsample_max) {
            return Err(CoreError::Config(format!(
                "subsample_max = {} outside 1..=7",
                self.subsample_max
            )));
        }
        if !(self.region_max_frac > 0.0 && self.region_max_frac <= 0.25) {
            return Err(CoreError::Config(format!(
                "region_max_frac = {} outside (0, 0.25]",
                self.region_max_frac
            )));
        }
        if self.affine_grid == 0 || self.affine_jitter_mm < 0.0 || self.offset_max < 0.0 {
            return Err(CoreError::Config("affine grid, jitter and offset must be non-negative".into()));
        }
        Ok(())
    }
}

pub fn hflip(img: &Image) -> Image {
    let mut out = img.clone();
    for (dst, src) in out.data.chunks_exact_mut(img.cols).zip(img.data.chunks_exact(img.cols)) {
        for (d, s) in dst.iter_mut().zip(src.iter().rev()) {
            *d = *s;
        }
    }
    out
}

pub fn hflip_mask(m: &LabelMask) -> LabelMask {
    let mut out = m.clone();
    for row in out.labels.chunks_exact_mut(m.cols) {
        row.reverse();
    }
    out
}

fn center(n: usize) -> f64 {
    (n as f64 - 1.0) / 2.0
}

/// Zoom by `factor` about the image centre; uncovered pixels get `fill`.
pub fn scale(img: &Image, factor: f64, fill: f64) -> Image {
    let (cr, cc) = (center(img.rows), center(img.cols));
    let mut out = img.clone();
    for r in 0..img.rows {
        for c in 0..img.cols {
            let sr = cr + (r as f64 - cr) / factor;
            let sc = cc + (c as f64 - cc) / factor;
            out.set(r, c, img.sample(sr, sc, fill));
        }
    }
    out
}

pub fn scale_mask(m: &LabelMask, factor: f64) -> LabelMask {
    let (cr, cc) = (center(m.rows), center(m.cols));
    let mut out = m.clone();
    for r in 0..m.rows {
        for c in 0..m.cols {
            let sr = cr + (r as f64 - cr) / factor;
            let sc = cc + (c as f64 - cc) / factor;
            out.labels[r * m.cols + c] = m.sample_nearest(sr, sc);
        }
    }
    out
}

/// Where row `y` lands after [`scale`].
pub fn scale_row(y: f64, rows: usize, factor: f64) -> f64 {
    let c = center(rows);
    c + (y - c) * factor
}

/// Adds `delta`, clamping to `[lo, hi]`.
pub fn intensity_offset(img: &Image, delta: f64, lo: f64, hi: f64) -> Image {
    let mut out = img.clone();
    for v in &mut out.data {
        *v = (*v + delta).clamp(lo, hi);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn area(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r >= self.row && r < self.row + self.height && c >= self.col && c < self.col + self.width
    }

    pub fn intersects(&self, o: &Rect) -> bool {
        self.row < o.row + o.height
            && o.row < self.row + self.height
            && self.col < o.col + o.width
            && o.col < self.col + self.width
    }
}

fn fill_rect(img: &Image, rect: Rect, value: f64) -> Result<Image> {
    if rect.row + rect.height > img.rows || rect.col + rect.width > img.cols {
        return Err(CoreError::Precondition(format!(
            "region {rect:?} exceeds a {}x{} image",
            img.rows, img.cols
        )));
    }
    let mut out = img.clone();
    for r in rect.row..rect.row + rect.height {
        out.data[r * img.cols + rect.col..r * img.cols + rect.col + rect.width].fill(value);
    }
    Ok(out)
}

/// Saturates `rect` (default value `+127`).
pub fn overexposure(img: &Image, rect: Rect, value: f64) -> Result<Image> {
    fill_rect(img, rect, value)
}

/// Blanks `rect` (default value `-127`).
pub fn region_dropout(img: &Image, rect: Rect, value: f64) -> Result<Image> {
    fill_rect(img, rect, value)
}

/// Random non-empty rectangle covering at most `max_frac` of the image.
pub fn sample_rect(rng: &mut ChaCha8Rng, rows: usize, cols: usize, max_frac: f64) -> Rect {
    let budget = ((rows * cols) as f64 * max_frac).floor().max(1.0) as usize;
    let height = rng.gen_range(1..=rows.min(budget));
    let width = rng.gen_range(1..=cols.min(budget / height).max(1));
    Rect {
        row: rng.gen_range(0..=rows - height),
        col: rng.gen_range(0..=cols - width),
        height,
        width,
    }
}

/// Triangulated warp over a `grid x grid` lattice of cells. Border control
/// points stay fixed; interior points are jittered. Each output pixel is
/// pulled from the matching point of the undeformed triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseAffine {
    rows: usize,
    cols: usize,
    grid: usize,
    /// Undeformed control points `(row, col)`, `(grid+1)^2` of them.
    src: Vec<(f64, f64)>,
    /// Deformed control points.
    dst: Vec<(f64, f64)>,
}

type Tri = [(f64, f64); 3];

fn barycentric(p: (f64, f64), t: &Tri) -> Option<[f64; 3]> {
    let (a, b, c) = (t[0], t[1], t[2]);
    let det = (b.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (b.1 - a.1);
    if det.abs() < 1e-12 {
        return None;
    }
    let l1 = ((p.0 - a.0) * (c.1 - a.1) - (c.0 - a.0) * (p.1 - a.1)) / det;
    let l2 = ((b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1)) / det;
    let l0 = 1.0 - l1 - l2;
    const EPS: f64 = -1e-9;
    (l0 >= EPS && l1 >= EPS && l2 >= EPS).then_some([l0, l1, l2])
}

fn combine(w: [f64; 3], t: &Tri) -> (f64, f64) {
    (
        w[0] * t[0].0 + w[1] * t[1].0 + w[2] * t[2].0,
        w[0] * t[0].1 + w[1] * t[1].1 + w[2] * t[2].1,
    )
}

impl PiecewiseAffine {
    /// Jitter is drawn uniformly from `[-jitter_px, jitter_px]` per axis and
    /// capped at a quarter of the cell size so triangles never fold.
    pub fn sample(
        rows: usize,
        cols: usize,
        grid: usize,
        jitter_px: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if grid == 0 || rows < grid || cols < grid {
            return Err(CoreError::Precondition(format!(
                "{rows}x{cols} image is smaller than a {grid}x{grid} grid"
            )));
        }
        let step_r = (rows - 1) as f64 / grid as f64;
        let step_c = (cols - 1) as f64 / grid as f64;
        let cap = jitter_px.min(0.25 * step_r.min(step_c)).max(0.0);
        let mut src = Vec::new();
        let mut dst = Vec::new();
        for i in 0..=grid {
            for j in 0..=grid {
                let p = (i as f64 * step_r, j as f64 * step_c);
                src.push(p);
                let interior = i > 0 && i < grid && j > 0 && j < grid;
                dst.push(if interior && cap > 0.0 {
                    (p.0 + rng.gen_range(-cap..=cap), p.1 + rng.gen_range(-cap..=cap))
                } else {
                    p
                });
            }
        }
        Ok(Self {
            rows,
            cols,
            grid,
            src,
            dst,
        })
    }

    pub fn is_identity(&self) -> bool {
        self.src == self.dst
    }

    fn triangles(&self, pts: &[(f64, f64)], i: usize, j: usize) -> [Tri; 2] {
        let n = self.grid + 1;
        let p = |a: usize, b: usize| pts[a * n + b];
        [
            [p(i, j), p(i, j + 1), p(i + 1, j)],
            [p(i + 1, j + 1), p(i + 1, j), p(i, j + 1)],
        ]
    }

    /// Maps a point through the warp from the `from` lattice to the `to`
    /// lattice; `None` outside the lattice.
    fn map(&self, p: (f64, f64), from: &[(f64, f64)], to: &[(f64, f64)]) -> Option<(f64, f64)> {
        for i in 0..self.grid {
            for j in 0..self.grid {
                let a = self.triangles(from, i, j);
                let b = self.triangles(to, i, j);
                for k in 0..2 {
                    if let Some(w) = barycentric(p, &a[k]) {
                        return Some(combine(w, &b[k]));
                    }
                }
            }
        }
        None
    }

    /// Source position sampled for output pixel `(r, c)`.
    fn pull(&self, r: usize, c: usize) -> (f64, f64) {
        let p = (r as f64, c as f64);
        self.map(p, &self.dst, &self.src).unwrap_or(p)
    }

    pub fn warp_image(&self, img: &Image, fill: f64) -> Image {
        if self.is_identity() {
            return img.clone();
        }
        let mut out = img.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (sr, sc) = self.pull(r, c);
                out.set(r, c, img.sample(sr, sc, fill));
            }
        }
        out
    }

    pub fn warp_mask(&self, m: &LabelMask) -> LabelMask {
        if self.is_identity() {
            return m.clone();
        }
        let mut out = m.clone();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (sr, sc) = self.pull(r, c);
                out.labels[r * m.cols + c] = m.sample_nearest(sr, sc);
            }
        }
        out
    }

    /// Where source row `y` (at the middle column) lands after warping.
    pub fn map_row(&self, y: f64) -> f64 {
        let p = (y, center(self.cols));
        self.map(p, &self.src, &self.dst).map_or(y, |q| q.0)
    }
}

pub fn piecewise_affine(img: &Image, grid: usize, jitter_px: f64, seed: u64) -> Result<Image> {
    let mut rng = stream_rng(seed, Stream::Augment, 0);
    let warp = PiecewiseAffine::sample(img.rows, img.cols, grid, jitter_px, &mut rng)?;
    Ok(warp.warp_image(img, PIXEL_MIN))
}

/// Keeps rows `phase, phase + factor, ...` and linearly interpolates back
/// to full height. Rows outside the kept span are linearly extrapolated
/// from the nearest two kept rows, so linear ramps are fixed points.
pub fn vertical_subsample(img: &Image, factor: usize, phase: usize) -> Result<Image> {
    if factor == 0 {
        return Err(CoreError::Precondition("subsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(img.clone());
    }
    let phase = phase % factor.min(img.rows);
    let kept: Vec<usize> = (phase..img.rows).step_by(factor).collect();
    let mut out = img.clone();
    let cols = img.cols;
    let row = |r: usize| &img.data[r * cols..(r + 1) * cols];
    for r in 0..img.rows {
        let dst = &mut out.data[r * cols..(r + 1) * cols];
        let (a, b) = if kept.len() == 1 {
            (kept[0], kept[0])
        } else {
            let k = (r.saturating_sub(phase) / factor).min(kept.len() - 2);
            (kept[k], kept[k + 1])
        };
        if a == b {
            dst.copy_from_slice(row(a));
            continue;
        }
        let t = (r as f64 - a as f64) / (b - a) as f64;
        // t < 0 above the first kept row, t > 1 below the last.
        for ((d, &p), &q) in dst.iter_mut().zip(row(a)).zip(row(b)) {
            *d = if t == 0.0 { p } else { p + (q - p) * t };
        }
    }
    Ok(out)
}

/// One detection training sample after augmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSample {
    pub image: Image,
    pub row: f64,
}

/// Augments an 8-bit projection and its target row. Pixels are rounded
/// and kept in `[-127, 127]`.
pub fn augment_detection(
    img: &Image,
    row: f64,
    cfg: &AugmentConfig,
    seed: u64,
    index: u64,
) -> DetectionSample {
    let mut rng = stream_rng(seed, Stream::Augment, index);
    let mut x = img.clone();
    let mut y = row;
    if rng.gen_bool(cfg.hflip_p) {
        x = hflip(&x);
    }
    if rng.gen_bool(cfg.scale_p) {
        let f = rng.gen_range(cfg.scale_range.0..=cfg.scale_range.1);
        x = scale(&x, f, PIXEL_MIN);
        y = scale_row(y, x.rows, f);
    }
    if rng.gen_bool(cfg.affine_p) {
        if let Ok(w) = PiecewiseAffine::sample(x.rows, x.cols, cfg.affine_grid, cfg.affine_jitter_mm, &mut rng) {
            x = w.warp_image(&x, PIXEL_MIN);
            y = w.map_row(y);
        }
    }
    if rng.gen_bool(cfg.offset_p) {
        let d = rng.gen_range(-cfg.offset_max..=cfg.offset_max);
        x = intensity_offset(&x, d, PIXEL_MIN, PIXEL_MAX);
    }
    if rng.gen_bool(cfg.dropout_p) {
        let r = sample_rect(&mut rng, x.rows, x.cols, cfg.region_max_frac);
        x = region_dropout(&x, r, PIXEL_MIN).expect("rect inside image");
    }
    if rng.gen_bool(cfg.overexposure_p) {
        let r = sample_rect(&mut rng, x.rows, x.cols, cfg.region_max_frac);
        x = overexposure(&x, r, PIXEL_MAX).expect("rect inside image");
    }
    if rng.gen_bool(cfg.subsample_p) {
        let f = rng.gen_range(1..=cfg.subsample_max);
        let phase = rng.gen_range(0..f);
        x = vertical_subsample(&x, f, phase).expect("factor >= 1");
    }
    for v in &mut x.data {
        *v = v.round().clamp(PIXEL_MIN, PIXEL_MAX);
    }
    DetectionSample { image: x, row: y }
}

/// Augments an HU slice and its mask together. `fill` pads uncovered
/// pixels (air).
pub fn augment_segmentation(
    img: &Image,
    mask: &LabelMask,
    spacing_mm: f64,
    cfg: &AugmentConfig,
    seed: u64,
    index: u64,
) -> (Image, LabelMask) {
    const AIR: f64 = -1000.0;
    let mut rng = stream_rng(seed, Stream::Augment, index);
    let (mut x, mut m) = (img.clone(), mask.clone());
    if rng.gen_bool(cfg.hflip_p) {
        x = hflip(&x);
        m = hflip_mask(&m);
    }
    if rng.gen_bool(cfg.scale_p) {
        let f = rng.gen_range(cfg.scale_range.0..=cfg.scale_range.1);
        x = scale(&x, f, AIR);
        m = scale_mask(&m, f);
    }
    if rng.gen_bool(cfg.affine_p) {
        let jitter = cfg.affine_jitter_mm / spacing_mm;
        if let Ok(w) = PiecewiseAffine::sample(x.rows, x.cols, cfg.affine_grid, jitter, &mut rng) {
            x = w.warp_image(&x, AIR);
            m = w.warp_mask(&m);
        }
    }
    if rng.gen_bool(cfg.offset_p) {
        let d = rng.gen_range(-cfg.offset_max..=cfg.offset_max);
        x = intensity_offset(&x, d, -1024.0, f64::INFINITY);
    }
    if cfg.detection_only_on_slices {
        if rng.gen_bool(cfg.dropout_p) {
            let r = sample_rect(&mut rng, x.rows, x.cols, cfg.region_max_frac);
            x = region_dropout(&x, r, AIR).expect("rect inside image");
        }
        if rng.gen_bool(cfg.overexposure_p) {
            let r = sample_rect(&mut rng, x.rows, x.cols, cfg.region_max_frac);
            x = overexposure(&x, r, 1500.0).expect("rect inside image");
        }
        if rng.gen_bool(cfg.subsample_p) {
            let f = rng.gen_range(1..=cfg.subsample_max);
            let phase = rng.gen_range(0..f);
            x = vertical_subsample(&x, f, phase).expect("factor >= 1");
        }
    }
    (x, m)
}
