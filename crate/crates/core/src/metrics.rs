//! Slice error, overlap, muscle measures, agreement statistics, and fold
//! splitting.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{CoreError, Result};

/// Optional HU window for muscle measures (off by default).
pub const MUSCLE_HU_WINDOW: (f64, f64) = (-29.0, 150.0);

/// `(|pred - gt|, |pred - gt| / thickness)`; the slice error is not rounded.
pub fn slice_error(pred_z_mm: f64, gt_z_mm: f64, slice_thickness_mm: f64) -> Result<(f64, f64)> {
    if !(slice_thickness_mm > 0.0) {
        return Err(CoreError::Precondition(format!(
            "slice thickness {slice_thickness_mm} must be positive"
        )));
    }
    let mm = (pred_z_mm - gt_z_mm).abs();
    Ok((mm, mm / slice_thickness_mm))
}

/// `2|a ∩ b| / (|a| + |b|)`, with two empty masks scoring 1.
pub fn dice(a: &[bool], b: &[bool]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::Dimension(format!(
            "dice over masks of {} and {} pixels",
            a.len(),
            b.len()
        )));
    }
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.iter().zip(b) {
        inter += (x && y) as usize;
        na += x as usize;
        nb += y as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Foreground area in cm², optionally counting only pixels whose HU falls
/// in `window` (inclusive).
pub fn muscle_area_cm2(
    mask: &[bool],
    spacing: [f64; 2],
    window: Option<(f64, f64)>,
    image: Option<&[f64]>,
) -> Result<f64> {
    if spacing.iter().any(|s| !(*s > 0.0)) {
        return Err(CoreError::Precondition(format!("spacing {spacing:?}")));
    }
    let count = match (window, image) {
        (None, _) => mask.iter().filter(|&&m| m).count(),
        (Some(_), None) => {
            return Err(CoreError::Argument("HU window given without an image".into()))
        }
        (Some((lo, hi)), Some(img)) => {
            if img.len() != mask.len() {
                return Err(CoreError::Dimension(format!(
                    "mask of {} pixels vs image of {}",
                    mask.len(),
                    img.len()
                )));
            }
            mask.iter()
                .zip(img)
                .filter(|(&m, &v)| m && v >= lo && v <= hi)
                .count()
        }
    };
    Ok(count as f64 * spacing[0] * spacing[1] / 100.0)
}

/// Mean HU over the foreground.
pub fn muscle_attenuation(mask: &[bool], image: &[f64]) -> Result<f64> {
    if mask.len() != image.len() {
        return Err(CoreError::Dimension(format!(
            "mask of {} pixels vs image of {}",
            mask.len(),
            image.len()
        )));
    }
    let (mut sum, mut n) = (0.0, 0usize);
    for (&m, &v) in mask.iter().zip(image) {
        if m {
            sum += v;
            n += 1;
        }
    }
    if n == 0 {
        return Err(CoreError::Undefined("attenuation of an empty mask".into()));
    }
    Ok(sum / n as f64)
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1); zero for a single value.
fn sample_sd(x: &[f64], m: f64) -> f64 {
    if x.len() < 2 {
        return 0.0;
    }
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64).sqrt()
}

fn differences(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(CoreError::Dimension(format!(
            "paired series of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(CoreError::Insufficient(format!(
            "{} pairs (need at least 2)",
            a.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x - y).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlandAltman {
    pub mean_diff: f64,
    pub sd_diff: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

/// Differences `a - b`: mean, sample sd, and `mean ± 1.96 sd`.
pub fn bland_altman(a: &[f64], b: &[f64]) -> Result<BlandAltman> {
    let d = differences(a, b)?;
    let m = mean(&d);
    let sd = sample_sd(&d, m);
    Ok(BlandAltman {
        mean_diff: m,
        sd_diff: sd,
        loa_low: m - 1.96 * sd,
        loa_high: m + 1.96 * sd,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    pub p: f64,
    pub dof: usize,
}

/// Two-sided paired t-test on `a - b`. With zero spread, a zero mean gives
/// `t = 0, p = 1` and a non-zero mean gives `t = ±inf, p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    let d = differences(a, b)?;
    let n = d.len();
    let m = mean(&d);
    let sd = sample_sd(&d, m);
    let dof = n - 1;
    if sd == 0.0 {
        return Ok(if m == 0.0 {
            TTest { t: 0.0, p: 1.0, dof }
        } else {
            TTest {
                t: m.signum() * f64::INFINITY,
                p: 0.0,
                dof,
            }
        });
    }
    let t = m / (sd / (n as f64).sqrt());
    Ok(TTest {
        t,
        p: t_two_sided_p(t, dof as f64),
        dof,
    })
}

/// `P(|T| >= |t|)` for Student's t with `dof` degrees of freedom.
pub fn t_two_sided_p(t: f64, dof: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let dist = StudentsT::new(0.0, 1.0, dof).expect("positive dof");
    (2.0 * dist.sf(t.abs())).min(1.0)
}

/// Volume identifiers assigned to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub folds: Vec<Vec<String>>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|x| x == id))
    }

    /// Identifiers outside fold `i`.
    pub fn train_ids(&self, i: usize) -> Vec<String> {
        self.folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().cloned())
            .collect()
    }
}

/// Seeded shuffle of the distinct ids, then round-robin assignment. Repeated
/// ids (several slices of one volume) land in a single fold.
pub fn kfold_split<S: AsRef<str>>(volume_ids: &[S], k: usize, seed: u64) -> Result<FoldSplit> {
    let mut ids: Vec<String> = Vec::new();
    for id in volume_ids {
        if !ids.iter().any(|x| x == id.as_ref()) {
            ids.push(id.as_ref().to_string());
        }
    }
    if k == 0 || k > ids.len() {
        return Err(CoreError::Precondition(format!(
            "k = {k} folds for {} volumes",
            ids.len()
        )));
    }
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    Ok(FoldSplit { folds })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
    pub max: f64,
    pub count_gt_10: usize,
}

impl Stats {
    pub fn of(x: &[f64]) -> Result<Self> {
        if x.is_empty() {
            return Err(CoreError::Insufficient("no values to summarize".into()));
        }
        let m = mean(x);
        let mut s = x.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            (s[n / 2 - 1] + s[n / 2]) / 2.0
        };
        Ok(Self {
            n,
            mean: m,
            std: sample_sd(x, m),
            median,
            max: s[n - 1],
            count_gt_10: x.iter().filter(|&&v| v > 10.0).count(),
        })
    }
}

/// Summary of detection errors in both units, each computed from its own
/// per-case values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSummary {
    pub mm: Stats,
    pub slices: Stats,
}

/// `errors` holds `(err_mm, err_slices)` per case.
pub fn summarize_errors(errors: &[(f64, f64)]) -> Result<ErrorSummary> {
    let mm: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let sl: Vec<f64> = errors.iter().map(|e| e.1).collect();
    Ok(ErrorSummary {
        mm: Stats::of(&mm)?,
        slices: Stats::of(&sl)?,
    })
}
