//! Independent oracles: direct loops and closed forms written without the
//! library's helpers.
#![allow(dead_code)]

use l3scan_core::volume::CtVolume;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_volume(r: &mut ChaCha8Rng, dims: [usize; 3]) -> CtVolume {
    let n = dims.iter().product();
    let vox = (0..n).map(|_| r.gen_range(-1024i16..=3000)).collect();
    let spacing = [r.gen_range(0.5..7.0), r.gen_range(0.5..2.0), r.gen_range(0.5..2.0)];
    CtVolume::new(dims, spacing, vox).unwrap()
}

/// `out[z][x] = max_y v[z][y][x]`.
pub fn frontal_oracle(v: &CtVolume) -> Vec<f64> {
    let [d, h, w] = v.dims();
    let mut out = Vec::new();
    for z in 0..d {
        for x in 0..w {
            let mut m = i16::MIN;
            for y in 0..h {
                m = m.max(v.get(z, y, x));
            }
            out.push(m as f64);
        }
    }
    out
}

/// Columns whose offset from `W/2` is at most `hw` mm, or the column
/// nearest the centre if none is.
pub fn sagittal_columns(w: usize, sx: f64, hw: f64) -> Vec<usize> {
    let c = w as f64 / 2.0;
    let cols: Vec<usize> = (0..w).filter(|&x| (x as f64 - c).abs() <= hw / sx).collect();
    if cols.is_empty() {
        vec![(c.floor() as usize).min(w - 1)]
    } else {
        cols
    }
}

/// `out[z][y] = max over the central columns of v[z][y][x]`.
pub fn sagittal_oracle(v: &CtVolume, hw: f64) -> Vec<f64> {
    let [d, h, w] = v.dims();
    let cols = sagittal_columns(w, v.spacing()[2], hw);
    let mut out = Vec::new();
    for z in 0..d {
        for y in 0..h {
            let mut m = i16::MIN;
            for &x in &cols {
                m = m.max(v.get(z, y, x));
            }
            out.push(m as f64);
        }
    }
    out
}

/// Piecewise-linear 8-bit map with half-up rounding.
pub fn map_oracle(v: f64) -> f64 {
    let c = if v < 100.0 {
        100.0
    } else if v > 1500.0 {
        1500.0
    } else {
        v
    };
    ((c - 100.0) * 254.0 / 1400.0 + 0.5).floor() - 127.0
}

pub fn mean(x: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in x {
        s += v;
    }
    s / x.len() as f64
}

pub fn sd(x: &[f64]) -> f64 {
    let m = mean(x);
    let mut s = 0.0;
    for v in x {
        s += (v - m) * (v - m);
    }
    (s / (x.len() - 1) as f64).sqrt()
}

/// Gamma at a positive integer or half-integer, by the recurrence from
/// `Γ(1) = 1`, `Γ(1/2) = √π`.
pub fn gamma_half(x: f64) -> f64 {
    let mut g = if (x - x.floor()).abs() < 1e-12 {
        1.0
    } else {
        std::f64::consts::PI.sqrt()
    };
    let mut a = if g == 1.0 { 1.0 } else { 0.5 };
    while a < x - 1e-12 {
        g *= a;
        a += 1.0;
    }
    g
}

/// Two-sided Student-t p-value by composite Simpson integration of the
/// density over `[0, |t|]`.
pub fn t_p_quadrature(t: f64, dof: usize) -> f64 {
    let nu = dof as f64;
    let k = gamma_half((nu + 1.0) / 2.0) / ((nu * std::f64::consts::PI).sqrt() * gamma_half(nu / 2.0));
    let f = |x: f64| k * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let n = 200_000;
    let hstep = t.abs() / n as f64;
    let mut s = f(0.0) + f(t.abs());
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * hstep);
    }
    1.0 - 2.0 * s * hstep / 3.0
}
