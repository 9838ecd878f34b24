use super::gemm::{gemm, MatRef};
use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Gradients of a convolution with respect to its input and parameters.
#[derive(Debug, Clone)]
pub struct Conv2dGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

struct Geometry {
    n: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
    k: usize,
}

fn geometry(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Geometry> {
    let (n, c_in, h, w) = x.dims4("conv2d")?;
    let (c_out, wc_in, kh, kw) = weight.dims4("conv2d")?;
    if wc_in != c_in {
        return Err(NnError::Shape {
            op: "conv2d",
            axis: "C",
            expected: wc_in,
            found: c_in,
        });
    }
    if kh != kw || kh % 2 == 0 {
        return Err(NnError::Shape {
            op: "conv2d",
            axis: "kernel",
            expected: kh | 1,
            found: kw,
        });
    }
    if bias.len() != c_out {
        return Err(NnError::Shape {
            op: "conv2d",
            axis: "bias",
            expected: c_out,
            found: bias.len(),
        });
    }
    Ok(Geometry {
        n,
        c_in,
        c_out,
        h,
        w,
        k: kh,
    })
}

/// Target size of one im2col tile in elements; keeps the patch matrix for
/// a band of output rows cache-resident.
const TILE_ELEMS: usize = 1 << 17;

/// Output rows per band for a layer with `kk` patch rows and width `w`.
fn band_rows(kk: usize, h: usize, w: usize) -> usize {
    (TILE_ELEMS / (kk * w).max(1)).clamp(1, h)
}

/// Unrolls output rows `y0..y1` of one `(C, H, W)` image into
/// `(C*k*k, (y1-y0)*W)` patch columns with zero padding `k/2`.
#[allow(clippy::too_many_arguments)]
fn im2col(
    x: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    y0: usize,
    y1: usize,
    col: &mut [f64],
) {
    let pad = k / 2;
    let hw = h * w;
    let span = (y1 - y0) * w;
    for c in 0..c_in {
        let plane = &x[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut col[((c * k + ky) * k + kx) * span..][..span];
                // Valid output columns: 0 <= ox + kx - pad < w.
                let ox_lo = pad.saturating_sub(kx);
                let ox_hi = (w + pad).saturating_sub(kx).min(w);
                for oy in y0..y1 {
                    let out = &mut row[(oy - y0) * w..(oy - y0 + 1) * w];
                    let iy = oy + ky;
                    if iy < pad || iy - pad >= h || ox_lo >= ox_hi {
                        out.fill(0.0);
                        continue;
                    }
                    let src = &plane[(iy - pad) * w..(iy - pad + 1) * w];
                    out[..ox_lo].fill(0.0);
                    out[ox_hi..].fill(0.0);
                    let ix_lo = ox_lo + kx - pad;
                    out[ox_lo..ox_hi].copy_from_slice(&src[ix_lo..ix_lo + (ox_hi - ox_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters the patch columns of output rows
/// `y0..y1` back onto the image, accumulating overlaps.
#[allow(clippy::too_many_arguments)]
fn col2im(
    col: &[f64],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    y0: usize,
    y1: usize,
    x: &mut [f64],
) {
    let pad = k / 2;
    let hw = h * w;
    let span = (y1 - y0) * w;
    for c in 0..c_in {
        let plane = &mut x[c * hw..(c + 1) * hw];
        for ky in 0..k {
            for kx in 0..k {
                let row = &col[((c * k + ky) * k + kx) * span..][..span];
                let ox_lo = pad.saturating_sub(kx);
                let ox_hi = (w + pad).saturating_sub(kx).min(w);
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in y0..y1 {
                    let iy = oy + ky;
                    if iy < pad || iy - pad >= h {
                        continue;
                    }
                    let dst = &mut plane[(iy - pad) * w..(iy - pad + 1) * w];
                    let ix_lo = ox_lo + kx - pad;
                    let src = &row[(oy - y0) * w + ox_lo..(oy - y0) * w + ox_hi];
                    for (d, s) in dst[ix_lo..ix_lo + src.len()].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Stride-1 cross-correlation with zero "same" padding.
///
/// `x` is `[N, C, H, W]`, `weight` is `[C', C, k, k]` with odd `k`, `bias`
/// has `C'` entries. Output is `[N, C', H, W]`.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = geometry(x, weight, bias)?;
    let hw = g.h * g.w;
    let kk = g.c_in * g.k * g.k;
    let band = band_rows(kk, g.h, g.w);
    let mut out = vec![0.0; g.n * g.c_out * hw];
    let mut col = if g.k == 1 {
        Vec::new()
    } else {
        vec![0.0; kk * band * g.w]
    };
    let wmat = MatRef::rows(weight.data(), kk);
    for n in 0..g.n {
        let xs = &x.data()[n * g.c_in * hw..(n + 1) * g.c_in * hw];
        let ys = &mut out[n * g.c_out * hw..(n + 1) * g.c_out * hw];
        for (o, b) in bias.data().iter().enumerate() {
            ys[o * hw..(o + 1) * hw].fill(*b);
        }
        if g.k == 1 {
            gemm(g.c_out, kk, hw, wmat, MatRef::rows(xs, hw), 1.0, ys, hw);
            continue;
        }
        for y0 in (0..g.h).step_by(band) {
            let y1 = (y0 + band).min(g.h);
            let span = (y1 - y0) * g.w;
            let tile = &mut col[..kk * span];
            im2col(xs, g.c_in, g.h, g.w, g.k, y0, y1, tile);
            gemm(
                g.c_out,
                kk,
                span,
                wmat,
                MatRef::rows(tile, span),
                1.0,
                &mut ys[y0 * g.w..],
                hw,
            );
        }
    }
    Tensor::new(&[g.n, g.c_out, g.h, g.w], out)
}

/// Exact gradients of [`conv2d`] given the upstream gradient `dy`.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    dy: &Tensor,
) -> Result<Conv2dGrads> {
    let g = geometry(x, weight, bias)?;
    dy.expect_shape("conv2d_backward", &[g.n, g.c_out, g.h, g.w])?;
    let hw = g.h * g.w;
    let kk = g.c_in * g.k * g.k;
    let band = band_rows(kk, g.h, g.w);
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; weight.len()];
    let mut db = vec![0.0; g.c_out];
    let (mut col, mut dcol) = if g.k == 1 {
        (Vec::new(), Vec::new())
    } else {
        (vec![0.0; kk * band * g.w], vec![0.0; kk * band * g.w])
    };
    let wt = MatRef::transposed(weight.data(), kk);
    for n in 0..g.n {
        let xs = &x.data()[n * g.c_in * hw..(n + 1) * g.c_in * hw];
        let dys = &dy.data()[n * g.c_out * hw..(n + 1) * g.c_out * hw];
        for (o, acc) in db.iter_mut().enumerate() {
            *acc += dys[o * hw..(o + 1) * hw].iter().sum::<f64>();
        }
        let dxs = &mut dx[n * g.c_in * hw..(n + 1) * g.c_in * hw];
        if g.k == 1 {
            gemm(
                g.c_out,
                hw,
                kk,
                MatRef::rows(dys, hw),
                MatRef::transposed(xs, hw),
                1.0,
                &mut dw,
                kk,
            );
            gemm(kk, g.c_out, hw, wt, MatRef::rows(dys, hw), 0.0, dxs, hw);
            continue;
        }
        for y0 in (0..g.h).step_by(band) {
            let y1 = (y0 + band).min(g.h);
            let span = (y1 - y0) * g.w;
            let tile = &mut col[..kk * span];
            im2col(xs, g.c_in, g.h, g.w, g.k, y0, y1, tile);
            let dy_band = MatRef::rows(&dys[y0 * g.w..], hw);
            gemm(
                g.c_out,
                span,
                kk,
                dy_band,
                MatRef::transposed(tile, span),
                1.0,
                &mut dw,
                kk,
            );
            let dtile = &mut dcol[..kk * span];
            gemm(kk, g.c_out, span, wt, dy_band, 0.0, dtile, span);
            col2im(dtile, g.c_in, g.h, g.w, g.k, y0, y1, dxs);
        }
    }
    Ok(Conv2dGrads {
        input: Tensor::new(x.shape(), dx)?,
        weight: Tensor::new(weight.shape(), dw)?,
        bias: Tensor::new(&[g.c_out], db)?,
    })
}
