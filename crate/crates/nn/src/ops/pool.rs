use crate::error::{NnError, Result};
use crate::tensor::Tensor;

/// Flat input index chosen by each output cell of a max reduction, plus the
/// input shape needed to scatter gradients back.
#[derive(Debug, Clone)]
pub struct ArgMax {
    input_shape: Vec<usize>,
    indices: Vec<usize>,
}

impl ArgMax {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// 2x2, stride-2 max pooling. Odd heights/widths behave as if padded on the
/// bottom/right with `-inf`, so the output is `ceil(H/2) x ceil(W/2)`.
pub fn maxpool2d(x: &Tensor) -> Result<(Tensor, ArgMax)> {
    let (n, c, h, w) = x.dims4("maxpool2d")?;
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let data = x.data();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut indices = Vec::with_capacity(out.capacity());
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..ho {
            for ox in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut best_i = usize::MAX;
                for iy in 2 * oy..(2 * oy + 2).min(h) {
                    for ix in 2 * ox..(2 * ox + 2).min(w) {
                        let i = base + iy * w + ix;
                        // strict comparison keeps the first index on ties
                        if best_i == usize::MAX || data[i] > best {
                            best = data[i];
                            best_i = i;
                        }
                    }
                }
                out.push(best);
                indices.push(best_i);
            }
        }
    }
    Ok((
        Tensor::new(&[n, c, ho, wo], out)?,
        ArgMax {
            input_shape: x.shape().to_vec(),
            indices,
        },
    ))
}

/// Routes each output gradient to the input cell that won the max.
pub fn maxpool2d_backward(argmax: &ArgMax, dy: &Tensor) -> Result<Tensor> {
    scatter(argmax, dy, "maxpool2d_backward")
}

fn scatter(argmax: &ArgMax, dy: &Tensor, op: &'static str) -> Result<Tensor> {
    if dy.len() != argmax.indices.len() {
        return Err(NnError::Shape {
            op,
            axis: "len",
            expected: argmax.indices.len(),
            found: dy.len(),
        });
    }
    let mut dx = vec![0.0; argmax.input_shape.iter().product()];
    for (&i, g) in argmax.indices.iter().zip(dy.data()) {
        dx[i] += g;
    }
    Tensor::new(&argmax.input_shape, dx)
}

/// Nearest-neighbour 2x upsampling: `[N,C,H,W] -> [N,C,2H,2W]`.
pub fn upsample_nearest(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4("upsample_nearest")?;
    let data = x.data();
    let mut out = vec![0.0; n * c * 4 * h * w];
    for plane in 0..n * c {
        let src = &data[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * 4 * h * w..(plane + 1) * 4 * h * w];
        for y in 0..h {
            for x in 0..w {
                let v = src[y * w + x];
                let o = 2 * y * 2 * w + 2 * x;
                dst[o] = v;
                dst[o + 1] = v;
                dst[o + 2 * w] = v;
                dst[o + 2 * w + 1] = v;
            }
        }
    }
    Tensor::new(&[n, c, 2 * h, 2 * w], out)
}

/// Sums each 2x2 block of replicated cells back onto its source.
pub fn upsample_nearest_backward(dy: &Tensor) -> Result<Tensor> {
    let (n, c, h2, w2) = dy.dims4("upsample_nearest_backward")?;
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(NnError::Shape {
            op: "upsample_nearest_backward",
            axis: if h2 % 2 != 0 { "H" } else { "W" },
            expected: (h2 / 2) * 2,
            found: h2,
        });
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let g = dy.data();
    let mut out = vec![0.0; n * c * h * w];
    for plane in 0..n * c {
        let src = &g[plane * h2 * w2..(plane + 1) * h2 * w2];
        for y in 0..h {
            for x in 0..w {
                let o = 2 * y * w2 + 2 * x;
                out[plane * h * w + y * w + x] =
                    src[o] + src[o + 1] + src[o + w2] + src[o + w2 + 1];
            }
        }
    }
    Tensor::new(&[n, c, h, w], out)
}

/// Stacks `a` then `b` along the channel axis.
pub fn concat_channels(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, ca, h, w) = a.dims4("concat_channels")?;
    let (_, cb, _, _) = b.dims4("concat_channels")?;
    b.expect_shape("concat_channels", &[n, cb, h, w])?;
    let hw = h * w;
    let mut out = Vec::with_capacity(n * (ca + cb) * hw);
    for i in 0..n {
        out.extend_from_slice(&a.data()[i * ca * hw..(i + 1) * ca * hw]);
        out.extend_from_slice(&b.data()[i * cb * hw..(i + 1) * cb * hw]);
    }
    Tensor::new(&[n, ca + cb, h, w], out)
}

/// Inverse of [`concat_channels`]: the first `ca` channels, then the rest.
pub fn split_channels(d: &Tensor, ca: usize) -> Result<(Tensor, Tensor)> {
    let (n, c, h, w) = d.dims4("split_channels")?;
    if ca == 0 || ca >= c {
        return Err(NnError::Shape {
            op: "split_channels",
            axis: "C",
            expected: c,
            found: ca,
        });
    }
    let cb = c - ca;
    let hw = h * w;
    let mut a = Vec::with_capacity(n * ca * hw);
    let mut b = Vec::with_capacity(n * cb * hw);
    for i in 0..n {
        let s = &d.data()[i * c * hw..(i + 1) * c * hw];
        a.extend_from_slice(&s[..ca * hw]);
        b.extend_from_slice(&s[ca * hw..]);
    }
    Ok((
        Tensor::new(&[n, ca, h, w], a)?,
        Tensor::new(&[n, cb, h, w], b)?,
    ))
}

/// Collapses each image row to its maximum: `[N,C,H,W] -> [N,C,H]`.
pub fn global_horizontal_maxpool(x: &Tensor) -> Result<(Tensor, ArgMax)> {
    let (n, c, h, w) = x.dims4("global_horizontal_maxpool")?;
    let data = x.data();
    let mut out = Vec::with_capacity(n * c * h);
    let mut indices = Vec::with_capacity(n * c * h);
    for row in 0..n * c * h {
        let base = row * w;
        let mut best_i = base;
        for i in base + 1..base + w {
            if data[i] > data[best_i] {
                best_i = i;
            }
        }
        out.push(data[best_i]);
        indices.push(best_i);
    }
    Ok((
        Tensor::new(&[n, c, h], out)?,
        ArgMax {
            input_shape: x.shape().to_vec(),
            indices,
        },
    ))
}

pub fn global_horizontal_maxpool_backward(argmax: &ArgMax, dy: &Tensor) -> Result<Tensor> {
    dy.dims3("global_horizontal_maxpool_backward")?;
    scatter(argmax, dy, "global_horizontal_maxpool_backward")
}
