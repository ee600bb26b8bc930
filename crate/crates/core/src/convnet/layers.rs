//! Forward kernels and their input-space adjoints.
//!
//! Convolutions are 3×3, stride 1, zero padding 1 cross-correlations,
//! lowered to a matrix product over horizontal bands of output rows
//! (im2col). Bands are independent and each product is single-threaded,
//! so results do not depend on how rayon schedules the bands.

use rayon::prelude::*;

use super::topology::PoolMode;
use crate::error::{Error, Result};
use crate::tensor::{gemm, Tensor};

/// Upper bound on the entries of one band's im2col buffer.
const BAND_ENTRIES: usize = 1 << 20;

fn chw(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::mismatch(op, t.shape(), &[0, 0, 0])),
    }
}

/// Valid destination columns `x` for a tap at horizontal offset `dx`
/// (source column `x + dx - 1` must land inside `0..width`).
#[inline]
fn column_span(dx: usize, width: usize) -> (usize, usize) {
    let lo = 1usize.saturating_sub(dx);
    let hi = (width + 1 - dx).min(width);
    (lo, hi)
}

fn check_conv_shapes(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize, usize, usize)> {
    let (c_in, h, w) = chw(input, "conv2d")?;
    let c_out = match *weights.shape() {
        [o, c, 3, 3] if c == c_in => o,
        _ => return Err(Error::mismatch("conv2d", input.shape(), weights.shape())),
    };
    if bias.shape() != [c_out] {
        return Err(Error::mismatch("conv2d", weights.shape(), bias.shape()));
    }
    Ok((c_in, c_out, h, w))
}

/// Unrolls rows `y0..y1` of every 3×3 neighbourhood into `col`, laid
/// out as (c_in·9) × ((y1 − y0)·w).
fn im2col(src: &[f64], c_in: usize, h: usize, w: usize, y0: usize, y1: usize, col: &mut [f64]) {
    let span = (y1 - y0) * w;
    for c in 0..c_in {
        let src_c = &src[c * h * w..(c + 1) * h * w];
        for dy in 0..3 {
            for dx in 0..3 {
                let row = &mut col[(c * 9 + dy * 3 + dx) * span..][..span];
                let (lo, hi) = column_span(dx, w);
                for y in y0..y1 {
                    let d = &mut row[(y - y0) * w..(y - y0 + 1) * w];
                    let sy = y + dy;
                    if sy == 0 || sy > h {
                        d.fill(0.0);
                        continue;
                    }
                    let s = &src_c[(sy - 1) * w..sy * w];
                    d[..lo].fill(0.0);
                    d[hi..].fill(0.0);
                    if lo < hi {
                        d[lo..hi].copy_from_slice(&s[lo + dx - 1..hi + dx - 1]);
                    }
                }
            }
        }
    }
}

/// Cross-correlation of a (c_in, h, w) input with a (c_out, c_in, 3, 3)
/// kernel given as flat data.
fn correlate(src: &[f64], kernel: &[f64], bias: Option<&[f64]>, c_in: usize, c_out: usize, h: usize, w: usize) -> Vec<f64> {
    let plane = h * w;
    let rows = (BAND_ENTRIES / (c_in * 9 * w).max(1)).clamp(1, h);
    let bands: Vec<(usize, usize)> = (0..h).step_by(rows).map(|y0| (y0, (y0 + rows).min(h))).collect();
    let products: Vec<Vec<f64>> = bands
        .par_iter()
        .map(|&(y0, y1)| {
            let span = (y1 - y0) * w;
            let mut col = vec![0.0; c_in * 9 * span];
            im2col(src, c_in, h, w, y0, y1, &mut col);
            let mut prod = vec![0.0; c_out * span];
            gemm(c_out, c_in * 9, span, kernel, &col, &mut prod);
            prod
        })
        .collect();
    let mut out = vec![0.0; c_out * plane];
    for (&(y0, y1), prod) in bands.iter().zip(&products) {
        let span = (y1 - y0) * w;
        for o in 0..c_out {
            let b = bias.map_or(0.0, |b| b[o]);
            let dst = &mut out[o * plane + y0 * w..][..span];
            for (d, p) in dst.iter_mut().zip(&prod[o * span..(o + 1) * span]) {
                *d = p + b;
            }
        }
    }
    out
}

/// 3×3 same-size convolution: `out[o] = bias[o] + Σ_c w[o][c] ⋆ in[c]`.
pub fn conv2d(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c_in, c_out, h, w) = check_conv_shapes(input, weights, bias)?;
    let out = correlate(input.data(), weights.data(), Some(bias.data()), c_in, c_out, h, w);
    Tensor::from_vec(&[c_out, h, w], out)
}

/// Gradient of a conv2d output with respect to its input (the transpose
/// convolution with the same kernel). Bias does not enter.
///
/// Computed as a forward correlation with the kernel transposed over
/// channels and rotated by 180°.
pub fn conv2d_backward_input(grad_out: &Tensor, weights: &Tensor) -> Result<Tensor> {
    let (c_out, h, w) = chw(grad_out, "conv2d_backward")?;
    let c_in = match *weights.shape() {
        [o, c, 3, 3] if o == c_out => c,
        _ => return Err(Error::mismatch("conv2d_backward", grad_out.shape(), weights.shape())),
    };
    let k = weights.data();
    let mut flipped = vec![0.0; k.len()];
    for o in 0..c_out {
        for c in 0..c_in {
            for t in 0..9 {
                flipped[(c * c_out + o) * 9 + 8 - t] = k[(o * c_in + c) * 9 + t];
            }
        }
    }
    let out = correlate(grad_out.data(), &flipped, None, c_out, c_in, h, w);
    Tensor::from_vec(&[c_in, h, w], out)
}

pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

/// Passes gradient only where the forward input was strictly positive.
pub fn relu_backward(grad_out: &Tensor, forward_input: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != forward_input.shape() {
        return Err(Error::mismatch("relu_backward", grad_out.shape(), forward_input.shape()));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(forward_input.data())
        .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::from_vec(grad_out.shape(), data)
}

/// Result of a 2×2 pooling pass. For max pooling `argmax` holds, per output
/// cell, the flat index of the input cell that won.
#[derive(Debug, Clone)]
pub struct PoolOutput {
    pub output: Tensor,
    pub argmax: Option<Vec<usize>>,
}

/// 2×2, stride-2 pooling. Odd extents produce a final partial window that
/// covers only the cells that exist; average pooling divides by that count.
pub fn pool2(input: &Tensor, mode: PoolMode) -> Result<PoolOutput> {
    let (c, h, w) = chw(input, "pool2")?;
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let src = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::new();
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                let mut sum = 0.0;
                let mut count = 0usize;
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for x in 2 * ox..(2 * ox + 2).min(w) {
                        let idx = base + y * w + x;
                        let v = src[idx];
                        // strict comparison keeps the first maximum in row-major order
                        if v > best {
                            best = v;
                            best_idx = idx;
                        }
                        sum += v;
                        count += 1;
                    }
                }
                match mode {
                    PoolMode::Max => {
                        out.push(best);
                        argmax.push(best_idx);
                    }
                    PoolMode::Avg => out.push(sum / count as f64),
                }
            }
        }
    }
    Ok(PoolOutput {
        output: Tensor::from_vec(&[c, oh, ow], out)?,
        argmax: matches!(mode, PoolMode::Max).then_some(argmax),
    })
}

/// Adjoint of [`pool2`]. `input_shape` is the (C, H, W) shape of the
/// forward input.
pub fn pool2_backward(
    grad_out: &Tensor,
    input_shape: &[usize],
    mode: PoolMode,
    argmax: Option<&[usize]>,
) -> Result<Tensor> {
    let (c, h, w) = match *input_shape {
        [c, h, w] => (c, h, w),
        _ => return Err(Error::mismatch("pool2_backward", input_shape, &[0, 0, 0])),
    };
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    if grad_out.shape() != [c, oh, ow] {
        return Err(Error::mismatch("pool2_backward", grad_out.shape(), &[c, oh, ow]));
    }
    let g = grad_out.data();
    let mut out = vec![0.0; c * h * w];
    match mode {
        PoolMode::Max => {
            let argmax = argmax.ok_or_else(|| {
                Error::Config("max-pool backward requires forward argmax indices".into())
            })?;
            if argmax.len() != g.len() {
                return Err(Error::mismatch("pool2_backward", &[argmax.len()], &[g.len()]));
            }
            for (&idx, &gv) in argmax.iter().zip(g) {
                out[idx] += gv;
            }
        }
        PoolMode::Avg => {
            for ch in 0..c {
                let base = ch * h * w;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let ys = 2 * oy..(2 * oy + 2).min(h);
                        let xs = 2 * ox..(2 * ox + 2).min(w);
                        let share = g[(ch * oh + oy) * ow + ox] / (ys.len() * xs.len()) as f64;
                        for y in ys {
                            for x in xs.clone() {
                                out[base + y * w + x] += share;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(input_shape, out)
}
