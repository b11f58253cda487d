//! Differentiable primitives: dilated cross-correlation, relu, 2x2 max-pool,
//! bilinear upsampling, channel concat, and the logistic activation. Each
//! forward has a manual backward that accumulates into the inputs' gradient
//! buffers, so values flow once and gradients flow once in reverse.

use super::tensor::{Shape4, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Valid output-row/col range for a kernel tap offset `d` on an axis of
/// length `len`: output positions o with 0 <= o + d < len.
#[inline]
fn tap_range(d: isize, len: usize) -> (usize, usize) {
    let lo = (-d).max(0) as usize;
    let hi = (len as isize).min(len as isize - d).max(0) as usize;
    (lo, hi)
}

/// Cross-correlation with dilation, stride 1 and zero same-padding, so the
/// spatial size is preserved. Weight layout: (c_out, c_in, kh, kw); bias
/// layout: (1, c_out, 1, 1).
pub fn conv2d<S: Scalar>(
    x: &Tensor<S>,
    weight: &Tensor<S>,
    bias: &Tensor<S>,
    dilation: usize,
) -> Result<Tensor<S>> {
    let xs = x.shape();
    let ws = weight.shape();
    let (co, ci, kh, kw) = (ws.n, ws.c, ws.h, ws.w);
    if ci != xs.c {
        return Err(Error::shape(format!(
            "conv2d: input channels {} != kernel channels {ci}",
            xs.c
        )));
    }
    if bias.len() != co {
        return Err(Error::shape(format!(
            "conv2d: bias length {} != output channels {co}",
            bias.len()
        )));
    }
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::config(format!("conv2d: even kernel {kh}x{kw}")));
    }
    let (h, w) = (xs.h, xs.w);
    let pad_h = (dilation * (kh - 1) / 2) as isize;
    let pad_w = (dilation * (kw - 1) / 2) as isize;
    let mut out = Tensor::zeros(Shape4::new(xs.n, co, h, w));
    let plane = h * w;

    for n in 0..xs.n {
        for oc in 0..co {
            let b = bias.data()[oc];
            let o_base = (n * co + oc) * plane;
            let o_plane = &mut out.data_mut()[o_base..o_base + plane];
            for v in o_plane.iter_mut() {
                *v = b;
            }
            for ic in 0..ci {
                let x_base = (n * ci + ic) * plane;
                let x_plane = &x.data()[x_base..x_base + plane];
                for ky in 0..kh {
                    let dy = (ky * dilation) as isize - pad_h;
                    let (y_lo, y_hi) = tap_range(dy, h);
                    for kx in 0..kw {
                        let wk = weight.data()[((oc * ci + ic) * kh + ky) * kw + kx];
                        let dx = (kx * dilation) as isize - pad_w;
                        let (x_lo, x_hi) = tap_range(dx, w);
                        if x_lo >= x_hi {
                            continue;
                        }
                        for yo in y_lo..y_hi {
                            let yi = (yo as isize + dy) as usize;
                            let src_lo = yi * w + (x_lo as isize + dx) as usize;
                            let src = &x_plane[src_lo..src_lo + (x_hi - x_lo)];
                            let dst = &mut o_plane[yo * w + x_lo..yo * w + x_hi];
                            for (o, &i) in dst.iter_mut().zip(src) {
                                *o = *o + wk * i;
                            }
                        }
                    }
                }
            }
        }
    }
    out.debug_assert_finite();
    Ok(out)
}

/// Backward for `conv2d`: accumulates input-, kernel- and bias-gradients
/// from the output gradient.
pub fn conv2d_backward<S: Scalar>(
    x: &mut Tensor<S>,
    weight: &mut Tensor<S>,
    bias: &mut Tensor<S>,
    out: &Tensor<S>,
    dilation: usize,
) {
    let xs = x.shape();
    let ws = weight.shape();
    let (co, ci, kh, kw) = (ws.n, ws.c, ws.h, ws.w);
    let (h, w) = (xs.h, xs.w);
    let pad_h = (dilation * (kh - 1) / 2) as isize;
    let pad_w = (dilation * (kw - 1) / 2) as isize;
    let plane = h * w;

    let (x_data, x_grad) = x.data_and_grad_mut();
    let (w_data, w_grad) = weight.data_and_grad_mut();
    let b_grad = bias.grad_mut();
    let gy = out.grad();

    for n in 0..xs.n {
        for oc in 0..co {
            let g_base = (n * co + oc) * plane;
            let g_plane = &gy[g_base..g_base + plane];
            // Bias gradient: plain sum over the output plane.
            let mut acc = S::zero();
            for &g in g_plane {
                acc += g;
            }
            b_grad[oc] += acc;

            for ic in 0..ci {
                let x_base = (n * ci + ic) * plane;
                for ky in 0..kh {
                    let dy = (ky * dilation) as isize - pad_h;
                    let (y_lo, y_hi) = tap_range(dy, h);
                    for kx in 0..kw {
                        let widx = ((oc * ci + ic) * kh + ky) * kw + kx;
                        let wk = w_data[widx];
                        let dx = (kx * dilation) as isize - pad_w;
                        let (x_lo, x_hi) = tap_range(dx, w);
                        if x_lo >= x_hi {
                            continue;
                        }
                        let mut w_acc = S::zero();
                        for yo in y_lo..y_hi {
                            let yi = (yo as isize + dy) as usize;
                            let src_lo = x_base + yi * w + (x_lo as isize + dx) as usize;
                            let g_row = &g_plane[yo * w + x_lo..yo * w + x_hi];
                            // dL/dw += gy . x (shifted window)
                            let x_row = &x_data[src_lo..src_lo + (x_hi - x_lo)];
                            for (&g, &xv) in g_row.iter().zip(x_row) {
                                w_acc += g * xv;
                            }
                            // dL/dx += w * gy
                            let gx_row = &mut x_grad[src_lo..src_lo + (x_hi - x_lo)];
                            for (gx, &g) in gx_row.iter_mut().zip(g_row) {
                                *gx = *gx + wk * g;
                            }
                        }
                        w_grad[widx] += w_acc;
                    }
                }
            }
        }
    }
}

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut out = Tensor::zeros(x.shape());
    for (o, &v) in out.data_mut().iter_mut().zip(x.data()) {
        *o = v.max(S::zero());
    }
    out
}

pub fn relu_backward<S: Scalar>(x: &mut Tensor<S>, out: &Tensor<S>) {
    let (_, x_grad) = x.data_and_grad_mut();
    for ((gx, &y), &gy) in x_grad.iter_mut().zip(out.data()).zip(out.grad()) {
        if y > S::zero() {
            *gx = *gx + gy;
        }
    }
}

/// 2x2 max-pooling with stride 2; spatial dims must be even. Returns the
/// pooled tensor and the flat argmax index of every output element.
pub fn maxpool2<S: Scalar>(x: &Tensor<S>) -> Result<(Tensor<S>, Vec<u32>)> {
    let xs = x.shape();
    if xs.h % 2 != 0 || xs.w % 2 != 0 {
        return Err(Error::shape(format!(
            "maxpool2: odd spatial dims {}x{}",
            xs.h, xs.w
        )));
    }
    let (oh, ow) = (xs.h / 2, xs.w / 2);
    let mut out = Tensor::zeros(Shape4::new(xs.n, xs.c, oh, ow));
    let mut argmax = vec![0u32; out.len()];
    let data = x.data();
    let mut oi = 0;
    for n in 0..xs.n {
        for c in 0..xs.c {
            let base = (n * xs.c + c) * xs.plane();
            for oy in 0..oh {
                for ox in 0..ow {
                    let i00 = base + (2 * oy) * xs.w + 2 * ox;
                    let i01 = i00 + 1;
                    let i10 = i00 + xs.w;
                    let i11 = i10 + 1;
                    let mut best = i00;
                    if data[i01] > data[best] {
                        best = i01;
                    }
                    if data[i10] > data[best] {
                        best = i10;
                    }
                    if data[i11] > data[best] {
                        best = i11;
                    }
                    out.data_mut()[oi] = data[best];
                    argmax[oi] = best as u32;
                    oi += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

pub fn maxpool2_backward<S: Scalar>(x: &mut Tensor<S>, out: &Tensor<S>, argmax: &[u32]) {
    let x_grad = x.grad_mut();
    for (&arg, &gy) in argmax.iter().zip(out.grad()) {
        x_grad[arg as usize] += gy;
    }
}

/// Per-axis source taps for bilinear sampling with sample centers at
/// (i + 0.5) / factor - 0.5 (align-corners = false), edge-clamped.
fn bilinear_taps(out_len: usize, in_len: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..out_len)
        .map(|o| {
            let src = ((o as f64 + 0.5) / factor as f64 - 0.5)
                .max(0.0)
                .min(in_len as f64 - 1.0);
            let i0 = src.floor() as usize;
            let i1 = (i0 + 1).min(in_len - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn bilinear_upsample<S: Scalar>(x: &Tensor<S>, factor: usize) -> Result<Tensor<S>> {
    if !(factor == 2 || factor == 4) {
        return Err(Error::config(format!("upsample factor {factor} not in {{2,4}}")));
    }
    let xs = x.shape();
    let (oh, ow) = (xs.h * factor, xs.w * factor);
    let rows = bilinear_taps(oh, xs.h, factor);
    let cols = bilinear_taps(ow, xs.w, factor);
    let mut out = Tensor::zeros(Shape4::new(xs.n, xs.c, oh, ow));
    for n in 0..xs.n {
        for c in 0..xs.c {
            let base = (n * xs.c + c) * xs.plane();
            let o_base = (n * xs.c + c) * oh * ow;
            for (oy, &(y0, y1, ty)) in rows.iter().enumerate() {
                let ty = S::from_f64c(ty);
                let one_ty = S::one() - ty;
                for (ox, &(x0, x1, tx)) in cols.iter().enumerate() {
                    let tx = S::from_f64c(tx);
                    let one_tx = S::one() - tx;
                    let v = one_ty * one_tx * x.data()[base + y0 * xs.w + x0]
                        + one_ty * tx * x.data()[base + y0 * xs.w + x1]
                        + ty * one_tx * x.data()[base + y1 * xs.w + x0]
                        + ty * tx * x.data()[base + y1 * xs.w + x1];
                    out.data_mut()[o_base + oy * ow + ox] = v;
                }
            }
        }
    }
    Ok(out)
}

pub fn bilinear_upsample_backward<S: Scalar>(x: &mut Tensor<S>, out: &Tensor<S>, factor: usize) {
    let xs = x.shape();
    let (oh, ow) = (xs.h * factor, xs.w * factor);
    let rows = bilinear_taps(oh, xs.h, factor);
    let cols = bilinear_taps(ow, xs.w, factor);
    let x_grad = x.grad_mut();
    for n in 0..xs.n {
        for c in 0..xs.c {
            let base = (n * xs.c + c) * xs.plane();
            let o_base = (n * xs.c + c) * oh * ow;
            for (oy, &(y0, y1, ty)) in rows.iter().enumerate() {
                let ty = S::from_f64c(ty);
                let one_ty = S::one() - ty;
                for (ox, &(x0, x1, tx)) in cols.iter().enumerate() {
                    let tx = S::from_f64c(tx);
                    let one_tx = S::one() - tx;
                    let gy = out.grad()[o_base + oy * ow + ox];
                    x_grad[base + y0 * xs.w + x0] += one_ty * one_tx * gy;
                    x_grad[base + y0 * xs.w + x1] += one_ty * tx * gy;
                    x_grad[base + y1 * xs.w + x0] += ty * one_tx * gy;
                    x_grad[base + y1 * xs.w + x1] += ty * tx * gy;
                }
            }
        }
    }
}

/// Channel concatenation; all inputs must share batch and spatial dims.
pub fn concat<S: Scalar>(xs: &[&Tensor<S>]) -> Result<Tensor<S>> {
    let first = xs.first().ok_or_else(|| Error::shape("concat: empty"))?;
    let s0 = first.shape();
    let mut c_total = 0;
    for x in xs {
        let s = x.shape();
        if (s.n, s.h, s.w) != (s0.n, s0.h, s0.w) {
            return Err(Error::shape("concat: incompatible shapes"));
        }
        c_total += s.c;
    }
    let mut out = Tensor::zeros(Shape4::new(s0.n, c_total, s0.h, s0.w));
    let plane = s0.plane();
    for n in 0..s0.n {
        let mut c_off = 0;
        for x in xs {
            let c = x.shape().c;
            let src = &x.data()[n * c * plane..(n + 1) * c * plane];
            let dst_lo = (n * c_total + c_off) * plane;
            out.data_mut()[dst_lo..dst_lo + c * plane].copy_from_slice(src);
            c_off += c;
        }
    }
    Ok(out)
}

pub fn concat_backward<S: Scalar>(xs: &mut [&mut Tensor<S>], out: &Tensor<S>) {
    let s_out = out.shape();
    let plane = s_out.plane();
    let c_total = s_out.c;
    for n in 0..s_out.n {
        let mut c_off = 0;
        for x in xs.iter_mut() {
            let c = x.shape().c;
            let src_lo = (n * c_total + c_off) * plane;
            let src = &out.grad()[src_lo..src_lo + c * plane];
            let dst = &mut x.grad_mut()[n * c * plane..(n + 1) * c * plane];
            for (d, &g) in dst.iter_mut().zip(src) {
                *d = *d + g;
            }
            c_off += c;
        }
    }
}

pub fn logistic<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut out = Tensor::zeros(x.shape());
    for (o, &v) in out.data_mut().iter_mut().zip(x.data()) {
        *o = S::one() / (S::one() + (-v).exp());
    }
    out
}

pub fn logistic_backward<S: Scalar>(x: &mut Tensor<S>, out: &Tensor<S>) {
    let (_, x_grad) = x.data_and_grad_mut();
    for ((gx, &y), &gy) in x_grad.iter_mut().zip(out.data()).zip(out.grad()) {
        *gx = *gx + gy * y * (S::one() - y);
    }
}
