//! 1-D convolution, its transpose, and the 2x2 IQ mixing layers.
//!
//! Kernels are stored as `[out, in, K]` for [`conv1d`] and `[in, out, K]` for
//! [`conv1d_transposed`]; both use the same buffer layout so one set of weights
//! drives a convolution and its exact adjoint. Same-padding puts `(K-1)/2` zeros
//! on the left and `K/2` on the right (for even `K`: `K/2 - 1` and `K/2`).
//!
//! Both directions lower to GEMM over `im2col` tiles of at most [`TILE`] time
//! steps, so memory stays bounded for 40k-sample inputs.

use std::cell::RefCell;

use crate::error::{Error, Result};
use crate::nn::tensor::{expect_rank, Tensor};

const TILE: usize = 512;

thread_local! {
    static SCRATCH: RefCell<Vec<f32>> = const { RefCell::new(Vec::new()) };
}

/// Geometry of a stride-1 same-padded convolution `[ci, len] -> [co, len]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub ci: usize,
    pub co: usize,
    pub k: usize,
    pub len: usize,
}

impl ConvGeom {
    pub fn pad_left(&self) -> usize {
        (self.k - 1) / 2
    }

    fn rows(&self) -> usize {
        self.ci * self.k
    }
}

/// `C = alpha * A * B + beta * C` over strided row-major views.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    rsc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1));
    // SAFETY: the asserts above bound every element the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            1,
        );
    }
}

/// Valid `j` range in `[0, tw)` for which `t0 + j + kk - pad` lies in `[0, len)`.
#[inline]
fn valid_span(t0: usize, tw: usize, kk: usize, pad: usize, len: usize) -> (usize, usize, isize) {
    let offset = t0 as isize + kk as isize - pad as isize;
    let lo = (-offset).clamp(0, tw as isize) as usize;
    let hi = (len as isize - offset).clamp(0, tw as isize) as usize;
    (lo, hi.max(lo), offset)
}

/// `cols[(c*K + kk), j] = x[c, t0 + j + kk - pad]`, zero outside the signal.
fn im2col(x: &[f32], c: usize, g: &ConvGeom, t0: usize, tw: usize, cols: &mut [f32]) {
    let pad = g.pad_left();
    for ci in 0..c {
        let row = &x[ci * g.len..(ci + 1) * g.len];
        for kk in 0..g.k {
            let dst = &mut cols[(ci * g.k + kk) * tw..(ci * g.k + kk + 1) * tw];
            let (lo, hi, offset) = valid_span(t0, tw, kk, pad, g.len);
            dst[..lo].fill(0.0);
            if hi > lo {
                let s = (lo as isize + offset) as usize;
                dst[lo..hi].copy_from_slice(&row[s..s + (hi - lo)]);
            }
            dst[hi..].fill(0.0);
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds `cols` back into `x`.
fn col2im_add(cols: &[f32], c: usize, g: &ConvGeom, t0: usize, tw: usize, x: &mut [f32]) {
    let pad = g.pad_left();
    for ci in 0..c {
        let row = &mut x[ci * g.len..(ci + 1) * g.len];
        for kk in 0..g.k {
            let src = &cols[(ci * g.k + kk) * tw..(ci * g.k + kk + 1) * tw];
            let (lo, hi, offset) = valid_span(t0, tw, kk, pad, g.len);
            if hi > lo {
                let s = (lo as isize + offset) as usize;
                for (d, v) in row[s..s + (hi - lo)].iter_mut().zip(&src[lo..hi]) {
                    *d += v;
                }
            }
        }
    }
}

fn with_scratch<R>(len: usize, f: impl FnOnce(&mut [f32]) -> R) -> R {
    SCRATCH.with(|s| {
        let mut s = s.borrow_mut();
        if s.len() < len {
            s.resize(len, 0.0);
        }
        f(&mut s[..len])
    })
}

fn tiles(len: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..len)
        .step_by(TILE)
        .map(move |t0| (t0, TILE.min(len - t0)))
}

/// `out[co, len] = W * x + bias`, overwriting `out`.
pub(crate) fn conv_forward(x: &[f32], w: &[f32], bias: &[f32], g: &ConvGeom, out: &mut [f32]) {
    let rows = g.rows();
    with_scratch(rows * TILE.min(g.len), |cols| {
        for (t0, tw) in tiles(g.len) {
            im2col(x, g.ci, g, t0, tw, cols);
            gemm(
                g.co,
                rows,
                tw,
                w,
                (rows, 1),
                cols,
                (tw, 1),
                0.0,
                &mut out[t0..],
                g.len,
            );
        }
    });
    for (o, b) in bias.iter().enumerate() {
        out[o * g.len..(o + 1) * g.len]
            .iter_mut()
            .for_each(|v| *v += b);
    }
}

/// Accumulates conv gradients; `gx` (if given) is added to, not overwritten.
pub(crate) fn conv_backward(
    x: &[f32],
    w: &[f32],
    gout: &[f32],
    g: &ConvGeom,
    mut gx: Option<&mut [f32]>,
    gw: &mut [f32],
    gb: &mut [f32],
) {
    for (o, b) in gb.iter_mut().enumerate() {
        *b += gout[o * g.len..(o + 1) * g.len].iter().sum::<f32>();
    }
    let rows = g.rows();
    with_scratch(rows * TILE.min(g.len), |cols| {
        for (t0, tw) in tiles(g.len) {
            im2col(x, g.ci, g, t0, tw, cols);
            // gW[co, rows] += gout[co, tile] * cols^T
            gemm(
                g.co,
                tw,
                rows,
                &gout[t0..],
                (g.len, 1),
                cols,
                (1, tw),
                1.0,
                gw,
                rows,
            );
            if let Some(gx) = gx.as_deref_mut() {
                // dcols[rows, tile] = W^T * gout[co, tile]
                gemm(
                    rows,
                    g.co,
                    tw,
                    w,
                    (1, rows),
                    &gout[t0..],
                    (g.len, 1),
                    0.0,
                    cols,
                    tw,
                );
                col2im_add(cols, g.ci, g, t0, tw, gx);
            }
        }
    });
}

/// Adjoint of [`conv_forward`]: `out[ci, len] = W^T y + bias`, overwriting `out`.
pub(crate) fn convt_forward(y: &[f32], w: &[f32], bias: &[f32], g: &ConvGeom, out: &mut [f32]) {
    out.fill(0.0);
    let rows = g.rows();
    with_scratch(rows * TILE.min(g.len), |cols| {
        for (t0, tw) in tiles(g.len) {
            gemm(
                rows,
                g.co,
                tw,
                w,
                (1, rows),
                &y[t0..],
                (g.len, 1),
                0.0,
                cols,
                tw,
            );
            col2im_add(cols, g.ci, g, t0, tw, out);
        }
    });
    for (c, b) in bias.iter().enumerate() {
        out[c * g.len..(c + 1) * g.len]
            .iter_mut()
            .for_each(|v| *v += b);
    }
}

/// Accumulates transposed-conv gradients; `gy` (if given) is added to.
pub(crate) fn convt_backward(
    y: &[f32],
    w: &[f32],
    gout: &[f32],
    g: &ConvGeom,
    mut gy: Option<&mut [f32]>,
    gw: &mut [f32],
    gb: &mut [f32],
) {
    for (c, b) in gb.iter_mut().enumerate() {
        *b += gout[c * g.len..(c + 1) * g.len].iter().sum::<f32>();
    }
    let rows = g.rows();
    with_scratch(rows * TILE.min(g.len), |cols| {
        for (t0, tw) in tiles(g.len) {
            im2col(gout, g.ci, g, t0, tw, cols);
            // gW[co, rows] += y[co, tile] * cols^T
            gemm(
                g.co,
                tw,
                rows,
                &y[t0..],
                (g.len, 1),
                cols,
                (1, tw),
                1.0,
                gw,
                rows,
            );
            if let Some(gy) = gy.as_deref_mut() {
                gemm(
                    g.co,
                    rows,
                    tw,
                    w,
                    (rows, 1),
                    cols,
                    (tw, 1),
                    1.0,
                    &mut gy[t0..],
                    g.len,
                );
            }
        }
    });
}

/// Gradients of a layer with respect to its input, kernels and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Tensor,
}

fn conv_geom(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<ConvGeom> {
    let x = expect_rank(input, 2, "conv1d input [C_in, L]")?;
    let w = expect_rank(weight, 3, "conv1d kernels [C_out, C_in, K]")?;
    let b = expect_rank(bias, 1, "conv1d bias [C_out]")?;
    if w[1] != x[0] {
        return Err(Error::Dimension(format!(
            "conv1d: kernel C_in axis is {} but input channel axis is {}",
            w[1], x[0]
        )));
    }
    if b[0] != w[0] {
        return Err(Error::Dimension(format!(
            "conv1d: bias length {} but kernel C_out axis is {}",
            b[0], w[0]
        )));
    }
    if w[2] == 0 || x[1] == 0 {
        return Err(Error::Dimension(
            "conv1d: kernel width and length must be positive".into(),
        ));
    }
    Ok(ConvGeom {
        ci: x[0],
        co: w[0],
        k: w[2],
        len: x[1],
    })
}

/// Same-padded stride-1 cross-correlation: `[C_in, L] -> [C_out, L]`.
pub fn conv1d(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = conv_geom(input, weight, bias)?;
    let mut out = Tensor::zeros(&[g.co, g.len]);
    conv_forward(input.data(), weight.data(), bias.data(), &g, out.data_mut());
    out.debug_check_finite("conv1d");
    Ok(out)
}

pub fn conv1d_backward(input: &Tensor, weight: &Tensor, grad_out: &Tensor) -> Result<ConvGrads> {
    let bias = Tensor::zeros(&[weight.shape().first().copied().unwrap_or(0)]);
    let g = conv_geom(input, weight, &bias)?;
    if grad_out.shape() != [g.co, g.len] {
        return Err(Error::Dimension(format!(
            "conv1d backward: upstream gradient {:?}, expected [{}, {}]",
            grad_out.shape(),
            g.co,
            g.len
        )));
    }
    let mut gi = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = bias;
    conv_backward(
        input.data(),
        weight.data(),
        grad_out.data(),
        &g,
        Some(gi.data_mut()),
        gw.data_mut(),
        gb.data_mut(),
    );
    Ok(ConvGrads {
        input: gi,
        weight: gw,
        bias: gb,
    })
}

fn convt_geom(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<ConvGeom> {
    let x = expect_rank(input, 2, "conv1d_transposed input [C_in, L]")?;
    let w = expect_rank(weight, 3, "conv1d_transposed kernels [C_in, C_out, K]")?;
    let b = expect_rank(bias, 1, "conv1d_transposed bias [C_out]")?;
    if w[0] != x[0] {
        return Err(Error::Dimension(format!(
            "conv1d_transposed: kernel C_in axis is {} but input channel axis is {}",
            w[0], x[0]
        )));
    }
    if b[0] != w[1] {
        return Err(Error::Dimension(format!(
            "conv1d_transposed: bias length {} but kernel C_out axis is {}",
            b[0], w[1]
        )));
    }
    if w[2] == 0 || x[1] == 0 {
        return Err(Error::Dimension(
            "conv1d_transposed: kernel width and length must be positive".into(),
        ));
    }
    // Forward-conv view: the transposed layer's input channels are the conv's outputs.
    Ok(ConvGeom {
        ci: w[1],
        co: w[0],
        k: w[2],
        len: x[1],
    })
}

/// Adjoint of [`conv1d`] with the same padding: `[C_in, L] -> [C_out, L]`.
pub fn conv1d_transposed(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let g = convt_geom(input, weight, bias)?;
    let mut out = Tensor::zeros(&[g.ci, g.len]);
    convt_forward(input.data(), weight.data(), bias.data(), &g, out.data_mut());
    out.debug_check_finite("conv1d_transposed");
    Ok(out)
}

pub fn conv1d_transposed_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let bias = Tensor::zeros(&[weight.shape().get(1).copied().unwrap_or(0)]);
    let g = convt_geom(input, weight, &bias)?;
    if grad_out.shape() != [g.ci, g.len] {
        return Err(Error::Dimension(format!(
            "conv1d_transposed backward: upstream gradient {:?}, expected [{}, {}]",
            grad_out.shape(),
            g.ci,
            g.len
        )));
    }
    let mut gi = Tensor::zeros(input.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = bias;
    convt_backward(
        input.data(),
        weight.data(),
        grad_out.data(),
        &g,
        Some(gi.data_mut()),
        gw.data_mut(),
        gb.data_mut(),
    );
    Ok(ConvGrads {
        input: gi,
        weight: gw,
        bias: gb,
    })
}

fn iq_kernel_check(weight: &Tensor, what: &str) -> Result<usize> {
    let w = expect_rank(weight, 4, what)?;
    if w[1] != 1 || w[2] != 2 || w[3] != 2 {
        return Err(Error::Dimension(format!(
            "{what}: kernels must be [C, 1, 2, 2], got {w:?}"
        )));
    }
    Ok(w[0])
}

fn iq_input_check(input: &Tensor) -> Result<usize> {
    let x = expect_rank(input, 2, "IQ-Mixer input [2, N]")?;
    if x[0] != 2 {
        return Err(Error::Dimension(format!(
            "IQ-Mixer input height (IQ axis) must be 2, got {}",
            x[0]
        )));
    }
    Ok(x[1])
}

/// 2-D convolution over a `[2, N]` IQ image with `2x2` kernels: valid across the
/// IQ axis (height collapses to 1) and same-padded in time. Output `[C_out, N]`.
pub fn iq_mix_conv2d(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let n = iq_input_check(input)?;
    let co = iq_kernel_check(weight, "IQ-Mixer kernels")?;
    // A 2x2 kernel spanning both rows is a 2-tap conv1d with two input channels.
    let w = weight.clone().reshape(&[co, 2, 2])?;
    let out = conv1d(input, &w, bias)?;
    debug_assert_eq!(out.shape(), [co, n]);
    Ok(out)
}

pub fn iq_mix_conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    iq_input_check(input)?;
    let co = iq_kernel_check(weight, "IQ-Mixer kernels")?;
    let w = weight.clone().reshape(&[co, 2, 2])?;
    let mut grads = conv1d_backward(input, &w, grad_out)?;
    grads.weight = grads.weight.reshape(&[co, 1, 2, 2])?;
    Ok(grads)
}

/// Transposed 2x2 convolution `[C_in, N] -> [2, N]`; the adjoint of
/// [`iq_mix_conv2d`] plus a single bias shared by both output rows.
pub fn iq_unmix_conv2d_transposed(
    input: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
) -> Result<Tensor> {
    let ci = iq_kernel_check(weight, "IQ-Unmixer kernels")?;
    let b = expect_rank(bias, 1, "IQ-Unmixer bias [1]")?;
    if b[0] != 1 {
        return Err(Error::Dimension(format!(
            "IQ-Unmixer bias must have one element, got {}",
            b[0]
        )));
    }
    let w = weight.clone().reshape(&[ci, 2, 2])?;
    let bias2 = Tensor::from_vec(&[2], vec![bias.data()[0]; 2])?;
    conv1d_transposed(input, &w, &bias2)
}

pub fn iq_unmix_conv2d_transposed_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let ci = iq_kernel_check(weight, "IQ-Unmixer kernels")?;
    let w = weight.clone().reshape(&[ci, 2, 2])?;
    let mut grads = conv1d_transposed_backward(input, &w, grad_out)?;
    grads.weight = grads.weight.reshape(&[ci, 1, 2, 2])?;
    let shared = grads.bias.data().iter().sum::<f32>();
    grads.bias = Tensor::from_vec(&[1], vec![shared])?;
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Direct sliding-window oracle with the documented padding.
    fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
        let (ci, l) = (x.shape()[0], x.shape()[1]);
        let (co, k) = (w.shape()[0], w.shape()[2]);
        let pad = (k - 1) / 2;
        let mut out = Tensor::zeros(&[co, l]);
        for o in 0..co {
            for tt in 0..l {
                let mut acc = b.data()[o] as f64;
                for c in 0..ci {
                    for kk in 0..k {
                        let s = tt as isize + kk as isize - pad as isize;
                        if s >= 0 && (s as usize) < l {
                            acc += w.data()[(o * ci + c) * k + kk] as f64
                                * x.data()[c * l + s as usize] as f64;
                        }
                    }
                }
                out.data_mut()[o * l + tt] = acc as f32;
            }
        }
        out
    }

    #[test]
    fn unit_kernel_is_identity() {
        let x = t(&[1, 5], &[1.0, -2.0, 3.0, 0.5, 9.0]);
        let w = t(&[1, 1, 1], &[1.0]);
        let b = t(&[1], &[0.0]);
        assert_eq!(conv1d(&x, &w, &b).unwrap(), x);
        assert_eq!(conv1d_transposed(&x, &w, &b).unwrap(), x);
    }

    #[test]
    fn even_kernel_pads_on_the_right() {
        let x = t(&[1, 4], &[1.0, 2.0, 3.0, 4.0]);
        let w = t(&[1, 1, 2], &[1.0, 1.0]);
        let b = t(&[1], &[0.0]);
        let y = conv1d(&x, &w, &b).unwrap();
        // K=2 -> zero left pads, one right pad: y[n] = x[n] + x[n+1].
        assert_eq!(y.data(), &[3.0, 5.0, 7.0, 4.0]);
        assert_eq!(y, naive_conv(&x, &w, &b));
    }

    #[test]
    fn tiled_gemm_matches_naive_across_tile_boundaries() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (ci, co, k, l) in [(3, 2, 7, 1300), (1, 4, 200, 1100), (2, 3, 6, 9)] {
            let x = random(&[ci, l], &mut rng);
            let w = random(&[co, ci, k], &mut rng);
            let b = random(&[co], &mut rng);
            let fast = conv1d(&x, &w, &b).unwrap();
            let slow = naive_conv(&x, &w, &b);
            for (a, e) in fast.data().iter().zip(slow.data()) {
                assert!((a - e).abs() < 1e-4 * (1.0 + e.abs()), "{a} vs {e}");
            }
        }
    }

    #[test]
    fn transposed_is_adjoint_of_conv() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (ci, co, k, l) in [(3, 4, 5, 40), (2, 2, 6, 700), (1, 3, 1, 10)] {
            let x = random(&[ci, l], &mut rng);
            let y = random(&[co, l], &mut rng);
            let w = random(&[co, ci, k], &mut rng);
            let lhs = conv1d(&x, &w, &Tensor::zeros(&[co])).unwrap().dot(&y);
            let rhs = x.dot(&conv1d_transposed(&y, &w, &Tensor::zeros(&[ci])).unwrap());
            assert!(
                (lhs - rhs).abs() <= 1e-4 * lhs.abs().max(1.0),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn shape_errors_name_axes() {
        let x = Tensor::zeros(&[2, 10]);
        let w = Tensor::zeros(&[3, 1, 4]);
        let b = Tensor::zeros(&[3]);
        let err = conv1d(&x, &w, &b).unwrap_err();
        assert!(matches!(err, Error::Dimension(m) if m.contains("C_in")));
        let err = conv1d_transposed(&x, &w, &b).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn iq_mixer_selects_rows() {
        let x = t(&[2, 3], &[1.0, 2.0, 3.0, 10.0, 20.0, 30.0]);
        let b = t(&[1], &[0.0]);
        let top = t(&[1, 1, 2, 2], &[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(
            iq_mix_conv2d(&x, &top, &b).unwrap().data(),
            &[1.0, 2.0, 3.0]
        );
        let bottom = t(&[1, 1, 2, 2], &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            iq_mix_conv2d(&x, &bottom, &b).unwrap().data(),
            &[10.0, 20.0, 30.0]
        );
    }

    #[test]
    fn iq_mixer_rejects_wrong_height() {
        let x = Tensor::zeros(&[3, 8]);
        let w = Tensor::zeros(&[1, 1, 2, 2]);
        let b = Tensor::zeros(&[1]);
        assert!(
            matches!(iq_mix_conv2d(&x, &w, &b), Err(Error::Dimension(m)) if m.contains("height"))
        );
    }

    #[test]
    fn iq_unmixer_is_adjoint_of_mixer() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random(&[2, 33], &mut rng);
        let h = random(&[1, 33], &mut rng);
        let w = random(&[1, 1, 2, 2], &mut rng);
        let z = Tensor::zeros(&[1]);
        let lhs = iq_mix_conv2d(&x, &w, &z).unwrap().dot(&h);
        let rhs = x.dot(&iq_unmix_conv2d_transposed(&h, &w, &z).unwrap());
        assert!((lhs - rhs).abs() < 1e-5 * lhs.abs().max(1.0));
        let bias = t(&[1], &[0.5]);
        let out = iq_unmix_conv2d_transposed(&Tensor::zeros(&[1, 4]), &w, &bias).unwrap();
        assert_eq!(out.shape(), [2, 4]);
        assert!(out.data().iter().all(|v| *v == 0.5));
    }
}
