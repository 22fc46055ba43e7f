//! Forward and backward passes for every layer type the network uses.
//!
//! All convolutions are stride-1. Same padding is zero padding with
//! `(K-1)/2` rows/columns before and `K-1-(K-1)/2` after, so 3x3 kernels pad
//! symmetrically and 2x2 kernels pad one row/column at the bottom/right,
//! keeping the output the same size as the input.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Spatial padding mode for convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding, output keeps the input height and width.
    Same,
    /// No padding, output shrinks by `K-1` per axis.
    Valid,
}

fn pads(padding: Padding, kh: usize, kw: usize) -> (usize, usize) {
    match padding {
        Padding::Same => ((kh - 1) / 2, (kw - 1) / 2),
        Padding::Valid => (0, 0),
    }
}

/// Output range `[lo, hi)` along one axis for kernel offset `k`, plus the
/// input offset to add to an output coordinate. Positions outside the range
/// would read a zero-padded input value and contribute nothing.
#[inline]
fn conv_range(k: usize, pad: usize, in_dim: usize, out_dim: usize) -> (usize, usize, isize) {
    let off = k as isize - pad as isize;
    let lo = if off < 0 { (-off) as usize } else { 0 };
    let hi = (in_dim as isize - off).min(out_dim as isize).max(lo as isize) as usize;
    (lo, hi, off)
}

fn check_kernel_dims(kh: usize, kw: usize) -> Result<()> {
    if !(1..=3).contains(&kh) || !(1..=3).contains(&kw) {
        return Err(Error::Shape(format!(
            "kernel size {kh}x{kw} unsupported, expected sides in 1..=3"
        )));
    }
    Ok(())
}

fn conv_output_dims(
    padding: Padding,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
) -> Result<(usize, usize)> {
    match padding {
        Padding::Same => Ok((h, w)),
        Padding::Valid => {
            if h < kh || w < kw {
                return Err(Error::Shape(format!(
                    "valid convolution of {kh}x{kw} kernel over {h}x{w} input has empty output"
                )));
            }
            Ok((h - kh + 1, w - kw + 1))
        }
    }
}

/// Stride-1 cross-correlation of `input` (NCHW) with `kernel`
/// (OC x IC x KH x KW) plus a per-output-channel bias.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    let (batch, in_c, h, w) = input.dims4()?;
    let (out_c, k_in_c, kh, kw) = kernel.dims4()?;
    if in_c != k_in_c {
        return Err(Error::Shape(format!(
            "input has {in_c} channels but kernel expects {k_in_c}"
        )));
    }
    check_kernel_dims(kh, kw)?;
    if bias.shape() != [out_c] {
        return Err(Error::Shape(format!(
            "bias shape {:?} does not match {out_c} output channels",
            bias.shape()
        )));
    }
    if h == 0 || w == 0 {
        return Err(Error::Shape("input has empty spatial dimensions".into()));
    }
    let (pad_t, pad_l) = pads(padding, kh, kw);
    let (oh, ow) = conv_output_dims(padding, h, w, kh, kw)?;

    let mut out = Tensor::zeros(vec![batch, out_c, oh, ow]);
    for n in 0..batch {
        for oc in 0..out_c {
            let b = bias.data()[oc];
            let out_plane = out.plane_mut(n, oc);
            for v in out_plane.iter_mut() {
                *v = b;
            }
            for ic in 0..in_c {
                let in_plane = input.plane(n, ic);
                for kr in 0..kh {
                    let (r_lo, r_hi, r_off) = conv_range(kr, pad_t, h, oh);
                    for kc in 0..kw {
                        let (c_lo, c_hi, c_off) = conv_range(kc, pad_l, w, ow);
                        if r_lo >= r_hi || c_lo >= c_hi {
                            continue;
                        }
                        let wgt = kernel.data()[((oc * in_c + ic) * kh + kr) * kw + kc];
                        for orow in r_lo..r_hi {
                            let irow = (orow as isize + r_off) as usize;
                            let istart = irow * w + (c_lo as isize + c_off) as usize;
                            let src = &in_plane[istart..istart + (c_hi - c_lo)];
                            let dst = &mut out_plane[orow * ow + c_lo..orow * ow + c_hi];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d = *d + wgt * *s;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of a scalar loss with respect to the convolution input, kernel
/// and bias, given the upstream gradient and the cached forward input.
pub fn conv2d_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    padding: Padding,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (batch, in_c, h, w) = input.dims4()?;
    let (out_c, k_in_c, kh, kw) = kernel.dims4()?;
    if in_c != k_in_c {
        return Err(Error::Shape(format!(
            "input has {in_c} channels but kernel expects {k_in_c}"
        )));
    }
    check_kernel_dims(kh, kw)?;
    let (pad_t, pad_l) = pads(padding, kh, kw);
    let (oh, ow) = conv_output_dims(padding, h, w, kh, kw)?;
    if grad_out.shape() != [batch, out_c, oh, ow] {
        return Err(Error::Shape(format!(
            "upstream gradient shape {:?} does not match forward output {:?}",
            grad_out.shape(),
            [batch, out_c, oh, ow]
        )));
    }

    let mut grad_bias = Tensor::zeros(vec![out_c]);
    for n in 0..batch {
        for oc in 0..out_c {
            let mut s = T::zero();
            for &g in grad_out.plane(n, oc) {
                s = s + g;
            }
            grad_bias.data_mut()[oc] = grad_bias.data()[oc] + s;
        }
    }

    let mut grad_kernel = Tensor::zeros(vec![out_c, in_c, kh, kw]);
    for oc in 0..out_c {
        for ic in 0..in_c {
            for kr in 0..kh {
                let (r_lo, r_hi, r_off) = conv_range(kr, pad_t, h, oh);
                for kc in 0..kw {
                    let (c_lo, c_hi, c_off) = conv_range(kc, pad_l, w, ow);
                    if r_lo >= r_hi || c_lo >= c_hi {
                        continue;
                    }
                    let mut acc = T::zero();
                    for n in 0..batch {
                        let go_plane = grad_out.plane(n, oc);
                        let in_plane = input.plane(n, ic);
                        for orow in r_lo..r_hi {
                            let irow = (orow as isize + r_off) as usize;
                            let istart = irow * w + (c_lo as isize + c_off) as usize;
                            let src = &in_plane[istart..istart + (c_hi - c_lo)];
                            let go = &go_plane[orow * ow + c_lo..orow * ow + c_hi];
                            for (g, s) in go.iter().zip(src) {
                                acc = acc + *g * *s;
                            }
                        }
                    }
                    grad_kernel.data_mut()[((oc * in_c + ic) * kh + kr) * kw + kc] = acc;
                }
            }
        }
    }

    let mut grad_input = Tensor::zeros(vec![batch, in_c, h, w]);
    for n in 0..batch {
        for ic in 0..in_c {
            let gi_plane = grad_input.plane_mut(n, ic);
            for oc in 0..out_c {
                let go_plane = grad_out.plane(n, oc);
                for kr in 0..kh {
                    let (r_lo, r_hi, r_off) = conv_range(kr, pad_t, h, oh);
                    for kc in 0..kw {
                        let (c_lo, c_hi, c_off) = conv_range(kc, pad_l, w, ow);
                        if r_lo >= r_hi || c_lo >= c_hi {
                            continue;
                        }
                        let wgt = kernel.data()[((oc * in_c + ic) * kh + kr) * kw + kc];
                        for orow in r_lo..r_hi {
                            let irow = (orow as isize + r_off) as usize;
                            let istart = irow * w + (c_lo as isize + c_off) as usize;
                            let go = &go_plane[orow * ow + c_lo..orow * ow + c_hi];
                            let dst = &mut gi_plane[istart..istart + (c_hi - c_lo)];
                            for (d, g) in dst.iter_mut().zip(go) {
                                *d = *d + wgt * *g;
                            }
                        }
                    }
                }
            }
        }
    }

    Ok((grad_input, grad_kernel, grad_bias))
}

/// Elementwise `max(x, 0)`.
pub fn relu<T: Scalar>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where the cached input was strictly positive; the
/// subgradient at exactly zero is zero.
pub fn relu_backward<T: Scalar>(grad_out: &Tensor<T>, cached_input: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != cached_input.shape() {
        return Err(Error::Shape(format!(
            "relu gradient shape {:?} does not match cached input {:?}",
            grad_out.shape(),
            cached_input.shape()
        )));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(cached_input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(grad_out.shape().to_vec(), data)
}

/// 2x2 max pooling with stride 2 over disjoint windows. Returns the pooled
/// tensor and, per output element, the flat index of the winning input
/// element (ties go to the first position in scan order).
pub fn maxpool2x2<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (batch, chans, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Shape(format!(
            "maxpool2x2 requires even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Tensor::zeros(vec![batch, chans, oh, ow]);
    let mut argmax = vec![0usize; out.len()];
    let mut oi = 0;
    for n in 0..batch {
        for c in 0..chans {
            let plane_base = (n * chans + c) * h * w;
            let in_plane = input.plane(n, c);
            for orow in 0..oh {
                for ocol in 0..ow {
                    let r0 = 2 * orow;
                    let c0 = 2 * ocol;
                    let mut best_local = r0 * w + c0;
                    let mut best = in_plane[best_local];
                    for (dr, dc) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = (r0 + dr) * w + (c0 + dc);
                        if in_plane[idx] > best {
                            best = in_plane[idx];
                            best_local = idx;
                        }
                    }
                    out.data_mut()[oi] = best;
                    argmax[oi] = plane_base + best_local;
                    oi += 1;
                }
            }
        }
    }
    Ok((out, argmax))
}

/// Routes each upstream gradient to the input position that won the pooling.
pub fn maxpool2x2_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "pooling gradient has {} elements but {} argmax entries",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut grad_input = Tensor::zeros(input_shape.to_vec());
    let n = grad_input.len();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        if idx >= n {
            return Err(Error::Shape(format!(
                "argmax index {idx} out of bounds for input of {n} elements"
            )));
        }
        grad_input.data_mut()[idx] = grad_input.data()[idx] + g;
    }
    Ok(grad_input)
}

/// Nearest-neighbor 2x upsampling: each input pixel becomes a 2x2 block.
pub fn upsample2x_nearest<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, chans, h, w) = input.dims4()?;
    let mut out = Tensor::zeros(vec![batch, chans, 2 * h, 2 * w]);
    for n in 0..batch {
        for c in 0..chans {
            let src = input.plane(n, c).to_vec();
            let dst = out.plane_mut(n, c);
            for r in 0..h {
                for col in 0..w {
                    let v = src[r * w + col];
                    let base = (2 * r) * (2 * w) + 2 * col;
                    dst[base] = v;
                    dst[base + 1] = v;
                    dst[base + 2 * w] = v;
                    dst[base + 2 * w + 1] = v;
                }
            }
        }
    }
    Ok(out)
}

/// Sums each 2x2 block of the upstream gradient back onto its source pixel.
pub fn upsample2x_nearest_backward<T: Scalar>(grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, chans, h2, w2) = grad_out.dims4()?;
    if h2 % 2 != 0 || w2 % 2 != 0 {
        return Err(Error::Shape(format!(
            "upsample gradient must have even dims, got {h2}x{w2}"
        )));
    }
    let (h, w) = (h2 / 2, w2 / 2);
    let mut grad_input = Tensor::zeros(vec![batch, chans, h, w]);
    for n in 0..batch {
        for c in 0..chans {
            let src = grad_out.plane(n, c).to_vec();
            let dst = grad_input.plane_mut(n, c);
            for r in 0..h {
                for col in 0..w {
                    let base = (2 * r) * w2 + 2 * col;
                    dst[r * w + col] =
                        src[base] + src[base + 1] + src[base + w2] + src[base + w2 + 1];
                }
            }
        }
    }
    Ok(grad_input)
}

/// Concatenates `a` and `b` along the channel axis, `a` first.
pub fn concat_channels<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (na, ca, ha, wa) = a.dims4()?;
    let (nb, cb, hb, wb) = b.dims4()?;
    if (na, ha, wa) != (nb, hb, wb) {
        return Err(Error::Shape(format!(
            "cannot concatenate {:?} with {:?}: batch or spatial dims differ",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = Tensor::zeros(vec![na, ca + cb, ha, wa]);
    for n in 0..na {
        for c in 0..ca {
            out.plane_mut(n, c).copy_from_slice(a.plane(n, c));
        }
        for c in 0..cb {
            out.plane_mut(n, ca + c).copy_from_slice(b.plane(n, c));
        }
    }
    Ok(out)
}

/// Backward of [`concat_channels`]: splits the gradient after `c_a` channels.
pub fn split_channels<T: Scalar>(grad: &Tensor<T>, c_a: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n_batch, c, h, w) = grad.dims4()?;
    if c_a > c {
        return Err(Error::Shape(format!(
            "cannot split {c_a} channels out of {c}"
        )));
    }
    let mut a = Tensor::zeros(vec![n_batch, c_a, h, w]);
    let mut b = Tensor::zeros(vec![n_batch, c - c_a, h, w]);
    for n in 0..n_batch {
        for ch in 0..c_a {
            a.plane_mut(n, ch).copy_from_slice(grad.plane(n, ch));
        }
        for ch in 0..c - c_a {
            b.plane_mut(n, ch).copy_from_slice(grad.plane(n, c_a + ch));
        }
    }
    Ok((a, b))
}

/// Per-pixel softmax across channels, computed with max subtraction.
pub fn softmax_channels<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, chans, h, w) = input.dims4()?;
    if chans == 0 {
        return Err(Error::Shape("softmax over zero channels".into()));
    }
    let hw = h * w;
    let mut out = Tensor::zeros(input.shape().to_vec());
    for n in 0..batch {
        let base = n * chans * hw;
        for p in 0..hw {
            let mut max = T::neg_infinity();
            for c in 0..chans {
                let v = input.data()[base + c * hw + p];
                if v > max {
                    max = v;
                }
            }
            let mut sum = T::zero();
            for c in 0..chans {
                let e = (input.data()[base + c * hw + p] - max).exp();
                out.data_mut()[base + c * hw + p] = e;
                sum = sum + e;
            }
            for c in 0..chans {
                let idx = base + c * hw + p;
                out.data_mut()[idx] = out.data()[idx] / sum;
            }
        }
    }
    Ok(out)
}

/// Backward of [`softmax_channels`], given the forward output probabilities:
/// `dz_c = p_c * (g_c - sum_k g_k p_k)` per pixel.
pub fn softmax_channels_backward<T: Scalar>(
    grad_out: &Tensor<T>,
    output: &Tensor<T>,
) -> Result<Tensor<T>> {
    if grad_out.shape() != output.shape() {
        return Err(Error::Shape(format!(
            "softmax gradient shape {:?} does not match output {:?}",
            grad_out.shape(),
            output.shape()
        )));
    }
    let (batch, chans, h, w) = output.dims4()?;
    let hw = h * w;
    let mut grad_input = Tensor::zeros(output.shape().to_vec());
    for n in 0..batch {
        let base = n * chans * hw;
        for p in 0..hw {
            let mut dot = T::zero();
            for c in 0..chans {
                let idx = base + c * hw + p;
                dot = dot + grad_out.data()[idx] * output.data()[idx];
            }
            for c in 0..chans {
                let idx = base + c * hw + p;
                grad_input.data_mut()[idx] = output.data()[idx] * (grad_out.data()[idx] - dot);
            }
        }
    }
    Ok(grad_input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    fn random_tensor(shape: Vec<usize>, seed: u64) -> Tensor<f64> {
        let mut rng = stream(seed, "ops-test", 0);
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Direct six-loop cross-correlation with explicit zero padding.
    fn naive_conv2d(
        input: &Tensor<f64>,
        kernel: &Tensor<f64>,
        bias: &Tensor<f64>,
        padding: Padding,
    ) -> Tensor<f64> {
        let (batch, in_c, h, w) = input.dims4().unwrap();
        let (out_c, _, kh, kw) = kernel.dims4().unwrap();
        let (pad_t, pad_l) = pads(padding, kh, kw);
        let (oh, ow) = conv_output_dims(padding, h, w, kh, kw).unwrap();
        let mut out = Tensor::zeros(vec![batch, out_c, oh, ow]);
        for n in 0..batch {
            for oc in 0..out_c {
                for orow in 0..oh {
                    for ocol in 0..ow {
                        let mut acc = bias.data()[oc];
                        for ic in 0..in_c {
                            for kr in 0..kh {
                                for kc in 0..kw {
                                    let ir = orow as isize + kr as isize - pad_t as isize;
                                    let icl = ocol as isize + kc as isize - pad_l as isize;
                                    if ir < 0 || icl < 0 || ir >= h as isize || icl >= w as isize {
                                        continue;
                                    }
                                    let iv = input.data()
                                        [input.idx4(n, ic, ir as usize, icl as usize)];
                                    let kv = kernel.data()[kernel.idx4(oc, ic, kr, kc)];
                                    acc += iv * kv;
                                }
                            }
                        }
                        let idx = out.idx4(n, oc, orow, ocol);
                        out.data_mut()[idx] = acc;
                    }
                }
            }
        }
        out
    }

    fn max_abs_diff(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn conv_identity_kernel() {
        let input = Tensor::new(vec![1, 1, 1, 1], vec![5.0]).unwrap();
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let bias = Tensor::zeros(vec![1]);
        let out = conv2d_forward(&input, &kernel, &bias, Padding::Same).unwrap();
        assert_eq!(out.data(), &[5.0]);
    }

    #[test]
    fn conv_ones_same_padding_window_sums() {
        let input = Tensor::filled(vec![1, 1, 3, 3], 1.0);
        let kernel = Tensor::filled(vec![1, 1, 3, 3], 1.0);
        let bias = Tensor::zeros(vec![1]);
        let out = conv2d_forward(&input, &kernel, &bias, Padding::Same).unwrap();
        // zero-padded window sums: corners see 4 ones, edges 6, center 9
        assert_eq!(out.data()[4], 9.0);
        for corner in [0, 2, 6, 8] {
            assert_eq!(out.data()[corner], 4.0);
        }
    }

    #[test]
    fn conv_matches_naive_oracle() {
        for (seed, shape, kshape, padding) in [
            (1, vec![2, 3, 8, 8], vec![4, 3, 3, 3], Padding::Same),
            (2, vec![2, 3, 8, 8], vec![4, 3, 3, 3], Padding::Valid),
            (3, vec![1, 2, 5, 7], vec![3, 2, 2, 2], Padding::Same),
            (4, vec![2, 4, 16, 16], vec![3, 4, 1, 1], Padding::Same),
            (5, vec![1, 1, 4, 4], vec![2, 1, 2, 3], Padding::Valid),
        ] {
            let input = random_tensor(shape, seed);
            let kernel = random_tensor(kshape.clone(), seed + 100);
            let bias = random_tensor(vec![kshape[0]], seed + 200);
            let fast = conv2d_forward(&input, &kernel, &bias, padding).unwrap();
            let slow = naive_conv2d(&input, &kernel, &bias, padding);
            assert_eq!(fast.shape(), slow.shape());
            assert!(max_abs_diff(&fast, &slow) <= 1e-10, "seed {seed}");
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let input = Tensor::<f64>::zeros(vec![1, 2, 4, 4]);
        let kernel = Tensor::<f64>::zeros(vec![1, 3, 3, 3]);
        let bias = Tensor::<f64>::zeros(vec![1]);
        assert!(conv2d_forward(&input, &kernel, &bias, Padding::Same).is_err());
    }

    #[test]
    fn conv_rejects_empty_output() {
        let input = Tensor::<f64>::zeros(vec![1, 1, 2, 2]);
        let kernel = Tensor::<f64>::zeros(vec![1, 1, 3, 3]);
        let bias = Tensor::<f64>::zeros(vec![1]);
        assert!(conv2d_forward(&input, &kernel, &bias, Padding::Valid).is_err());
        let empty = Tensor::<f64>::zeros(vec![1, 1, 0, 4]);
        assert!(conv2d_forward(&empty, &kernel, &bias, Padding::Same).is_err());
    }

    #[test]
    fn conv_backward_zero_upstream_gives_zero_grads() {
        let input = random_tensor(vec![1, 2, 4, 4], 7);
        let kernel = random_tensor(vec![3, 2, 3, 3], 8);
        let grad_out = Tensor::zeros(vec![1, 3, 4, 4]);
        let (gi, gk, gb) = conv2d_backward(&grad_out, &input, &kernel, Padding::Same).unwrap();
        assert!(gi.data().iter().all(|&v| v == 0.0));
        assert!(gk.data().iter().all(|&v| v == 0.0));
        assert!(gb.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_backward_scalar_chain_rule() {
        // 1x1 everything: d(loss)/d(kernel) = input * grad_out
        let input = Tensor::new(vec![1, 1, 1, 1], vec![3.0]).unwrap();
        let kernel = Tensor::new(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let grad_out = Tensor::new(vec![1, 1, 1, 1], vec![1.5]).unwrap();
        let (gi, gk, gb) = conv2d_backward(&grad_out, &input, &kernel, Padding::Same).unwrap();
        assert_eq!(gk.data(), &[3.0 * 1.5]);
        assert_eq!(gi.data(), &[2.0 * 1.5]);
        assert_eq!(gb.data(), &[1.5]);
    }

    #[test]
    fn conv_backward_rejects_stale_shape() {
        let input = Tensor::<f64>::zeros(vec![1, 1, 4, 4]);
        let kernel = Tensor::<f64>::zeros(vec![1, 1, 3, 3]);
        let grad_out = Tensor::<f64>::zeros(vec![1, 1, 5, 5]);
        assert!(conv2d_backward(&grad_out, &input, &kernel, Padding::Same).is_err());
    }

    #[test]
    fn relu_forward_and_subgradient() {
        let x = Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.0]);
        let g = Tensor::filled(vec![3], 1.0);
        assert_eq!(relu_backward(&g, &x).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn maxpool_picks_max_and_routes_gradient() {
        let input = Tensor::new(vec![1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (out, argmax) = maxpool2x2(&input).unwrap();
        assert_eq!(out.data(), &[4.0]);
        assert_eq!(argmax, vec![3]); // position (1,1)
        let g = Tensor::new(vec![1, 1, 1, 1], vec![2.5]).unwrap();
        let gi = maxpool2x2_backward(&g, &argmax, input.shape()).unwrap();
        assert_eq!(gi.data(), &[0.0, 0.0, 0.0, 2.5]);
    }

    #[test]
    fn maxpool_tie_breaks_to_first_scan_position() {
        let input = Tensor::filled(vec![1, 1, 2, 2], 7.0);
        let (out, argmax) = maxpool2x2(&input).unwrap();
        assert_eq!(out.data(), &[7.0]);
        assert_eq!(argmax, vec![0]); // position (0,0)
    }

    #[test]
    fn maxpool_rejects_odd_dims() {
        let input = Tensor::<f64>::zeros(vec![1, 1, 3, 4]);
        assert!(maxpool2x2(&input).is_err());
    }

    #[test]
    fn maxpool_matches_per_window_brute_force() {
        let input = random_tensor(vec![1, 2, 8, 8], 11);
        let (out, _) = maxpool2x2(&input).unwrap();
        for c in 0..2 {
            for orow in 0..4 {
                for ocol in 0..4 {
                    let mut best = f64::NEG_INFINITY;
                    for dr in 0..2 {
                        for dc in 0..2 {
                            best =
                                best.max(input.data()[input.idx4(0, c, 2 * orow + dr, 2 * ocol + dc)]);
                        }
                    }
                    assert_eq!(out.data()[out.idx4(0, c, orow, ocol)], best);
                }
            }
        }
    }

    #[test]
    fn upsample_replicates_blocks() {
        let input = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        let out = upsample2x_nearest(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.data(), &[1.0, 1.0, 1.0, 1.0]);
        let g = Tensor::filled(vec![1, 1, 2, 2], 1.0);
        let gi = upsample2x_nearest_backward(&g).unwrap();
        assert_eq!(gi.data(), &[4.0]);
    }

    #[test]
    fn upsample_then_average_pool_is_identity() {
        let input = random_tensor(vec![2, 3, 4, 5], 13);
        let up = upsample2x_nearest(&input).unwrap();
        // 2x2 average pool
        let (_, _, h2, w2) = up.dims4().unwrap();
        let mut down = Tensor::zeros(input.shape().to_vec());
        for n in 0..2 {
            for c in 0..3 {
                let src = up.plane(n, c).to_vec();
                let dst = down.plane_mut(n, c);
                for r in 0..h2 / 2 {
                    for col in 0..w2 / 2 {
                        let base = (2 * r) * w2 + 2 * col;
                        dst[r * (w2 / 2) + col] =
                            (src[base] + src[base + 1] + src[base + w2] + src[base + w2 + 1]) / 4.0;
                    }
                }
            }
        }
        assert!(max_abs_diff(&input, &down) <= 1e-15);
    }

    #[test]
    fn concat_and_split_route_exactly() {
        let a = random_tensor(vec![2, 2, 3, 3], 17);
        let b = random_tensor(vec![2, 3, 3, 3], 18);
        let cat = concat_channels(&a, &b).unwrap();
        assert_eq!(cat.shape(), &[2, 5, 3, 3]);
        let (ga, gb) = split_channels(&cat, 2).unwrap();
        assert_eq!(ga, a);
        assert_eq!(gb, b);
    }

    #[test]
    fn concat_with_empty_is_identity() {
        let a = random_tensor(vec![1, 2, 2, 2], 19);
        let empty = Tensor::<f64>::zeros(vec![1, 0, 2, 2]);
        let cat = concat_channels(&a, &empty).unwrap();
        assert_eq!(cat.shape(), &[1, 2, 2, 2]);
        assert_eq!(cat.data(), a.data());
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let a = Tensor::<f64>::zeros(vec![1, 1, 2, 2]);
        let b = Tensor::<f64>::zeros(vec![1, 1, 3, 2]);
        assert!(concat_channels(&a, &b).is_err());
    }

    #[test]
    fn softmax_equal_logits_are_uniform() {
        let input = Tensor::<f64>::filled(vec![1, 7, 1, 1], 0.3);
        let out = softmax_channels(&input).unwrap();
        for &v in out.data() {
            assert!((v - 1.0 / 7.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_stable_for_huge_logits() {
        let input = Tensor::<f64>::new(vec![1, 2, 1, 1], vec![1000.0, 0.0]).unwrap();
        let out = softmax_channels(&input).unwrap();
        assert!(out.data()[0] > 1.0 - 1e-12);
        assert!(out.data()[1] < 1e-12);
        assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_sums_to_one() {
        let input = random_tensor(vec![2, 7, 4, 4], 23);
        let out = softmax_channels(&input).unwrap();
        let (batch, chans, h, w) = out.dims4().unwrap();
        for n in 0..batch {
            for p in 0..h * w {
                let mut sum = 0.0;
                for c in 0..chans {
                    let v = out.data()[n * chans * h * w + c * h * w + p];
                    assert!(v > 0.0 && v < 1.0);
                    sum += v;
                }
                assert!((sum - 1.0).abs() <= 1e-12);
            }
        }
    }
}
