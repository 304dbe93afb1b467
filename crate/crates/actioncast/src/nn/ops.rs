//! Layer kernels with explicit forward/backward pairs.
//!
//! Conventions: tensors are row-major; 3D feature maps are `[C, D, H, W]`;
//! convolution kernels are `[C_out, C_in, kd, kh, kw]` with stride 1 and
//! same zero padding; dense weights are `[out, in]`.

use crate::error::{Error, Result};
use crate::nn::tensor::{Scalar, Tensor};

fn tap_range(out_len: usize, tap: usize, pad: usize) -> (usize, usize) {
    // Output positions o for which the input index o + tap - pad is valid.
    let lo = pad.saturating_sub(tap);
    let hi = (out_len + pad).saturating_sub(tap).min(out_len);
    (lo, hi.max(lo))
}

/// 3D cross-correlation with same zero padding, stride 1.
pub fn conv3d<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &[T],
) -> Result<Tensor<T>> {
    let [ci_n, d, h, w] = *input.shape() else {
        return Err(Error::ShapeMismatch(format!(
            "conv3d input must be [C,D,H,W], got {:?}",
            input.shape()
        )));
    };
    let [co_n, ci_k, kd, kh, kw] = *kernels.shape() else {
        return Err(Error::ShapeMismatch(format!(
            "conv3d kernels must be [Co,Ci,kd,kh,kw], got {:?}",
            kernels.shape()
        )));
    };
    if ci_k != ci_n || bias.len() != co_n {
        return Err(Error::ShapeMismatch(format!(
            "conv3d: input C={ci_n}, kernel C={ci_k}, bias={}",
            bias.len()
        )));
    }
    if kd % 2 == 0 || kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::ShapeMismatch(
            "conv3d same padding requires odd kernel dims".into(),
        ));
    }
    let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
    let (hw, dhw) = (h * w, d * h * w);
    let mut out = Tensor::zeros(&[co_n, d, h, w]);
    let kdata = kernels.data();
    let idata = input.data();
    let odata = out.data_mut();
    for co in 0..co_n {
        odata[co * dhw..(co + 1) * dhw]
            .iter_mut()
            .for_each(|v| *v = bias[co]);
        for ci in 0..ci_n {
            let kbase = (co * ci_n + ci) * kd * kh * kw;
            for td in 0..kd {
                let (d0, d1) = tap_range(d, td, pd);
                for th in 0..kh {
                    let (h0, h1) = tap_range(h, th, ph);
                    for tw in 0..kw {
                        let kv = kdata[kbase + (td * kh + th) * kw + tw];
                        let (w0, w1) = tap_range(w, tw, pw);
                        if w1 == w0 {
                            continue;
                        }
                        for od in d0..d1 {
                            let id = od + td - pd;
                            for oh in h0..h1 {
                                let ih = oh + th - ph;
                                let ob = co * dhw + od * hw + oh * w;
                                let ib = ci * dhw + id * hw + ih * w + (w0 + tw - pw);
                                let dst = &mut odata[ob + w0..ob + w1];
                                let src = &idata[ib..ib + (w1 - w0)];
                                for (o, &i) in dst.iter_mut().zip(src) {
                                    *o = *o + kv * i;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out.debug_check_finite("conv3d");
    Ok(out)
}

/// Gradients of [`conv3d`] wrt input, kernels and bias.
pub fn conv3d_backward<T: Scalar>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> (Tensor<T>, Tensor<T>, Vec<T>) {
    let [ci_n, d, h, w] = *input.shape() else {
        panic!("conv3d_backward input shape")
    };
    let [co_n, _, kd, kh, kw] = *kernels.shape() else {
        panic!("conv3d_backward kernel shape")
    };
    assert_eq!(grad_out.shape(), &[co_n, d, h, w], "grad_out shape");
    let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
    let (hw, dhw) = (h * w, d * h * w);
    let mut grad_in = Tensor::zeros(input.shape());
    let mut grad_k = Tensor::zeros(kernels.shape());
    let mut grad_b = vec![T::zero(); co_n];
    let kdata = kernels.data();
    let idata = input.data();
    let gout = grad_out.data();
    let gin = grad_in.data_mut();
    let gk = grad_k.data_mut();
    for co in 0..co_n {
        grad_b[co] = gout[co * dhw..(co + 1) * dhw]
            .iter()
            .fold(T::zero(), |acc, &v| acc + v);
        for ci in 0..ci_n {
            let kbase = (co * ci_n + ci) * kd * kh * kw;
            for td in 0..kd {
                let (d0, d1) = tap_range(d, td, pd);
                for th in 0..kh {
                    let (h0, h1) = tap_range(h, th, ph);
                    for tw in 0..kw {
                        let kv = kdata[kbase + (td * kh + th) * kw + tw];
                        let (w0, w1) = tap_range(w, tw, pw);
                        if w1 == w0 {
                            continue;
                        }
                        let mut acc = T::zero();
                        for od in d0..d1 {
                            let id = od + td - pd;
                            for oh in h0..h1 {
                                let ih = oh + th - ph;
                                let ob = co * dhw + od * hw + oh * w + w0;
                                let ib = ci * dhw + id * hw + ih * w + (w0 + tw - pw);
                                let g = &gout[ob..ob + (w1 - w0)];
                                let x = &idata[ib..ib + (w1 - w0)];
                                let dst = &mut gin[ib..ib + (w1 - w0)];
                                for k in 0..g.len() {
                                    acc = acc + g[k] * x[k];
                                    dst[k] = dst[k] + kv * g[k];
                                }
                            }
                        }
                        gk[kbase + (td * kh + th) * kw + tw] = acc;
                    }
                }
            }
        }
    }
    (grad_in, grad_k, grad_b)
}

/// 2x2x2 max pooling with stride 2 and ceil-mode edges. Returns the
/// pooled tensor plus the flat input index of each selected maximum
/// (first occurrence wins on ties).
pub fn maxpool3d<T: Scalar>(input: &Tensor<T>) -> (Tensor<T>, Vec<usize>) {
    let [c_n, d, h, w] = *input.shape() else {
        panic!("maxpool3d input shape")
    };
    let (od, oh, ow) = (d.div_ceil(2), h.div_ceil(2), w.div_ceil(2));
    let mut out = Tensor::zeros(&[c_n, od, oh, ow]);
    let mut argmax = vec![0usize; c_n * od * oh * ow];
    let idata = input.data();
    let odata = out.data_mut();
    let (hw, dhw) = (h * w, d * h * w);
    for c in 0..c_n {
        for zd in 0..od {
            for zh in 0..oh {
                for zw in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0usize;
                    for kd in 0..2usize.min(d - zd * 2) {
                        for kh in 0..2usize.min(h - zh * 2) {
                            for kw in 0..2usize.min(w - zw * 2) {
                                let idx = c * dhw
                                    + (zd * 2 + kd) * hw
                                    + (zh * 2 + kh) * w
                                    + (zw * 2 + kw);
                                if idata[idx] > best {
                                    best = idata[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    let o = ((c * od + zd) * oh + zh) * ow + zw;
                    odata[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
    }
    (out, argmax)
}

/// Routes pooled gradients back to the recorded argmax positions.
pub fn maxpool3d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    assert_eq!(grad_out.len(), argmax.len(), "argmax length");
    let mut grad_in = Tensor::zeros(input_shape);
    let gin = grad_in.data_mut();
    for (g, &idx) in grad_out.data().iter().zip(argmax) {
        gin[idx] = gin[idx] + *g;
    }
    grad_in
}

/// `y = W x + b` with `W: [m, n]`.
pub fn dense<T: Scalar>(x: &[T], weight: &Tensor<T>, bias: &[T]) -> Vec<T> {
    let [m, n] = *weight.shape() else {
        panic!("dense weight shape")
    };
    assert_eq!(x.len(), n, "dense input length");
    assert_eq!(bias.len(), m, "dense bias length");
    let wd = weight.data();
    (0..m)
        .map(|i| {
            let row = &wd[i * n..(i + 1) * n];
            row.iter()
                .zip(x)
                .fold(bias[i], |acc, (&wv, &xv)| acc + wv * xv)
        })
        .collect()
}

/// Gradients of [`dense`]: returns (grad_x, grad_w, grad_b).
pub fn dense_backward<T: Scalar>(
    x: &[T],
    weight: &Tensor<T>,
    grad_y: &[T],
) -> (Vec<T>, Tensor<T>, Vec<T>) {
    let [m, n] = *weight.shape() else {
        panic!("dense weight shape")
    };
    let wd = weight.data();
    let mut grad_x = vec![T::zero(); n];
    let mut grad_w = Tensor::zeros(&[m, n]);
    let gw = grad_w.data_mut();
    for i in 0..m {
        let g = grad_y[i];
        let row = &wd[i * n..(i + 1) * n];
        let grow = &mut gw[i * n..(i + 1) * n];
        for j in 0..n {
            grad_x[j] = grad_x[j] + row[j] * g;
            grow[j] = g * x[j];
        }
    }
    (grad_x, grad_w, grad_y.to_vec())
}

pub fn relu<T: Scalar>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect()
}

/// Gradient mask uses the forward input; the subgradient at 0 is 0.
pub fn relu_backward<T: Scalar>(x: &[T], grad_y: &[T]) -> Vec<T> {
    x.iter()
        .zip(grad_y)
        .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
        .collect()
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum = exps.iter().fold(T::zero(), |a, &b| a + b);
    exps.into_iter().map(|v| v / sum).collect()
}

/// Cross-entropy of softmax(logits) against a class id.
/// Returns the loss and its gradient `softmax(logits) - onehot(target)`.
pub fn softmax_xent<T: Scalar>(logits: &[T], target: usize) -> (T, Vec<T>) {
    assert!(target < logits.len(), "target class out of range");
    let mut grad = softmax(logits);
    let p = grad[target];
    let loss = -(p.max(T::of_f64(1e-300))).ln();
    grad[target] = grad[target] - T::one();
    (loss, grad)
}

/// Row lookup into an embedding table `[vocab, dim]`.
pub fn embedding<T: Scalar>(table: &Tensor<T>, id: usize) -> Vec<T> {
    let [v, e] = *table.shape() else {
        panic!("embedding table shape")
    };
    assert!(id < v, "embedding id {id} out of range {v}");
    table.data()[id * e..(id + 1) * e].to_vec()
}

/// Accumulates the gradient of one looked-up row into `grad_table`.
pub fn embedding_backward<T: Scalar>(grad_table: &mut Tensor<T>, id: usize, grad: &[T]) {
    let e = grad.len();
    let row = &mut grad_table.data_mut()[id * e..(id + 1) * e];
    for (r, &g) in row.iter_mut().zip(grad) {
        *r = *r + g;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(shape, data)
    }

    #[test]
    fn conv3d_identity_kernel() {
        let input = t(&[1, 2, 3, 3], (0..18).map(|v| v as f64).collect());
        let kernels = t(&[1, 1, 1, 1, 1], vec![1.0]);
        let out = conv3d(&input, &kernels, &[0.0]).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv3d_ones_kernel_counts_taps_over_hot_voxel() {
        // One-hot input; with an all-ones 3x3x3 kernel, output at p equals
        // the number of kernel taps that reach the hot voxel from p, i.e.
        // 1 wherever |p - hot| <= 1 in every axis, else 0.
        let (d, h, w) = (4, 5, 5);
        let hot = (2usize, 1usize, 3usize);
        let mut data = vec![0.0; d * h * w];
        data[hot.0 * h * w + hot.1 * w + hot.2] = 1.0;
        let input = t(&[1, d, h, w], data);
        let kernels = t(&[1, 1, 3, 3, 3], vec![1.0; 27]);
        let out = conv3d(&input, &kernels, &[0.0]).unwrap();
        // Independent 6-loop direct summation oracle.
        for od in 0..d {
            for oh in 0..h {
                for ow in 0..w {
                    let mut expect = 0.0;
                    for td in 0..3usize {
                        for th in 0..3usize {
                            for tw in 0..3usize {
                                let id = od as isize + td as isize - 1;
                                let ih = oh as isize + th as isize - 1;
                                let iw = ow as isize + tw as isize - 1;
                                if id == hot.0 as isize && ih == hot.1 as isize && iw == hot.2 as isize {
                                    expect += 1.0;
                                }
                            }
                        }
                    }
                    let got = out.data()[od * h * w + oh * w + ow];
                    assert_eq!(got, expect, "at ({od},{oh},{ow})");
                }
            }
        }
    }

    #[test]
    fn conv3d_zero_kernels_broadcast_bias() {
        let input = t(&[2, 2, 2, 2], vec![3.0; 16]);
        let kernels = Tensor::zeros(&[3, 2, 1, 1, 1]);
        let out = conv3d(&input, &kernels, &[1.0, -2.0, 0.5]).unwrap();
        for co in 0..3 {
            for v in &out.data()[co * 8..(co + 1) * 8] {
                assert_eq!(*v, [1.0, -2.0, 0.5][co]);
            }
        }
    }

    #[test]
    fn conv3d_is_linear_in_input() {
        let mut rng = 0xDEADBEEFu64;
        let mut next = move || {
            rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((rng >> 33) as f64 / (1u64 << 31) as f64) - 0.5
        };
        let a = t(&[2, 3, 4, 4], (0..96).map(|_| next()).collect());
        let b = t(&[2, 3, 4, 4], (0..96).map(|_| next()).collect());
        let k = t(&[3, 2, 3, 3, 3], (0..162).map(|_| next()).collect());
        let bias = vec![0.0; 3];
        let mut sum = a.clone();
        sum.add_assign(&b);
        let lhs = conv3d(&sum, &k, &bias).unwrap();
        let ra = conv3d(&a, &k, &bias).unwrap();
        let rb = conv3d(&b, &k, &bias).unwrap();
        for i in 0..lhs.len() {
            let rhs = ra.data()[i] + rb.data()[i];
            assert!((lhs.data()[i] - rhs).abs() < 1e-5);
        }
    }

    #[test]
    fn maxpool_constant_input_stays_constant() {
        let input = t(&[1, 2, 4, 4], vec![7.0; 32]);
        let (out, _) = maxpool3d(&input);
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert!(out.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn maxpool_increasing_raster_picks_last_window_element() {
        let (d, h, w) = (4usize, 4usize, 4usize);
        let input = t(&[1, d, h, w], (0..64).map(|v| v as f64).collect());
        let (out, argmax) = maxpool3d(&input);
        // Brute-force window oracle.
        let mut k = 0;
        for zd in 0..2 {
            for zh in 0..2 {
                for zw in 0..2 {
                    let mut expect = f64::NEG_INFINITY;
                    let mut eidx = 0usize;
                    for kd in 0..2 {
                        for kh in 0..2 {
                            for kw in 0..2 {
                                let idx = (zd * 2 + kd) * h * w + (zh * 2 + kh) * w + (zw * 2 + kw);
                                if (idx as f64) > expect {
                                    expect = idx as f64;
                                    eidx = idx;
                                }
                            }
                        }
                    }
                    assert_eq!(out.data()[k], expect);
                    assert_eq!(argmax[k], eidx);
                    k += 1;
                }
            }
        }
    }

    #[test]
    fn maxpool_ceil_mode_covers_odd_dims() {
        let input = t(&[1, 1, 3, 3], (0..9).map(|v| v as f64).collect());
        let (out, _) = maxpool3d(&input);
        assert_eq!(out.shape(), &[1, 1, 2, 2]);
        assert_eq!(out.data(), &[4.0, 5.0, 7.0, 8.0]);
    }

    #[test]
    fn maxpool_tie_takes_first_occurrence() {
        let input = t(&[1, 1, 2, 2], vec![3.0, 3.0, 3.0, 3.0]);
        let (_, argmax) = maxpool3d(&input);
        assert_eq!(argmax, vec![0]);
    }

    #[test]
    fn softmax_xent_uniform_is_ln_k() {
        let logits = vec![0.25f64; 11];
        let (loss, _) = softmax_xent(&logits, 4);
        assert!((loss - (11f64).ln()).abs() < 1e-12);
        assert!((loss - 2.3979).abs() < 1e-4);
    }

    #[test]
    fn softmax_xent_confident_correct_is_near_zero() {
        let mut logits = vec![0.0f64; 11];
        logits[3] = 100.0;
        let (loss, _) = softmax_xent(&logits, 3);
        assert!(loss < 1e-12);
    }

    #[test]
    fn softmax_xent_grad_is_probs_minus_onehot() {
        let logits = vec![0.3f64, -1.2, 2.0, 0.0];
        let (_, grad) = softmax_xent(&logits, 2);
        let probs = softmax(&logits);
        for i in 0..4 {
            let expect = probs[i] - if i == 2 { 1.0 } else { 0.0 };
            assert!((grad[i] - expect).abs() < 1e-12);
        }
        let total: f64 = grad.iter().sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn dense_matches_manual_product() {
        let w = t(&[2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.5, 2.0]);
        let y = dense(&[1.0, 0.0, 2.0], &w, &[10.0, -10.0]);
        assert_eq!(y, vec![10.0 + 7.0, -10.0 + 3.0]);
    }

    #[test]
    fn embedding_roundtrip_and_grad() {
        let table = t(&[3, 2], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(embedding(&table, 1), vec![2.0, 3.0]);
        let mut g = Tensor::zeros(&[3, 2]);
        embedding_backward(&mut g, 1, &[0.5, 0.25]);
        embedding_backward(&mut g, 1, &[0.5, 0.25]);
        assert_eq!(g.data(), &[0.0, 0.0, 1.0, 0.5, 0.0, 0.0]);
    }
}
