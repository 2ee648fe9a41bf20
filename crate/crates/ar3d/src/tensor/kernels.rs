//! Layer kernels: 3D convolution, 2x2x2 max-pooling, dense, ReLU, and the
//! softmax cross-entropy head, each with its exact analytic adjoint.
//!
//! Convolutions use stride 1 and symmetric zero same-padding, so spatial and
//! temporal extents are preserved. Pooling uses floor semantics: trailing odd
//! rows/columns/frames are dropped.

use crate::error::{Error, Result};
use crate::tensor::{ConvGeom, Tensor};

/// Pooling window edge; the pool is a disjoint 2x2x2 block grid.
pub const POOL_WINDOW: usize = 2;

fn expect_rank(t: &Tensor, rank: usize, what: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(Error::Shape(format!(
            "{}: rank {} tensor required, found shape {:?}",
            what,
            rank,
            t.shape()
        )));
    }
    Ok(())
}

/// Per-axis shift range of a same-padded kernel: output index + shift = input index.
/// Returns, for a shift `s`, the valid output range [lo, hi) on an axis of size `n`.
#[inline]
fn shifted_range(n: usize, s: isize) -> (usize, usize) {
    let lo = if s < 0 { (-s) as usize } else { 0 };
    let hi = if s > 0 { n - s as usize } else { n };
    (lo, hi.max(lo))
}

/// 3D convolution forward over a single sample.
///
/// `input` is [Cin, T, H, W], `weights` [Cout, Cin, kT, kH, kW], `bias` [Cout];
/// the output is [Cout, T, H, W].
pub fn conv3d_forward(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    geom: &ConvGeom,
) -> Result<Tensor> {
    let (cin, t, h, w) = conv_check(input, weights, bias, geom)?;
    let cout = weights.shape()[0];
    let (kt, kh, kw) = geom.kernel;
    let (pt, ph, pw) = geom.padding();

    let plane = t * h * w;
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0.0f32; cout * plane];
    let mut acc = vec![0.0f64; plane];

    for f in 0..cout {
        acc.fill(bias.data()[f] as f64);
        for c in 0..cin {
            let xc = &x[c * plane..(c + 1) * plane];
            for dt in 0..kt {
                let st = dt as isize - pt as isize;
                let (t0, t1) = shifted_range(t, st);
                for dh in 0..kh {
                    let sh = dh as isize - ph as isize;
                    let (h0, h1) = shifted_range(h, sh);
                    for dw in 0..kw {
                        let sw = dw as isize - pw as isize;
                        let (w0, w1) = shifted_range(w, sw);
                        if w0 >= w1 || h0 >= h1 || t0 >= t1 {
                            continue;
                        }
                        let wv = wt[(((f * cin + c) * kt + dt) * kh + dh) * kw + dw] as f64;
                        for ot in t0..t1 {
                            let it = (ot as isize + st) as usize;
                            for oh in h0..h1 {
                                let ih = (oh as isize + sh) as usize;
                                let src = &xc[(it * h + ih) * w + ((w0 as isize + sw) as usize)..];
                                let dst = &mut acc[(ot * h + oh) * w + w0..];
                                for i in 0..(w1 - w0) {
                                    dst[i] += wv * src[i] as f64;
                                }
                            }
                        }
                    }
                }
            }
        }
        for (o, a) in out[f * plane..(f + 1) * plane].iter_mut().zip(&acc) {
            *o = *a as f32;
        }
    }
    Tensor::new(vec![cout, t, h, w], out)
}

/// Gradients of [`conv3d_forward`] with respect to input, weights, and bias.
pub struct Conv3dGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Exact analytic adjoint of the same-padded stride-1 convolution.
pub fn conv3d_backward(
    input: &Tensor,
    weights: &Tensor,
    geom: &ConvGeom,
    grad_out: &Tensor,
) -> Result<Conv3dGrads> {
    let bias_probe = Tensor::zeros(&[weights.shape()[0]]);
    let (cin, t, h, w) = conv_check(input, weights, &bias_probe, geom)?;
    let cout = weights.shape()[0];
    grad_out.expect_shape(&[cout, t, h, w], "conv3d_backward grad_out")?;

    let (kt, kh, kw) = geom.kernel;
    let (pt, ph, pw) = geom.padding();
    let plane = t * h * w;
    let x = input.data();
    let wt = weights.data();
    let gy = grad_out.data();

    // Bias: plain plane sums.
    let mut gb = vec![0.0f32; cout];
    for f in 0..cout {
        let mut s = 0.0f64;
        for v in &gy[f * plane..(f + 1) * plane] {
            s += *v as f64;
        }
        gb[f] = s as f32;
    }

    // Weights: shifted dot products of grad-out rows against input rows.
    let mut gw = vec![0.0f32; wt.len()];
    for f in 0..cout {
        let gyf = &gy[f * plane..(f + 1) * plane];
        for c in 0..cin {
            let xc = &x[c * plane..(c + 1) * plane];
            for dt in 0..kt {
                let st = dt as isize - pt as isize;
                let (t0, t1) = shifted_range(t, st);
                for dh in 0..kh {
                    let sh = dh as isize - ph as isize;
                    let (h0, h1) = shifted_range(h, sh);
                    for dw in 0..kw {
                        let sw = dw as isize - pw as isize;
                        let (w0, w1) = shifted_range(w, sw);
                        let mut s = 0.0f64;
                        for ot in t0..t1 {
                            let it = (ot as isize + st) as usize;
                            for oh in h0..h1 {
                                let ih = (oh as isize + sh) as usize;
                                let src = &xc[(it * h + ih) * w + ((w0 as isize + sw) as usize)..];
                                let g = &gyf[(ot * h + oh) * w + w0..];
                                for i in 0..w1.saturating_sub(w0) {
                                    s += g[i] as f64 * src[i] as f64;
                                }
                            }
                        }
                        gw[(((f * cin + c) * kt + dt) * kh + dh) * kw + dw] = s as f32;
                    }
                }
            }
        }
    }

    // Input: scatter each grad-out row back through the kernel taps.
    let mut gx = vec![0.0f32; x.len()];
    let mut acc = vec![0.0f64; plane];
    for c in 0..cin {
        acc.fill(0.0);
        for f in 0..cout {
            let gyf = &gy[f * plane..(f + 1) * plane];
            for dt in 0..kt {
                let st = dt as isize - pt as isize;
                let (t0, t1) = shifted_range(t, st);
                for dh in 0..kh {
                    let sh = dh as isize - ph as isize;
                    let (h0, h1) = shifted_range(h, sh);
                    for dw in 0..kw {
                        let sw = dw as isize - pw as isize;
                        let (w0, w1) = shifted_range(w, sw);
                        if w0 >= w1 || h0 >= h1 || t0 >= t1 {
                            continue;
                        }
                        let wv = wt[(((f * cin + c) * kt + dt) * kh + dh) * kw + dw] as f64;
                        for ot in t0..t1 {
                            let it = (ot as isize + st) as usize;
                            for oh in h0..h1 {
                                let ih = (oh as isize + sh) as usize;
                                let g = &gyf[(ot * h + oh) * w + w0..];
                                let dst =
                                    &mut acc[(it * h + ih) * w + ((w0 as isize + sw) as usize)..];
                                for i in 0..(w1 - w0) {
                                    dst[i] += wv * g[i] as f64;
                                }
                            }
                        }
                    }
                }
            }
        }
        for (o, a) in gx[c * plane..(c + 1) * plane].iter_mut().zip(&acc) {
            *o = *a as f32;
        }
    }

    Ok(Conv3dGrads {
        input: Tensor::new(input.shape().to_vec(), gx)?,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![cout], gb)?,
    })
}

fn conv_check(
    input: &Tensor,
    weights: &Tensor,
    bias: &Tensor,
    geom: &ConvGeom,
) -> Result<(usize, usize, usize, usize)> {
    expect_rank(input, 4, "conv3d input")?;
    expect_rank(weights, 5, "conv3d weights")?;
    expect_rank(bias, 1, "conv3d bias")?;
    let (cin, t, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (kt, kh, kw) = geom.kernel;
    weights.expect_shape(
        &[weights.shape()[0], cin, kt, kh, kw],
        "conv3d weights vs input/geom",
    )?;
    bias.expect_shape(&[weights.shape()[0]], "conv3d bias vs weights")?;
    Ok((cin, t, h, w))
}

/// Argmax positions recorded by a pooling forward pass, consumed by backward.
#[derive(Debug, Clone)]
pub struct PoolIndexMap {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    /// Flat index into the forward input for each output cell's maximum.
    indices: Vec<usize>,
}

impl PoolIndexMap {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }
    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// 2x2x2 max pool with floor semantics over [C, T, H, W].
///
/// Ties resolve to the first occurrence in row-major scan order of the block,
/// which makes backward routing deterministic.
pub fn maxpool3d_forward(input: &Tensor) -> Result<(Tensor, PoolIndexMap)> {
    expect_rank(input, 4, "maxpool3d input")?;
    let (c, t, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    for (name, n) in [("T", t), ("H", h), ("W", w)] {
        if n < POOL_WINDOW {
            return Err(Error::Shape(format!(
                "maxpool3d: axis {} is {} but the 2x2x2 window needs >= 2",
                name, n
            )));
        }
    }
    let (ot, oh, ow) = (t / 2, h / 2, w / 2);
    let x = input.data();
    let mut out = vec![0.0f32; c * ot * oh * ow];
    let mut indices = vec![0usize; out.len()];

    let mut o = 0;
    for ci in 0..c {
        for bt in 0..ot {
            for bh in 0..oh {
                for bw in 0..ow {
                    let mut best = f32::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for dt in 0..POOL_WINDOW {
                        for dh in 0..POOL_WINDOW {
                            for dw in 0..POOL_WINDOW {
                                let idx = ((ci * t + bt * 2 + dt) * h + bh * 2 + dh) * w
                                    + bw * 2
                                    + dw;
                                let v = x[idx];
                                if v > best {
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                    }
                    out[o] = best;
                    indices[o] = best_idx;
                    o += 1;
                }
            }
        }
    }

    let out_shape = vec![c, ot, oh, ow];
    let map = PoolIndexMap {
        input_shape: input.shape().to_vec(),
        output_shape: out_shape.clone(),
        indices,
    };
    Ok((Tensor::new(out_shape, out)?, map))
}

/// Routes gradient only to the recorded argmax positions; all else is zero.
pub fn maxpool3d_backward(map: &PoolIndexMap, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.expect_shape(&map.output_shape, "maxpool3d_backward grad_out")?;
    let in_len: usize = map.input_shape.iter().product();
    if map.indices.len() != grad_out.len() {
        return Err(Error::Shape(format!(
            "maxpool3d_backward: index map holds {} entries but grad_out has {}",
            map.indices.len(),
            grad_out.len()
        )));
    }
    let mut gx = vec![0.0f32; in_len];
    for (&idx, &g) in map.indices.iter().zip(grad_out.data()) {
        if idx >= in_len {
            return Err(Error::Shape(format!(
                "maxpool3d_backward: stale index map (index {} outside input of {} elements)",
                idx, in_len
            )));
        }
        gx[idx] += g;
    }
    Tensor::new(map.input_shape.clone(), gx)
}

/// Fully-connected forward: out[u] = bias[u] + sum_d weights[u,d] * input[d].
pub fn dense_forward(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (u, d) = dense_check(input, weights, bias)?;
    let x = input.data();
    let wt = weights.data();
    let mut out = vec![0.0f32; u];
    for (ui, o) in out.iter_mut().enumerate() {
        let row = &wt[ui * d..(ui + 1) * d];
        let mut s = bias.data()[ui] as f64;
        for (wv, xv) in row.iter().zip(x) {
            s += *wv as f64 * *xv as f64;
        }
        *o = s as f32;
    }
    Tensor::new(vec![u], out)
}

pub struct DenseGrads {
    pub input: Tensor,
    pub weights: Tensor,
    pub bias: Tensor,
}

/// Analytic adjoints of [`dense_forward`]; grad_weights[u,d] = grad_out[u] * input[d].
pub fn dense_backward(input: &Tensor, weights: &Tensor, grad_out: &Tensor) -> Result<DenseGrads> {
    expect_rank(input, 1, "dense input")?;
    expect_rank(weights, 2, "dense weights")?;
    let (u, d) = (weights.shape()[0], weights.shape()[1]);
    input.expect_shape(&[d], "dense input vs weights")?;
    grad_out.expect_shape(&[u], "dense_backward grad_out")?;

    let x = input.data();
    let wt = weights.data();
    let gy = grad_out.data();

    let mut gx = vec![0.0f64; d];
    let mut gw = vec![0.0f32; wt.len()];
    for ui in 0..u {
        let g = gy[ui] as f64;
        let row = &wt[ui * d..(ui + 1) * d];
        let grow = &mut gw[ui * d..(ui + 1) * d];
        for di in 0..d {
            gx[di] += g * row[di] as f64;
            grow[di] = (g * x[di] as f64) as f32;
        }
    }
    Ok(DenseGrads {
        input: Tensor::new(vec![d], gx.iter().map(|&v| v as f32).collect())?,
        weights: Tensor::new(weights.shape().to_vec(), gw)?,
        bias: Tensor::new(vec![u], gy.to_vec())?,
    })
}

fn dense_check(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<(usize, usize)> {
    expect_rank(input, 1, "dense input")?;
    expect_rank(weights, 2, "dense weights")?;
    expect_rank(bias, 1, "dense bias")?;
    let (u, d) = (weights.shape()[0], weights.shape()[1]);
    input.expect_shape(&[d], "dense input vs weights")?;
    bias.expect_shape(&[u], "dense bias vs weights")?;
    Ok((u, d))
}

/// Elementwise max(0, x).
pub fn relu(input: &Tensor) -> Tensor {
    let data = input.data().iter().map(|&v| v.max(0.0)).collect();
    Tensor::new(input.shape().to_vec(), data).expect("relu preserves shape")
}

/// Gradient passes where x > 0; the subgradient at exactly 0 is taken as 0.
pub fn relu_backward(input: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    grad_out.expect_shape(input.shape(), "relu_backward grad_out")?;
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(input.shape().to_vec(), data)
}

/// Result of the classification head: stabilized probabilities (64-bit, they
/// sum to 1 within 1e-12), negative log-likelihood, and the logit gradient.
pub struct SoftmaxOutput {
    pub loss: f64,
    pub probs: Vec<f64>,
    pub grad_logits: Tensor,
}

/// Stabilized softmax over a 1-D logit vector.
pub fn softmax(logits: &Tensor) -> Result<Vec<f64>> {
    expect_rank(logits, 1, "softmax logits")?;
    let max = logits
        .data()
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits.data().iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Ok(exps.iter().map(|e| e / sum).collect())
}

/// Softmax with max-subtraction plus cross-entropy against a class index.
///
/// grad_logits = probs - onehot(target), the exact gradient of the loss.
pub fn softmax_cross_entropy(logits: &Tensor, target: usize) -> Result<SoftmaxOutput> {
    expect_rank(logits, 1, "softmax logits")?;
    let k = logits.shape()[0];
    if target >= k {
        return Err(Error::Config(format!(
            "softmax target class {} out of range for {} classes",
            target, k
        )));
    }
    let max = logits
        .data()
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits.data().iter().map(|&v| (v as f64 - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / sum).collect();
    let loss = sum.ln() - (logits.data()[target] as f64 - max);
    let grad: Vec<f32> = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| (p - if i == target { 1.0 } else { 0.0 }) as f32)
        .collect();
    Ok(SoftmaxOutput {
        loss,
        probs,
        grad_logits: Tensor::new(vec![k], grad)?,
    })
}
