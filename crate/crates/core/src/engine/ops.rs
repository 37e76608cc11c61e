//! Numeric kernels. Buffers are row-major with the sample index outermost;
//! maps are laid out `(z, r, c)` per sample.
//!
//! Work is split over samples for outputs and input gradients, and over
//! parameter rows for parameter gradients, so every sum is taken in a fixed
//! order no matter how many threads run it.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::sema::Activation;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// `y[i, j] = b[j] + Σ_k w[j, k] · x[i, k]` with `w` stored `(d_out, d_in)`.
pub fn fc_pre(x: &[f64], d_in: usize, w: &[f64], b: &[f64], y: &mut [f64]) {
    let d_out = b.len();
    y.par_chunks_mut(d_out).zip(x.par_chunks(d_in)).for_each(|(yr, xr)| {
        for (j, out) in yr.iter_mut().enumerate() {
            let wr = &w[j * d_in..(j + 1) * d_in];
            *out = b[j] + wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
        }
    });
}

/// Gradients of [`fc_pre`]. `dw` and `db` are overwritten.
pub fn fc_backward(
    x: &[f64],
    d_in: usize,
    w: &[f64],
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dw: &mut [f64],
    db: &mut [f64],
) {
    let d_out = db.len();
    let n = dy.len() / d_out;
    dw.par_chunks_mut(d_in).zip(db.par_iter_mut()).enumerate().for_each(|(j, (row, bj))| {
        row.fill(0.0);
        *bj = 0.0;
        for i in 0..n {
            let g = dy[i * d_out + j];
            if g != 0.0 {
                for (r, xv) in row.iter_mut().zip(&x[i * d_in..(i + 1) * d_in]) {
                    *r += g * xv;
                }
            }
            *bj += g;
        }
    });
    if let Some(dx) = dx {
        dx.par_chunks_mut(d_in).zip(dy.par_chunks(d_out)).for_each(|(dxr, dyr)| {
            dxr.fill(0.0);
            for (j, g) in dyr.iter().enumerate() {
                if *g != 0.0 {
                    for (d, wv) in dxr.iter_mut().zip(&w[j * d_in..(j + 1) * d_in]) {
                        *d += g * wv;
                    }
                }
            }
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub z: usize,
    pub r: usize,
    pub c: usize,
    pub nk: usize,
    pub kr: usize,
    pub kc: usize,
    pub rpad: usize,
    pub cpad: usize,
    pub stride: usize,
}

impl ConvGeom {
    pub fn out_r(&self) -> usize {
        (self.r + 2 * self.rpad - self.kr) / self.stride + 1
    }

    pub fn out_c(&self) -> usize {
        (self.c + 2 * self.cpad - self.kc) / self.stride + 1
    }

    pub fn in_size(&self) -> usize {
        self.z * self.r * self.c
    }

    pub fn out_size(&self) -> usize {
        self.nk * self.out_r() * self.out_c()
    }

    pub fn kernel_size(&self) -> usize {
        self.z * self.kr * self.kc
    }

    /// Input coordinate under output `o` and kernel offset `k`, if not padding.
    fn src(o: usize, k: usize, stride: usize, pad: usize, n: usize) -> Option<usize> {
        (o * stride + k).checked_sub(pad).filter(|&v| v < n)
    }
}

/// Cross-correlation with zero padding; kernels are `(nk, z, kr, kc)`.
pub fn conv_pre(x: &[f64], g: &ConvGeom, k: &[f64], b: &[f64], y: &mut [f64]) {
    let (or, oc) = (g.out_r(), g.out_c());
    y.par_chunks_mut(g.out_size()).zip(x.par_chunks(g.in_size())).for_each(|(ys, xs)| {
        for f in 0..g.nk {
            let kf = &k[f * g.kernel_size()..(f + 1) * g.kernel_size()];
            for oy in 0..or {
                for ox in 0..oc {
                    let mut s = 0.0;
                    for ch in 0..g.z {
                        for ky in 0..g.kr {
                            let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.rpad, g.r) else { continue };
                            let xrow = &xs[(ch * g.r + iy) * g.c..];
                            let krow = &kf[(ch * g.kr + ky) * g.kc..];
                            for kx in 0..g.kc {
                                if let Some(ix) = ConvGeom::src(ox, kx, g.stride, g.cpad, g.c) {
                                    s += krow[kx] * xrow[ix];
                                }
                            }
                        }
                    }
                    ys[(f * or + oy) * oc + ox] = b[f] + s;
                }
            }
        }
    });
}

/// Gradients of [`conv_pre`]. `dk` and `db` are overwritten.
pub fn conv_backward(
    x: &[f64],
    g: &ConvGeom,
    k: &[f64],
    dy: &[f64],
    dx: Option<&mut [f64]>,
    dk: &mut [f64],
    db: &mut [f64],
) {
    let (or, oc) = (g.out_r(), g.out_c());
    let n = dy.len() / g.out_size();
    let ks = g.kernel_size();
    dk.par_chunks_mut(ks).zip(db.par_iter_mut()).enumerate().for_each(|(f, (kf, bf))| {
        kf.fill(0.0);
        *bf = 0.0;
        for i in 0..n {
            let xs = &x[i * g.in_size()..(i + 1) * g.in_size()];
            let ds = &dy[i * g.out_size() + f * or * oc..i * g.out_size() + (f + 1) * or * oc];
            for oy in 0..or {
                for ox in 0..oc {
                    let d = ds[oy * oc + ox];
                    *bf += d;
                    if d == 0.0 {
                        continue;
                    }
                    for ch in 0..g.z {
                        for ky in 0..g.kr {
                            let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.rpad, g.r) else { continue };
                            for kx in 0..g.kc {
                                if let Some(ix) = ConvGeom::src(ox, kx, g.stride, g.cpad, g.c) {
                                    kf[(ch * g.kr + ky) * g.kc + kx] += d * xs[(ch * g.r + iy) * g.c + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
    if let Some(dx) = dx {
        dx.par_chunks_mut(g.in_size()).zip(dy.par_chunks(g.out_size())).for_each(|(dxs, ds)| {
            dxs.fill(0.0);
            for f in 0..g.nk {
                let kf = &k[f * ks..(f + 1) * ks];
                for oy in 0..or {
                    for ox in 0..oc {
                        let d = ds[(f * or + oy) * oc + ox];
                        if d == 0.0 {
                            continue;
                        }
                        for ch in 0..g.z {
                            for ky in 0..g.kr {
                                let Some(iy) = ConvGeom::src(oy, ky, g.stride, g.rpad, g.r) else { continue };
                                for kx in 0..g.kc {
                                    if let Some(ix) = ConvGeom::src(ox, kx, g.stride, g.cpad, g.c) {
                                        dxs[(ch * g.r + iy) * g.c + ix] += d * kf[(ch * g.kr + ky) * g.kc + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    }
}

/// Non-overlapping max pooling. `idx` receives, per output, the flat index of
/// the winning input within its sample; ties go to the lowest index.
pub fn maxpool(x: &[f64], (z, r, c): (usize, usize, usize), sr: usize, sc: usize, y: &mut [f64], idx: &mut [usize]) {
    let (or, oc) = (r / sr, c / sc);
    let out = z * or * oc;
    y.par_chunks_mut(out).zip(idx.par_chunks_mut(out)).zip(x.par_chunks(z * r * c)).for_each(|((ys, is), xs)| {
        for ch in 0..z {
            for oy in 0..or {
                for ox in 0..oc {
                    let mut best = usize::MAX;
                    for wy in 0..sr {
                        for wx in 0..sc {
                            let p = (ch * r + oy * sr + wy) * c + ox * sc + wx;
                            if best == usize::MAX || xs[p] > xs[best] {
                                best = p;
                            }
                        }
                    }
                    let o = (ch * or + oy) * oc + ox;
                    ys[o] = xs[best];
                    is[o] = best;
                }
            }
        }
    });
}

pub fn maxpool_backward(dy: &[f64], idx: &[usize], in_size: usize, dx: &mut [f64]) {
    let out = idx.len() / (dx.len() / in_size).max(1);
    dx.par_chunks_mut(in_size).zip(dy.par_chunks(out)).zip(idx.par_chunks(out)).for_each(|((dxs, ds), is)| {
        dxs.fill(0.0);
        for (d, &i) in ds.iter().zip(is) {
            dxs[i] += d;
        }
    });
}

pub fn activate(act: Activation, v: f64) -> f64 {
    match act {
        Activation::Linear => v,
        Activation::Relu => v.max(0.0),
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
        Activation::Elu => {
            if v > 0.0 {
                v
            } else {
                v.exp_m1()
            }
        }
    }
}

/// Derivative of [`activate`] given its input `v` and output `y`.
pub fn activate_grad(act: Activation, v: f64, y: f64) -> f64 {
    match act {
        Activation::Linear => 1.0,
        Activation::Relu => {
            if v > 0.0 {
                1.0
            } else {
                0.0
            }
        }
        Activation::Sigmoid => y * (1.0 - y),
        Activation::Elu => {
            if v > 0.0 {
                1.0
            } else {
                y + 1.0
            }
        }
    }
}

/// Row-wise softmax of `(n, k)` logits.
pub fn softmax(logits: &[f64], k: usize, out: &mut [f64]) {
    for (o, l) in out.chunks_mut(k).zip(logits.chunks(k)) {
        let m = l.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (oj, lj) in o.iter_mut().zip(l) {
            *oj = (lj - m).exp();
            s += *oj;
        }
        for oj in o.iter_mut() {
            *oj /= s;
        }
    }
}

/// Mean cross-entropy `−(1/n) Σ log p[label]` and its gradient with respect
/// to the logits, `(p − onehot)/n`.
pub fn cross_entropy(probs: &[f64], k: usize, labels: &[usize], grad: &mut [f64]) -> f64 {
    let n = labels.len();
    let mut cost = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let p = &probs[i * k..(i + 1) * k];
        cost -= p[y].max(f64::MIN_POSITIVE).ln();
        for j in 0..k {
            grad[i * k + j] = (p[j] - if j == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    cost / n as f64
}

/// Mean squared error `(1/n) Σ ‖y − t‖²` and its gradient `2(y − t)/n`.
pub fn mse(y: &[f64], t: &[f64], n: usize, grad: &mut [f64]) -> f64 {
    let mut cost = 0.0;
    for ((g, yv), tv) in grad.iter_mut().zip(y).zip(t) {
        let d = yv - tv;
        cost += d * d;
        *g = 2.0 * d / n as f64;
    }
    cost / n as f64
}

/// Batch-norm statistics over `groups` channels, each with `inner` values per
/// sample: returns per-group mean and (biased) variance.
pub fn bn_stats(v: &[f64], groups: usize, inner: usize) -> (Vec<f64>, Vec<f64>) {
    let n = v.len() / (groups * inner);
    let m = (n * inner) as f64;
    let mut mean = vec![0.0; groups];
    let mut var = vec![0.0; groups];
    for (gi, (mu, va)) in mean.iter_mut().zip(var.iter_mut()).enumerate() {
        let vals = (0..n).flat_map(|i| v[(i * groups + gi) * inner..(i * groups + gi + 1) * inner].iter());
        *mu = vals.clone().sum::<f64>() / m;
        *va = vals.map(|x| (x - *mu) * (x - *mu)).sum::<f64>() / m;
    }
    (mean, var)
}

// ------------------------------------------------------------------------
// Tensor-level forms of the kernels.

/// `act(x·Wᵀ + b)` for `x: (n, d_in)` and `W: (d_out, d_in)`.
pub fn forward_fc(x: &Tensor, w: &Tensor, b: &[f64], act: Activation) -> Tensor {
    let (n, d_in) = (x.shape[0], x.shape[1]);
    assert_eq!(w.shape, [b.len(), d_in], "weight shape");
    let mut y = Tensor::zeros(&[n, b.len()]);
    fc_pre(&x.data, d_in, &w.data, b, &mut y.data);
    y.data.iter_mut().for_each(|v| *v = activate(act, *v));
    y
}

/// Convolution of `x: (n, z, r, c)` with `kernels: (nk, z, kr, kc)`.
pub fn forward_conv(
    x: &Tensor,
    kernels: &Tensor,
    bias: &[f64],
    rpad: usize,
    cpad: usize,
    stride: usize,
    act: Activation,
) -> Tensor {
    let g = ConvGeom {
        z: x.shape[1],
        r: x.shape[2],
        c: x.shape[3],
        nk: kernels.shape[0],
        kr: kernels.shape[2],
        kc: kernels.shape[3],
        rpad,
        cpad,
        stride,
    };
    assert_eq!(kernels.shape[1], g.z, "kernel depth");
    let mut y = Tensor::zeros(&[x.shape[0], g.nk, g.out_r(), g.out_c()]);
    conv_pre(&x.data, &g, &kernels.data, bias, &mut y.data);
    y.data.iter_mut().for_each(|v| *v = activate(act, *v));
    y
}

/// Max pooling of `x: (n, z, r, c)`; returns the pooled maps and the winning
/// flat index (within each sample) of every output.
pub fn forward_maxpool(x: &Tensor, sizer: usize, sizec: usize) -> (Tensor, Vec<usize>) {
    let (n, z, r, c) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let mut y = Tensor::zeros(&[n, z, r / sizer, c / sizec]);
    let mut idx = vec![0; y.data.len()];
    maxpool(&x.data, (z, r, c), sizer, sizec, &mut y.data, &mut idx);
    (y, idx)
}

/// Channel concatenation of `(n, z_i, r, c)` inputs in the given order.
pub fn forward_cat(inputs: &[&Tensor]) -> Tensor {
    let (n, r, c) = (inputs[0].shape[0], inputs[0].shape[2], inputs[0].shape[3]);
    let z: usize = inputs.iter().map(|t| t.shape[1]).sum();
    let mut y = Tensor::zeros(&[n, z, r, c]);
    let parts: Vec<(&[f64], usize)> = inputs.iter().map(|t| (&t.data[..], t.shape[1] * r * c)).collect();
    cat(&parts, n, &mut y.data);
    y
}

/// Per-sample concatenation of `parts`, each `(buffer, per-sample size)`.
pub fn cat(parts: &[(&[f64], usize)], n: usize, out: &mut [f64]) {
    let total: usize = parts.iter().map(|p| p.1).sum();
    out.par_chunks_mut(total).enumerate().take(n).for_each(|(i, o)| {
        let mut off = 0;
        for (buf, size) in parts {
            o[off..off + size].copy_from_slice(&buf[i * size..(i + 1) * size]);
            off += size;
        }
    });
}
