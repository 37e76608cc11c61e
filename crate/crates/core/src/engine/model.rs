//! Layer state and the forward/backward passes over the merged graph of all
//! networks. Layers are addressed by a global index (`gid`): networks in
//! declaration order, layers in declaration order within each.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ops::{self, ConvGeom, BN_EPS, BN_MOMENTUM};
use super::tensor::Tensor;
use crate::ir::IrProgram;
use crate::sema::{Criterion, HyperParams, LayerId, LayerKind, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Augmentation, dropout and noise on; batch-norm uses and updates batch
    /// statistics.
    Train,
    /// Deterministic; batch-norm uses running statistics.
    Eval,
    /// Deterministic; batch-norm uses batch statistics without updating the
    /// running ones. Used for gradient checking.
    Check,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnParams {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub vgamma: Tensor,
    pub vbeta: Tensor,
    pub run_mean: Tensor,
    pub run_var: Tensor,
}

/// Trainable state of a layer with weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    /// `(d_out, d_in)` for F/FO, `(nk, z, kr, kc)` for C.
    pub w: Tensor,
    pub b: Tensor,
    pub vw: Tensor,
    pub vb: Tensor,
    pub bn: Option<BnParams>,
}

impl Params {
    /// Tensors in container order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut v = vec![&self.w, &self.b, &self.vw, &self.vb];
        if let Some(bn) = &self.bn {
            v.extend([&bn.gamma, &bn.beta, &bn.vgamma, &bn.vbeta, &bn.run_mean, &bn.run_var]);
        }
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut v = vec![&mut self.w, &mut self.b, &mut self.vw, &mut self.vb];
        if let Some(bn) = &mut self.bn {
            v.extend([&mut bn.gamma, &mut bn.beta, &mut bn.vgamma, &mut bn.vbeta, &mut bn.run_mean, &mut bn.run_var]);
        }
        v
    }

    /// Number of output rows of `w`.
    pub fn rows(&self) -> usize {
        self.w.shape[0]
    }
}

/// Gradients of one layer's trainable tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grads {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub ids: Vec<LayerId>,
    pub names: Vec<String>,
    pub kinds: Vec<LayerKind>,
    pub shapes: Vec<Shape>,
    pub hyper: Vec<HyperParams>,
    pub parents: Vec<Vec<usize>>,
    /// Network index → first gid.
    pub offsets: Vec<usize>,
    /// All gids in an order where parents precede children.
    pub order: Vec<usize>,
    pub params: Vec<Option<Params>>,
    /// Per network: its gids, its output gids, and the gids evaluated when
    /// it runs (ancestors of its outputs, in `order`).
    pub own: Vec<Vec<usize>>,
    pub outputs: Vec<Vec<usize>>,
    pub active: Vec<Vec<usize>>,
}

fn conv_geom(kind: &LayerKind, input: Shape) -> ConvGeom {
    let (LayerKind::C { nk, kr, kc, rpad, cpad, stride }, Shape::Map { z, r, c }) = (kind, input) else {
        unreachable!("conv layer over a map")
    };
    ConvGeom { z, r, c, nk: *nk, kr: *kr, kc: *kc, rpad: *rpad, cpad: *cpad, stride: *stride }
}

fn glorot(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-limit..limit)).collect())
}

impl Model {
    /// Builds the merged graph and initializes weights; `init_rng(gid)` gives
    /// each layer its own stream.
    pub fn new(prog: &IrProgram, mut init_rng: impl FnMut(usize) -> ChaCha8Rng) -> Model {
        let mut offsets = Vec::new();
        let mut m = Model {
            ids: vec![],
            names: vec![],
            kinds: vec![],
            shapes: vec![],
            hyper: vec![],
            parents: vec![],
            offsets: vec![],
            order: vec![],
            params: vec![],
            own: vec![],
            outputs: vec![],
            active: vec![],
        };
        for (n, net) in prog.networks.iter().enumerate() {
            offsets.push(m.ids.len());
            for (i, l) in net.layers.iter().enumerate() {
                m.ids.push(LayerId::new(n, i));
                m.names.push(format!("{}.{}", net.name, l.name));
                m.kinds.push(l.kind.clone());
                m.shapes.push(l.shape);
                m.hyper.push(l.hyper.clone());
            }
        }
        let gid = |id: LayerId| offsets[id.net] + id.layer;
        for net in &prog.networks {
            for l in &net.layers {
                m.parents.push(l.parents.iter().map(|p| gid(*p)).collect());
            }
        }
        for (n, net) in prog.networks.iter().enumerate() {
            m.order.extend(net.topo.iter().map(|&i| offsets[n] + i));
            m.own.push((0..net.layers.len()).map(|i| offsets[n] + i).collect());
            m.outputs.push((0..net.layers.len()).filter(|&i| net.layers[i].kind.is_output()).map(|i| offsets[n] + i).collect());
        }
        for outs in &m.outputs {
            let mut mark = vec![false; m.ids.len()];
            let mut stack = outs.clone();
            while let Some(g) = stack.pop() {
                if !std::mem::replace(&mut mark[g], true) {
                    stack.extend(&m.parents[g]);
                }
            }
            m.active.push(m.order.iter().copied().filter(|&g| mark[g]).collect());
        }
        m.offsets = offsets;
        for g in 0..m.ids.len() {
            let p = m.init_params(g, &mut init_rng(g));
            m.params.push(p);
        }
        m
    }

    pub fn gid(&self, id: LayerId) -> usize {
        self.offsets[id.net] + id.layer
    }

    /// Per-sample input size: parents concatenated.
    pub fn in_size(&self, g: usize) -> usize {
        self.parents[g].iter().map(|&p| self.shapes[p].size()).sum()
    }

    fn init_params(&self, g: usize, rng: &mut ChaCha8Rng) -> Option<Params> {
        let (w, rows, bn_groups) = match &self.kinds[g] {
            LayerKind::F { numnodes, .. } => {
                let d_in = self.in_size(g);
                (glorot(rng, &[*numnodes, d_in], d_in, *numnodes), *numnodes, Some(*numnodes))
            }
            LayerKind::FO { .. } => {
                let (d_in, d_out) = (self.in_size(g), self.shapes[g].size());
                (glorot(rng, &[d_out, d_in], d_in, d_out), d_out, None)
            }
            kind @ LayerKind::C { .. } => {
                let geo = conv_geom(kind, self.shapes[self.parents[g][0]]);
                let shape = [geo.nk, geo.z, geo.kr, geo.kc];
                (glorot(rng, &shape, geo.kernel_size(), geo.nk * geo.kr * geo.kc), geo.nk, Some(geo.nk))
            }
            _ => return None,
        };
        let zeros = Tensor::zeros(&w.shape);
        let bn = bn_groups.map(|k| BnParams {
            gamma: Tensor::filled(&[k], 1.0),
            beta: Tensor::zeros(&[k]),
            vgamma: Tensor::zeros(&[k]),
            vbeta: Tensor::zeros(&[k]),
            run_mean: Tensor::zeros(&[k]),
            run_var: Tensor::filled(&[k], 1.0),
        });
        Some(Params { w, b: Tensor::zeros(&[rows]), vw: zeros, vb: Tensor::zeros(&[rows]), bn })
    }

    /// Values each input layer expects per sample.
    pub fn input_dim(&self, g: usize) -> usize {
        match self.kinds[g] {
            LayerKind::FI { dim } => dim,
            LayerKind::CI { nz, nr, nc, .. } => nz * nr * nc,
            _ => unreachable!("not an input layer"),
        }
    }
}

/// Per-layer values kept from the forward pass.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    /// Concatenated input of F/FO layers.
    pub x: Vec<f64>,
    /// Affine output.
    pub pre: Vec<f64>,
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    /// Activation input.
    pub z: Vec<f64>,
    /// Activation output.
    pub act: Vec<f64>,
    pub mask: Vec<f64>,
    pub idx: Vec<usize>,
    /// Input layers: geometry-only transformed sample (autoencoder target).
    pub clean: Vec<f64>,
    pub out: Vec<f64>,
}

pub struct Pass {
    pub n: usize,
    pub caches: Vec<Option<Cache>>,
}

impl Pass {
    pub fn out(&self, g: usize) -> &[f64] {
        &self.caches[g].as_ref().expect("layer evaluated").out
    }
}

/// Targets for one batch.
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

/// Cost and error of each output layer over a batch; `cost` is
/// lambda-scaled, `err` is the error rate (classification) or the mean
/// squared error (regression).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OutputMetrics {
    pub cost: f64,
    pub err: f64,
}

fn input_forward(kind: &LayerKind, h: &HyperParams, x: &[f64], n: usize, mode: Mode, rng: &mut ChaCha8Rng) -> Cache {
    let train = mode == Mode::Train;
    let mut clean;
    match *kind {
        LayerKind::FI { .. } => clean = x.to_vec(),
        LayerKind::CI { nz, nr, nc, cr, cc } => {
            let dim = nz * nr * nc;
            clean = vec![0.0; n * nz * cr * cc];
            for i in 0..n {
                let src = &x[i * dim..(i + 1) * dim];
                let (oy, ox) = if train && h.shift {
                    (rng.random_range(0..=nr - cr), rng.random_range(0..=nc - cc))
                } else {
                    ((nr - cr) / 2, (nc - cc) / 2)
                };
                let mirror = train && h.flip && rng.random_bool(0.5);
                let dst = &mut clean[i * nz * cr * cc..(i + 1) * nz * cr * cc];
                for ch in 0..nz {
                    for y in 0..cr {
                        for xx in 0..cc {
                            let sx = if mirror { cc - 1 - xx } else { xx };
                            dst[(ch * cr + y) * cc + xx] = src[(ch * nr + oy + y) * nc + ox + sx];
                        }
                    }
                }
            }
        }
        _ => unreachable!("not an input layer"),
    }
    let mut out = clean.clone();
    if train {
        let per = out.len() / n.max(1);
        for s in out.chunks_mut(per.max(1)) {
            if h.brightness > 0.0 {
                let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                let delta = rng.random_range(-h.brightness..=h.brightness) * (hi - lo);
                s.iter_mut().for_each(|v| *v += delta);
            }
            if h.contrast > 0.0 {
                let mean = s.iter().sum::<f64>() / s.len() as f64;
                let f = 1.0 + rng.random_range(-h.contrast..=h.contrast);
                s.iter_mut().for_each(|v| *v = mean + (*v - mean) * f);
            }
            if h.noiseb > 0.0 {
                for v in s.iter_mut() {
                    if rng.random_bool(h.noiseb) {
                        *v = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
                    }
                }
            }
        }
    }
    Cache { clean, out, ..Cache::default() }
}

/// Batch norm forward over `groups` groups of `inner` values per sample.
#[allow(clippy::too_many_arguments)]
fn bn_forward(
    pre: &[f64],
    groups: usize,
    inner: usize,
    bn: &mut BnParams,
    mode: Mode,
    xhat: &mut Vec<f64>,
    inv_std: &mut Vec<f64>,
    z: &mut Vec<f64>,
) {
    let (mean, var) = match mode {
        Mode::Eval => (bn.run_mean.data.clone(), bn.run_var.data.clone()),
        _ => ops::bn_stats(pre, groups, inner),
    };
    if mode == Mode::Train {
        for k in 0..groups {
            bn.run_mean.data[k] = BN_MOMENTUM * bn.run_mean.data[k] + (1.0 - BN_MOMENTUM) * mean[k];
            bn.run_var.data[k] = BN_MOMENTUM * bn.run_var.data[k] + (1.0 - BN_MOMENTUM) * var[k];
        }
    }
    *inv_std = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    *xhat = vec![0.0; pre.len()];
    *z = vec![0.0; pre.len()];
    for (j, ((xh, zz), p)) in xhat.iter_mut().zip(z.iter_mut()).zip(pre).enumerate() {
        let k = (j / inner) % groups;
        *xh = (p - mean[k]) * inv_std[k];
        *zz = bn.gamma.data[k] * *xh + bn.beta.data[k];
    }
}

fn bn_backward(dz: &[f64], groups: usize, inner: usize, c: &Cache, gamma: &[f64], grads: &mut Grads) -> Vec<f64> {
    let m = (dz.len() / groups) as f64;
    let mut dgamma = vec![0.0; groups];
    let mut dbeta = vec![0.0; groups];
    let mut sum_dxhat = vec![0.0; groups];
    let mut sum_dxhat_xhat = vec![0.0; groups];
    for (j, d) in dz.iter().enumerate() {
        let k = (j / inner) % groups;
        dgamma[k] += d * c.xhat[j];
        dbeta[k] += d;
        let dxh = d * gamma[k];
        sum_dxhat[k] += dxh;
        sum_dxhat_xhat[k] += dxh * c.xhat[j];
    }
    let dpre = dz
        .iter()
        .enumerate()
        .map(|(j, d)| {
            let k = (j / inner) % groups;
            c.inv_std[k] / m * (m * d * gamma[k] - sum_dxhat[k] - c.xhat[j] * sum_dxhat_xhat[k])
        })
        .collect();
    grads.gamma = dgamma;
    grads.beta = dbeta;
    dpre
}

impl Model {
    fn gather(&self, pass: &Pass, g: usize) -> Vec<f64> {
        let parents = &self.parents[g];
        if parents.len() == 1 {
            return pass.out(parents[0]).to_vec();
        }
        let parts: Vec<(&[f64], usize)> = parents.iter().map(|&p| (pass.out(p), self.shapes[p].size())).collect();
        let mut out = vec![0.0; pass.n * self.in_size(g)];
        ops::cat(&parts, pass.n, &mut out);
        out
    }

    /// Runs the layers `active` on a batch `x` of `n` samples. `rngs` holds
    /// one stream per gid.
    pub fn forward(&mut self, active: &[usize], x: &[f64], n: usize, mode: Mode, rngs: &mut [ChaCha8Rng]) -> Pass {
        let mut pass = Pass { n, caches: vec![None; self.ids.len()] };
        let train = mode == Mode::Train;
        for &g in active {
            let h = &self.hyper[g];
            let cache = match &self.kinds[g] {
                kind @ (LayerKind::FI { .. } | LayerKind::CI { .. }) => input_forward(kind, h, x, n, mode, &mut rngs[g]),
                LayerKind::Reshape | LayerKind::CA => Cache { out: self.gather(&pass, g), ..Cache::default() },
                LayerKind::MP { sizer, sizec } => {
                    let Shape::Map { z, r, c } = self.shapes[self.parents[g][0]] else { unreachable!() };
                    let size = self.shapes[g].size();
                    let mut out = vec![0.0; n * size];
                    let mut idx = vec![0; n * size];
                    ops::maxpool(pass.out(self.parents[g][0]), (z, r, c), *sizer, *sizec, &mut out, &mut idx);
                    Cache { out, idx, ..Cache::default() }
                }
                kind @ (LayerKind::F { .. } | LayerKind::C { .. } | LayerKind::FO { .. }) => {
                    let d_out = self.shapes[g].size();
                    let in_size = self.in_size(g);
                    let geo = matches!(kind, LayerKind::C { .. }).then(|| conv_geom(kind, self.shapes[self.parents[g][0]]));
                    let mut c = Cache { x: self.gather(&pass, g), pre: vec![0.0; n * d_out], ..Cache::default() };
                    let p = self.params[g].as_mut().expect("weighted layer");
                    let (groups, inner) = match geo {
                        Some(geo) => {
                            ops::conv_pre(&c.x, &geo, &p.w.data, &p.b.data, &mut c.pre);
                            (geo.nk, geo.out_r() * geo.out_c())
                        }
                        None => {
                            ops::fc_pre(&c.x, in_size, &p.w.data, &p.b.data, &mut c.pre);
                            (d_out, 1)
                        }
                    };
                    if let LayerKind::FO { criterion, .. } = kind {
                        c.out = match criterion {
                            Criterion::Classification => {
                                let mut o = vec![0.0; c.pre.len()];
                                ops::softmax(&c.pre, d_out, &mut o);
                                o
                            }
                            Criterion::Regression => c.pre.clone(),
                        };
                    } else {
                        if h.bn {
                            let bn = p.bn.as_mut().expect("bn state");
                            bn_forward(&c.pre, groups, inner, bn, mode, &mut c.xhat, &mut c.inv_std, &mut c.z);
                        } else {
                            c.z = c.pre.clone();
                        }
                        c.act = c.z.iter().map(|&v| ops::activate(h.act, v)).collect();
                        c.out = c.act.clone();
                        let rng = &mut rngs[g];
                        if train && h.drop > 0.0 {
                            let keep = 1.0 - h.drop;
                            c.mask = (0..c.out.len()).map(|_| if rng.random_bool(keep) { 1.0 / keep } else { 0.0 }).collect();
                            c.out.iter_mut().zip(&c.mask).for_each(|(o, m)| *o *= m);
                        }
                        if train && h.noisesd > 0.0 {
                            let normal = Normal::new(0.0, h.noisesd).expect("finite sd");
                            c.out.iter_mut().for_each(|o| *o += normal.sample(rng));
                        }
                        if train && h.noiser > 0.0 {
                            for o in c.out.iter_mut() {
                                if rng.random_bool(h.noiser) {
                                    *o += rng.random_range(-1.0..=1.0);
                                }
                            }
                        }
                    }
                    c
                }
            };
            pass.caches[g] = Some(cache);
        }
        pass
    }

    /// Per-output metrics and gradients with respect to each output's
    /// pre-activation, for the outputs `outs`.
    pub fn loss(&self, pass: &Pass, outs: &[usize], targets: &Targets) -> (Vec<OutputMetrics>, Vec<Vec<f64>>) {
        let n = pass.n;
        let mut metrics = Vec::new();
        let mut grads = Vec::new();
        for &g in outs {
            let LayerKind::FO { criterion, autoencoder } = &self.kinds[g] else { unreachable!() };
            let k = self.shapes[g].size();
            let y = pass.out(g);
            let lambda = self.hyper[g].lambda;
            let mut grad = vec![0.0; n * k];
            let (cost, err) = match (criterion, autoencoder, targets) {
                (Criterion::Regression, Some(src), _) => {
                    let t = &pass.caches[self.gid(*src)].as_ref().expect("input evaluated").clean;
                    let c = ops::mse(y, t, n, &mut grad);
                    (c, c)
                }
                (Criterion::Regression, None, Targets::Values(t)) => {
                    let c = ops::mse(y, t, n, &mut grad);
                    (c, c)
                }
                (Criterion::Classification, _, Targets::Classes(labels)) => {
                    let c = ops::cross_entropy(y, k, labels, &mut grad);
                    let wrong = labels
                        .iter()
                        .enumerate()
                        .filter(|(i, &l)| {
                            let row = &y[i * k..(i + 1) * k];
                            let best = (0..k).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                            best != l
                        })
                        .count();
                    (c, wrong as f64 / n as f64)
                }
                _ => unreachable!("targets checked at bind time"),
            };
            grad.iter_mut().for_each(|v| *v *= lambda);
            metrics.push(OutputMetrics { cost: lambda * cost, err });
            grads.push(grad);
        }
        (metrics, grads)
    }

    /// Back-propagates output pre-activation gradients `dout` (one per entry
    /// of `outs`) through `active`; returns gradients per gid.
    pub fn backward(&self, pass: &Pass, active: &[usize], outs: &[usize], dout: Vec<Vec<f64>>) -> Vec<Option<Grads>> {
        let n = pass.n;
        let mut dy: Vec<Option<Vec<f64>>> = vec![None; self.ids.len()];
        let mut pre_grad: Vec<Option<Vec<f64>>> = vec![None; self.ids.len()];
        for (g, d) in outs.iter().zip(dout) {
            pre_grad[*g] = Some(d);
        }
        let mut grads: Vec<Option<Grads>> = vec![None; self.ids.len()];
        let wants_grad = |g: usize| !self.kinds[g].is_input();
        let add = |dy: &mut Vec<Option<Vec<f64>>>, g: usize, d: &[f64]| match &mut dy[g] {
            Some(acc) => acc.iter_mut().zip(d).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(d.to_vec()),
        };
        for &g in active.iter().rev() {
            if self.kinds[g].is_input() {
                continue;
            }
            let c = pass.caches[g].as_ref().expect("layer evaluated");
            let parents = &self.parents[g];
            let upstream = dy[g].take();
            // gradient of the layer's input, concatenated over parents
            let dx: Option<Vec<f64>> = match &self.kinds[g] {
                LayerKind::Reshape | LayerKind::CA => upstream,
                LayerKind::MP { .. } => upstream.map(|d| {
                    let in_size = self.in_size(g);
                    let mut dx = vec![0.0; n * in_size];
                    ops::maxpool_backward(&d, &c.idx, in_size, &mut dx);
                    dx
                }),
                kind => {
                    let p = self.params[g].as_ref().expect("weighted layer");
                    let h = &self.hyper[g];
                    let mut lg = Grads::default();
                    let dpre = if let LayerKind::FO { criterion, .. } = kind {
                        let mut d = pre_grad[g].take().unwrap_or_else(|| vec![0.0; c.pre.len()]);
                        if let Some(up) = upstream {
                            match criterion {
                                Criterion::Regression => d.iter_mut().zip(&up).for_each(|(a, b)| *a += b),
                                Criterion::Classification => {
                                    let k = self.shapes[g].size();
                                    for i in 0..n {
                                        let p = &c.out[i * k..(i + 1) * k];
                                        let u = &up[i * k..(i + 1) * k];
                                        let dot: f64 = p.iter().zip(u).map(|(a, b)| a * b).sum();
                                        for j in 0..k {
                                            d[i * k + j] += p[j] * (u[j] - dot);
                                        }
                                    }
                                }
                            }
                        }
                        d
                    } else {
                        let up = upstream.unwrap_or_else(|| vec![0.0; c.out.len()]);
                        let dz: Vec<f64> = (0..up.len())
                            .map(|j| {
                                let m = if c.mask.is_empty() { 1.0 } else { c.mask[j] };
                                up[j] * m * ops::activate_grad(h.act, c.z[j], c.act[j])
                            })
                            .collect();
                        if h.bn {
                            let (groups, inner) = match kind {
                                LayerKind::C { .. } => {
                                    let geo = conv_geom(kind, self.shapes[parents[0]]);
                                    (geo.nk, geo.out_r() * geo.out_c())
                                }
                                _ => (self.shapes[g].size(), 1),
                            };
                            let bn = p.bn.as_ref().expect("bn state");
                            bn_backward(&dz, groups, inner, c, &bn.gamma.data, &mut lg)
                        } else {
                            dz
                        }
                    };
                    lg.w = vec![0.0; p.w.len()];
                    lg.b = vec![0.0; p.b.len()];
                    let need_dx = parents.iter().any(|&q| wants_grad(q));
                    let mut dx = if need_dx { Some(vec![0.0; n * self.in_size(g)]) } else { None };
                    match kind {
                        LayerKind::C { .. } => {
                            let geo = conv_geom(kind, self.shapes[parents[0]]);
                            ops::conv_backward(&c.x, &geo, &p.w.data, &dpre, dx.as_deref_mut(), &mut lg.w, &mut lg.b);
                        }
                        _ => ops::fc_backward(&c.x, self.in_size(g), &p.w.data, &dpre, dx.as_deref_mut(), &mut lg.w, &mut lg.b),
                    }
                    grads[g] = Some(lg);
                    dx
                }
            };
            let Some(dx) = dx else { continue };
            if parents.len() == 1 {
                if wants_grad(parents[0]) {
                    add(&mut dy, parents[0], &dx);
                }
                continue;
            }
            let total = self.in_size(g);
            let mut off = 0;
            for &q in parents {
                let size = self.shapes[q].size();
                if wants_grad(q) {
                    let part: Vec<f64> = (0..n).flat_map(|i| dx[i * total + off..i * total + off + size].iter().copied()).collect();
                    add(&mut dy, q, &part);
                }
                off += size;
            }
        }
        grads
    }

    /// Momentum SGD step with weight decay and max-norm, for every gid with
    /// gradients.
    pub fn update(&mut self, grads: &[Option<Grads>]) {
        for (g, lg) in grads.iter().enumerate() {
            let Some(lg) = lg else { continue };
            let h = self.hyper[g].clone();
            let p = self.params[g].as_mut().expect("weighted layer");
            let step = |w: &mut [f64], v: &mut [f64], grad: &[f64], decay: bool| {
                for ((wi, vi), gi) in w.iter_mut().zip(v.iter_mut()).zip(grad) {
                    let mut d = *gi;
                    if decay {
                        d += h.l2 * *wi + h.l1 * sign(*wi);
                    }
                    *vi = h.mmu * *vi - h.mu * d;
                    *wi += *vi;
                }
            };
            step(&mut p.w.data, &mut p.vw.data, &lg.w, true);
            step(&mut p.b.data, &mut p.vb.data, &lg.b, false);
            if let (Some(bn), false) = (&mut p.bn, lg.gamma.is_empty()) {
                step(&mut bn.gamma.data, &mut bn.vgamma.data, &lg.gamma, false);
                step(&mut bn.beta.data, &mut bn.vbeta.data, &lg.beta, false);
            }
            if h.maxn > 0.0 {
                let cols = p.w.len() / p.rows();
                for row in p.w.data.chunks_mut(cols) {
                    let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if norm > h.maxn {
                        let s = h.maxn / norm;
                        row.iter_mut().for_each(|v| *v *= s);
                    }
                }
            }
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}
