//! Reverse-mode differentiation over a recorded sequence of layer applications.

use super::kernels;
use super::layers::{BatchNorm2d, Conv2d, ConvTranspose2d, BN_EPS, BN_MOMENTUM};
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    Conv {
        x: Var,
        layer: Conv2d,
    },
    ConvT {
        x: Var,
        layer: ConvTranspose2d,
    },
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    BatchNorm {
        x: Var,
        layer: BatchNorm2d,
        mean: Vec<f32>,
        inv_std: Vec<f32>,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Concat {
        parts: Vec<Var>,
    },
    Add {
        parts: Vec<Var>,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Whether gradients must flow through this node (it or an ancestor owns parameters).
    needs_grad: bool,
}

/// Records a forward pass so it can be differentiated.
///
/// In training mode batch normalization uses batch statistics; the corresponding
/// running-statistic updates are buffered and applied by [`Tape::commit_running_stats`].
pub struct Tape {
    nodes: Vec<Node>,
    training: bool,
    macs: u64,
    running_updates: Vec<(BatchNorm2d, Vec<f32>, Vec<f32>)>,
    scratch: Vec<f32>,
}

impl Tape {
    pub fn new(training: bool) -> Self {
        Self {
            nodes: Vec::new(),
            training,
            macs: 0,
            running_updates: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn training(&self) -> bool {
        self.training
    }

    /// Multiply-accumulates executed by convolutional layers so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape4 {
        self.nodes[v.0].value.shape()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn conv(&mut self, store: &ParamStore, layer: Conv2d, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.c != layer.in_channels {
            return Err(Error::shape(format!(
                "convolution expects {} input channels, got {s}",
                layer.in_channels
            )));
        }
        let out_shape = Shape4::new(s.n, layer.out_channels, s.h, s.w);
        let mut y = Tensor::zeros(out_shape);
        let (w, b) = (store.value(layer.weight), store.value(layer.bias));
        let mut scratch = std::mem::take(&mut self.scratch);
        for i in 0..s.n {
            kernels::conv_forward(
                self.nodes[x.0].value.item(i),
                s.c,
                s.h,
                s.w,
                w,
                b,
                layer.out_channels,
                layer.kernel,
                y.item_mut(i),
                &mut scratch,
            );
        }
        self.scratch = scratch;
        self.macs +=
            (s.n * s.h * s.w * layer.kernel * layer.kernel * s.c * layer.out_channels) as u64;
        Ok(self.push(y, Op::Conv { x, layer }, true))
    }

    pub fn conv_t(&mut self, store: &ParamStore, layer: ConvTranspose2d, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.c != layer.in_channels {
            return Err(Error::shape(format!(
                "transposed convolution expects {} input channels, got {s}",
                layer.in_channels
            )));
        }
        let mut y = Tensor::zeros(Shape4::new(s.n, layer.out_channels, 2 * s.h, 2 * s.w));
        let (w, b) = (store.value(layer.weight), store.value(layer.bias));
        let mut scratch = std::mem::take(&mut self.scratch);
        for i in 0..s.n {
            kernels::conv_t_forward(
                self.nodes[x.0].value.item(i),
                s.c,
                s.h,
                s.w,
                w,
                b,
                layer.out_channels,
                y.item_mut(i),
                &mut scratch,
            );
        }
        self.scratch = scratch;
        self.macs += (s.n * s.h * s.w * 4 * s.c * layer.out_channels) as u64;
        Ok(self.push(y, Op::ConvT { x, layer }, true))
    }

    pub fn max_pool(&mut self, x: Var, k: usize) -> Result<Var> {
        let s = self.shape(x);
        if !s.h.is_multiple_of(k) || !s.w.is_multiple_of(k) || s.h == 0 || s.w == 0 {
            return Err(Error::shape(format!(
                "{k}x{k} pooling needs spatial dims divisible by {k}, got {s}"
            )));
        }
        let out = Shape4::new(s.n, s.c, s.h / k, s.w / k);
        let mut y = Tensor::zeros(out);
        let mut argmax = vec![0u32; out.numel()];
        for i in 0..s.n {
            let o = out.item();
            kernels::max_pool_forward(
                self.nodes[x.0].value.item(i),
                s.c,
                s.h,
                s.w,
                k,
                y.item_mut(i),
                &mut argmax[i * o..(i + 1) * o],
            );
        }
        let needs = self.needs(x);
        Ok(self.push(y, Op::MaxPool { x, argmax }, needs))
    }

    pub fn batch_norm(&mut self, store: &ParamStore, layer: BatchNorm2d, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.c != layer.channels {
            return Err(Error::shape(format!(
                "batch norm expects {} channels, got {s}",
                layer.channels
            )));
        }
        let plane = s.plane();
        let count = s.n * plane;
        let input = &self.nodes[x.0].value;
        let (mean, inv_std) = if self.training {
            let mut mean = vec![0f32; s.c];
            let mut var = vec![0f32; s.c];
            for c in 0..s.c {
                let mut sum = 0f64;
                for i in 0..s.n {
                    sum += input.item(i)[c * plane..(c + 1) * plane]
                        .iter()
                        .map(|&v| v as f64)
                        .sum::<f64>();
                }
                let m = sum / count as f64;
                let mut sq = 0f64;
                for i in 0..s.n {
                    sq += input.item(i)[c * plane..(c + 1) * plane]
                        .iter()
                        .map(|&v| (v as f64 - m) * (v as f64 - m))
                        .sum::<f64>();
                }
                mean[c] = m as f32;
                var[c] = (sq / count as f64) as f32;
            }
            let inv_std: Vec<f32> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
            let unbiased: Vec<f32> = var
                .iter()
                .map(|v| {
                    if count > 1 {
                        v * count as f32 / (count - 1) as f32
                    } else {
                        *v
                    }
                })
                .collect();
            self.running_updates.push((layer, mean.clone(), unbiased));
            (mean, inv_std)
        } else {
            let mean = store.value(layer.running_mean).to_vec();
            let inv_std: Vec<f32> = store
                .value(layer.running_var)
                .iter()
                .map(|v| 1.0 / (v + BN_EPS).sqrt())
                .collect();
            (mean, inv_std)
        };
        let (gamma, beta) = (store.value(layer.gamma), store.value(layer.beta));
        let mut y = Tensor::zeros(s);
        for i in 0..s.n {
            let src = input.item(i);
            let dst = y.item_mut(i);
            for c in 0..s.c {
                let scale = gamma[c] * inv_std[c];
                let shift = beta[c] - mean[c] * scale;
                for (d, v) in dst[c * plane..(c + 1) * plane]
                    .iter_mut()
                    .zip(&src[c * plane..(c + 1) * plane])
                {
                    *d = v * scale + shift;
                }
            }
        }
        Ok(self.push(
            y,
            Op::BatchNorm {
                x,
                layer,
                mean,
                inv_std,
            },
            true,
        ))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut y = self.nodes[x.0].value.clone();
        y.data_mut().iter_mut().for_each(|v| {
            if *v <= 0.0 {
                *v = 0.0;
            }
        });
        let needs = self.needs(x);
        self.push(y, Op::Relu { x }, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut y = self.nodes[x.0].value.clone();
        y.data_mut().iter_mut().for_each(|v| *v = sigmoid(*v));
        let needs = self.needs(x);
        self.push(y, Op::Sigmoid { x }, needs)
    }

    /// Channel concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(
            *parts
                .first()
                .ok_or_else(|| Error::shape("concat of nothing"))?,
        );
        let mut c = 0;
        for &p in parts {
            let s = self.shape(p);
            if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
                return Err(Error::shape(format!("cannot concatenate {s} with {first}")));
            }
            c += s.c;
        }
        let out = Shape4::new(first.n, c, first.h, first.w);
        let mut y = Tensor::zeros(out);
        for i in 0..out.n {
            let mut off = 0;
            for &p in parts {
                let src = self.nodes[p.0].value.item(i);
                y.item_mut(i)[off..off + src.len()].copy_from_slice(src);
                off += src.len();
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            y,
            Op::Concat {
                parts: parts.to_vec(),
            },
            needs,
        ))
    }

    /// Elementwise sum.
    pub fn add(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::shape("sum of nothing"))?;
        let mut y = self.nodes[first.0].value.clone();
        for &p in &parts[1..] {
            let v = &self.nodes[p.0].value;
            if v.shape() != y.shape() {
                return Err(Error::shape(format!(
                    "cannot add {} to {}",
                    v.shape(),
                    y.shape()
                )));
            }
            for (a, b) in y.data_mut().iter_mut().zip(v.data()) {
                *a += *b;
            }
        }
        let needs = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            y,
            Op::Add {
                parts: parts.to_vec(),
            },
            needs,
        ))
    }

    /// Folds buffered batch statistics into the running estimates.
    pub fn commit_running_stats(&mut self, store: &mut ParamStore) {
        for (layer, mean, var) in self.running_updates.drain(..) {
            let rm = &mut store.get_mut(layer.running_mean).value;
            for (r, m) in rm.iter_mut().zip(&mean) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m;
            }
            let rv = &mut store.get_mut(layer.running_var).value;
            for (r, v) in rv.iter_mut().zip(&var) {
                *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v;
            }
        }
    }

    /// Back-propagates `grad` (the gradient of a scalar objective w.r.t. `out`) and
    /// accumulates parameter gradients into `store`.
    pub fn backward(&mut self, out: Var, grad: Tensor, store: &mut ParamStore) -> Result<()> {
        if grad.shape() != self.shape(out) {
            return Err(Error::shape(format!(
                "gradient {} does not match output {}",
                grad.shape(),
                self.shape(out)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(grad);
        let mut scratch = std::mem::take(&mut self.scratch);
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Conv { x, layer } => {
                    let xv = &self.nodes[x.0].value;
                    let s = xv.shape();
                    let mut dx = self.needs(*x).then(|| Tensor::zeros(s));
                    let w = store.value(layer.weight).to_vec();
                    let mut dw = std::mem::take(store.get_mut(layer.weight).grad_mut_vec());
                    let mut db = std::mem::take(store.get_mut(layer.bias).grad_mut_vec());
                    for i in 0..s.n {
                        kernels::conv_backward(
                            xv.item(i),
                            s.c,
                            s.h,
                            s.w,
                            &w,
                            layer.out_channels,
                            layer.kernel,
                            g.item(i),
                            &mut dw,
                            &mut db,
                            dx.as_mut().map(|d| d.item_mut(i)),
                            &mut scratch,
                        );
                    }
                    store.get_mut(layer.weight).grad = dw;
                    store.get_mut(layer.bias).grad = db;
                    if let Some(dx) = dx {
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::ConvT { x, layer } => {
                    let xv = &self.nodes[x.0].value;
                    let s = xv.shape();
                    let mut dx = self.needs(*x).then(|| Tensor::zeros(s));
                    let w = store.value(layer.weight).to_vec();
                    let mut dw = std::mem::take(store.get_mut(layer.weight).grad_mut_vec());
                    let mut db = std::mem::take(store.get_mut(layer.bias).grad_mut_vec());
                    for i in 0..s.n {
                        kernels::conv_t_backward(
                            xv.item(i),
                            s.c,
                            s.h,
                            s.w,
                            &w,
                            layer.out_channels,
                            g.item(i),
                            &mut dw,
                            &mut db,
                            dx.as_mut().map(|d| d.item_mut(i)),
                            &mut scratch,
                        );
                    }
                    store.get_mut(layer.weight).grad = dw;
                    store.get_mut(layer.bias).grad = db;
                    if let Some(dx) = dx {
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::MaxPool { x, argmax } => {
                    if self.needs(*x) {
                        let s = self.shape(*x);
                        let mut dx = Tensor::zeros(s);
                        let per_out = g.shape().item();
                        for i in 0..s.n {
                            let dst = dx.item_mut(i);
                            for (o, gv) in g.item(i).iter().enumerate() {
                                dst[argmax[i * per_out + o] as usize] += *gv;
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::BatchNorm {
                    x,
                    layer,
                    mean,
                    inv_std,
                } => {
                    let xv = &self.nodes[x.0].value;
                    let s = xv.shape();
                    let plane = s.plane();
                    let count = (s.n * plane) as f64;
                    let gamma = store.value(layer.gamma).to_vec();
                    let mut sum_g = vec![0f64; s.c];
                    let mut sum_gx = vec![0f64; s.c];
                    for i in 0..s.n {
                        let (xi, gi) = (xv.item(i), g.item(i));
                        for c in 0..s.c {
                            let r = c * plane..(c + 1) * plane;
                            for (xv, gv) in xi[r.clone()].iter().zip(&gi[r]) {
                                let xhat = (xv - mean[c]) * inv_std[c];
                                sum_g[c] += *gv as f64;
                                sum_gx[c] += (*gv * xhat) as f64;
                            }
                        }
                    }
                    {
                        let dg = store.get_mut(layer.gamma).grad_mut();
                        for c in 0..s.c {
                            dg[c] += sum_gx[c] as f32;
                        }
                        let db = store.get_mut(layer.beta).grad_mut();
                        for c in 0..s.c {
                            db[c] += sum_g[c] as f32;
                        }
                    }
                    if self.needs(*x) {
                        let mut dx = Tensor::zeros(s);
                        for i in 0..s.n {
                            let (xi, gi) = (xv.item(i), g.item(i));
                            let di = dx.item_mut(i);
                            for c in 0..s.c {
                                let r = c * plane..(c + 1) * plane;
                                let k = gamma[c] * inv_std[c];
                                if self.training {
                                    let mg = (sum_g[c] / count) as f32;
                                    let mgx = (sum_gx[c] / count) as f32;
                                    for ((d, xv), gv) in
                                        di[r.clone()].iter_mut().zip(&xi[r.clone()]).zip(&gi[r])
                                    {
                                        let xhat = (xv - mean[c]) * inv_std[c];
                                        *d = k * (gv - mg - xhat * mgx);
                                    }
                                } else {
                                    for (d, gv) in di[r.clone()].iter_mut().zip(&gi[r]) {
                                        *d = k * gv;
                                    }
                                }
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Relu { x } => {
                    if self.needs(*x) {
                        let mut dx = g;
                        for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                            if *y <= 0.0 {
                                *d = 0.0;
                            }
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Sigmoid { x } => {
                    if self.needs(*x) {
                        let mut dx = g;
                        for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                            *d *= y * (1.0 - y);
                        }
                        accumulate(&mut grads, *x, dx);
                    }
                }
                Op::Concat { parts } => {
                    let mut off = 0;
                    for &p in parts {
                        let s = self.shape(p);
                        if self.needs(p) {
                            let mut dp = Tensor::zeros(s);
                            for i in 0..s.n {
                                let len = s.item();
                                dp.item_mut(i).copy_from_slice(&g.item(i)[off..off + len]);
                            }
                            accumulate(&mut grads, p, dp);
                        }
                        off += s.item();
                    }
                }
                Op::Add { parts } => {
                    for &p in parts {
                        if self.needs(p) {
                            accumulate(&mut grads, p, g.clone());
                        }
                    }
                }
            }
        }
        self.scratch = scratch;
        Ok(())
    }
}

impl super::params::Param {
    fn grad_mut_vec(&mut self) -> &mut Vec<f32> {
        self.grad_mut();
        &mut self.grad
    }
}

fn accumulate(grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut grads[v.0] {
        Some(existing) => {
            for (a, b) in existing.data_mut().iter_mut().zip(g.data()) {
                *a += *b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

pub fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
