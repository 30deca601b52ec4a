use crate::error::{Error, Result};
use crate::nn::kernels::{self, ConvGeometry};
use crate::nn::params::{ParamId, ParamStore};
use crate::nn::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Conv1d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    /// Affine normalization; `xhat` is the normalized input and `inv_std`
    /// the per-channel scale. `batch_stats` marks training mode, where the
    /// statistics depend on `x`.
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvgPool {
        x: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    Swish {
        x: Var,
        sig: Vec<f64>,
    },
    Sigmoid {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Softmax {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    ChannelScale {
        x: Var,
        gate: Var,
    },
    Reshape {
        x: Var,
    },
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    SumProduct {
        x: Var,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Records a forward pass for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::Contract(format!("{op}: {detail}"))
}

fn expect_rank(op: &str, t: &Tensor, rank: usize) -> Result<()> {
    if t.rank() != rank {
        return Err(shape_err(
            op,
            format!("expected rank {rank} input, got shape {:?}", t.shape()),
        ));
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A leaf that collects a gradient (inputs under test).
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        let p = store.get(id);
        self.push(p.value.clone(), Op::Param(id), p.requires_grad)
    }

    pub fn conv1d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: usize,
        pad_left: usize,
        pad_right: usize,
    ) -> Result<Var> {
        let (xt, wt) = (self.value(x), self.value(w));
        expect_rank("conv1d", xt, 3)?;
        expect_rank("conv1d weights", wt, 3)?;
        let (batch, c_in, len_in) = (xt.dim(0), xt.dim(1), xt.dim(2));
        let (c_out, w_in, kernel) = (wt.dim(0), wt.dim(1), wt.dim(2));
        if w_in != c_in {
            return Err(shape_err(
                "conv1d",
                format!("input channels {c_in} != weight in-channels {w_in}"),
            ));
        }
        if stride == 0 {
            return Err(shape_err("conv1d", "stride must be >= 1".into()));
        }
        if len_in + pad_left + pad_right < kernel {
            return Err(shape_err(
                "conv1d",
                format!(
                    "kernel {kernel} larger than padded length {}",
                    len_in + pad_left + pad_right
                ),
            ));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [c_out] {
                return Err(shape_err(
                    "conv1d",
                    format!("bias shape {:?} != [{c_out}]", self.value(b).shape()),
                ));
            }
        }
        let geom = ConvGeometry {
            batch,
            c_in,
            len_in,
            c_out,
            kernel,
            stride,
            pad_left,
            pad_right,
        };
        let out = kernels::conv1d_forward(
            &geom,
            xt.data(),
            wt.data(),
            b.map(|b| self.value(b).data()),
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        let value = Tensor::new(&[batch, c_out, geom.len_out()], out)?;
        Ok(self.push(value, Op::Conv1d { x, w, b, geom }, rg))
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xt, wt) = (self.value(x), self.value(w));
        expect_rank("linear", xt, 2)?;
        expect_rank("linear weights", wt, 2)?;
        let (batch, n_in) = (xt.dim(0), xt.dim(1));
        let n_out = wt.dim(0);
        if wt.dim(1) != n_in {
            return Err(shape_err(
                "linear",
                format!("input features {n_in} != weight in-features {}", wt.dim(1)),
            ));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [n_out] {
                return Err(shape_err(
                    "linear",
                    format!("bias shape {:?} != [{n_out}]", self.value(b).shape()),
                ));
            }
        }
        let y = kernels::linear_forward(
            batch,
            n_in,
            n_out,
            xt.data(),
            wt.data(),
            b.map(|b| self.value(b).data()),
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(Tensor::new(&[batch, n_out], y)?, Op::Linear { x, w, b }, rg))
    }

    fn bn_dims(&self, op: &str, x: Var) -> Result<(usize, usize, usize)> {
        let t = self.value(x);
        match t.rank() {
            2 => Ok((t.dim(0), t.dim(1), 1)),
            3 => Ok((t.dim(0), t.dim(1), t.dim(2))),
            _ => Err(shape_err(op, format!("expected [B,C] or [B,C,L], got {:?}", t.shape()))),
        }
    }

    /// Batch normalization with batch statistics. Returns the output and the
    /// biased per-channel mean and variance of the batch.
    pub fn batch_norm_train(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, Vec<f64>, Vec<f64>)> {
        let (batch, channels, len) = self.bn_dims("batch_norm", x)?;
        let (mean, var) = kernels::channel_moments(batch, channels, len, self.value(x).data());
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let out = self.bn_apply(x, gamma, beta, &mean, inv_std, true)?;
        Ok((out, mean, var))
    }

    /// Batch normalization with fixed (running) statistics.
    pub fn batch_norm_eval(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        var: &[f64],
        eps: f64,
    ) -> Result<Var> {
        self.bn_dims("batch_norm", x)?;
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        self.bn_apply(x, gamma, beta, mean, inv_std, false)
    }

    fn bn_apply(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mean: &[f64],
        inv_std: Vec<f64>,
        batch_stats: bool,
    ) -> Result<Var> {
        let (batch, channels, len) = self.bn_dims("batch_norm", x)?;
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        if g.len() != channels || bt.len() != channels || mean.len() != channels {
            return Err(shape_err(
                "batch_norm",
                format!("affine/statistics length must equal channels {channels}"),
            ));
        }
        let xt = self.value(x);
        let mut xhat = vec![0.0; xt.len()];
        let mut y = vec![0.0; xt.len()];
        for b in 0..batch {
            for c in 0..channels {
                let off = (b * channels + c) * len;
                for i in off..off + len {
                    let h = (xt.data()[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    y[i] = g[c] * h + bt[c];
                }
            }
        }
        let value = Tensor::new(xt.shape(), y)?;
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            rg,
        ))
    }

    /// Non-overlapping max pooling with window and stride `k`; a trailing
    /// partial window is dropped.
    pub fn max_pool1d(&mut self, x: Var, k: usize) -> Result<Var> {
        let xt = self.value(x);
        expect_rank("max_pool1d", xt, 3)?;
        let (batch, channels, len) = (xt.dim(0), xt.dim(1), xt.dim(2));
        if k == 0 || len < k {
            return Err(shape_err("max_pool1d", format!("window {k} on length {len}")));
        }
        let lo = len / k;
        let mut y = Vec::with_capacity(batch * channels * lo);
        let mut argmax = Vec::with_capacity(batch * channels * lo);
        for row in 0..batch * channels {
            let src = &xt.data()[row * len..][..len];
            for t in 0..lo {
                let mut best = t * k;
                for j in t * k + 1..t * k + k {
                    if src[j] > src[best] {
                        best = j;
                    }
                }
                y.push(src[best]);
                argmax.push(row * len + best);
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[batch, channels, lo], y)?, Op::MaxPool { x, argmax }, rg))
    }

    pub fn global_avg_pool1d(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        expect_rank("global_avg_pool1d", xt, 3)?;
        let (batch, channels, len) = (xt.dim(0), xt.dim(1), xt.dim(2));
        let y = xt
            .data()
            .chunks(len)
            .map(|r| r.iter().sum::<f64>() / len as f64)
            .collect();
        let rg = self.rg(x);
        Ok(self.push(Tensor::new(&[batch, channels], y)?, Op::GlobalAvgPool { x }, rg))
    }

    /// Multiplies by a fixed mask (entries 0 or `1/(1-rate)`).
    pub fn dropout_with_mask(&mut self, x: Var, mask: Vec<f64>) -> Result<Var> {
        let xt = self.value(x);
        if mask.len() != xt.len() {
            return Err(shape_err("dropout", "mask length mismatch".into()));
        }
        let y = xt.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(xt.shape(), y)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    fn map(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let xt = self.value(x);
        let y = xt.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(xt.shape(), y).expect("same shape");
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    pub fn swish(&mut self, x: Var) -> Var {
        let xt = self.value(x);
        let sig: Vec<f64> = xt.data().iter().map(|&v| kernels::sigmoid(v)).collect();
        let y = xt.data().iter().zip(&sig).map(|(v, s)| v * s).collect();
        let value = Tensor::new(xt.shape(), y).expect("same shape");
        let rg = self.rg(x);
        self.push(value, Op::Swish { x, sig }, rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, kernels::sigmoid, Op::Sigmoid { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.map(x, |v| v.max(0.0), Op::Relu { x })
    }

    /// Softmax over the last axis of a `[B, C]` tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xt = self.value(x);
        expect_rank("softmax", xt, 2)?;
        let y = kernels::softmax_rows(xt.data(), xt.dim(1));
        let value = Tensor::new(xt.shape(), y)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Softmax { x }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (at, bt) = (self.value(a), self.value(b));
        if at.shape() != bt.shape() {
            return Err(shape_err(
                "add",
                format!("shape {:?} != {:?}", at.shape(), bt.shape()),
            ));
        }
        let y = at.data().iter().zip(bt.data()).map(|(p, q)| p + q).collect();
        let value = Tensor::new(at.shape(), y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add { a, b }, rg))
    }

    /// `x[b, c, :] * gate[b, c]`.
    pub fn channel_scale(&mut self, x: Var, gate: Var) -> Result<Var> {
        let (xt, gt) = (self.value(x), self.value(gate));
        expect_rank("channel_scale", xt, 3)?;
        if gt.shape() != &xt.shape()[..2] {
            return Err(shape_err(
                "channel_scale",
                format!("gate shape {:?} does not match {:?}", gt.shape(), &xt.shape()[..2]),
            ));
        }
        let len = xt.dim(2);
        let mut y = xt.data().to_vec();
        for (row, g) in y.chunks_mut(len).zip(gt.data()) {
            for v in row {
                *v *= g;
            }
        }
        let value = Tensor::new(xt.shape(), y)?;
        let rg = self.rg(x) || self.rg(gate);
        Ok(self.push(value, Op::ChannelScale { x, gate }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let rg = self.rg(x);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Mean cross-entropy of softmax(logits) against class indices, via
    /// log-sum-exp. Output shape `[1]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Result<Var> {
        let lt = self.value(logits);
        expect_rank("cross_entropy", lt, 2)?;
        let (batch, classes) = (lt.dim(0), lt.dim(1));
        if targets.len() != batch {
            return Err(shape_err(
                "cross_entropy",
                format!("{} targets for batch {batch}", targets.len()),
            ));
        }
        if let Some(t) = targets.iter().find(|&&t| t >= classes) {
            return Err(shape_err("cross_entropy", format!("target {t} >= {classes} classes")));
        }
        if !lt.all_finite() {
            return Err(Error::Numeric("cross_entropy: non-finite logits".into()));
        }
        let lse = kernels::logsumexp_rows(lt.data(), classes);
        let loss = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| lse[i] - lt.data()[i * classes + t])
            .sum::<f64>()
            / batch as f64;
        let probs = kernels::softmax_rows(lt.data(), classes);
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// `sum(x * weights)` as a scalar; used to project outputs for gradient checks.
    pub fn sum_product(&mut self, x: Var, weights: Vec<f64>) -> Result<Var> {
        let xt = self.value(x);
        if weights.len() != xt.len() {
            return Err(shape_err("sum_product", "weight length mismatch".into()));
        }
        let s = xt.data().iter().zip(&weights).map(|(a, b)| a * b).sum();
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(s), Op::SumProduct { x, weights }, rg))
    }

    /// Back-propagates from a scalar node.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let root_val = &self.nodes[root.0].value;
        grads[root.0] = Some(Tensor::full(root_val.shape(), 1.0));

        for i in (0..=root.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Gradients { grads, params: self.param_ids() }
    }

    fn param_ids(&self) -> Vec<(Var, ParamId)> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((Var(i), id)),
                _ => None,
            })
            .collect()
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, data: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(t) => {
                for (a, b) in t.data_mut().iter_mut().zip(&data) {
                    *a += b;
                }
            }
            slot @ None => {
                let shape = self.nodes[v.0].value.shape();
                *slot = Some(Tensor::new(shape, data).expect("gradient shape"));
            }
        }
    }

    fn backward_node(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Conv1d { x, w, b, geom } => {
                let r = kernels::conv1d_backward(
                    geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    gd,
                    self.rg(*x),
                    self.rg(*w),
                    b.is_some_and(|b| self.rg(b)),
                );
                if let Some(dx) = r.dx {
                    self.accumulate(grads, *x, dx);
                }
                if let Some(dw) = r.dw {
                    self.accumulate(grads, *w, dw);
                }
                if let (Some(b), Some(db)) = (b, r.db) {
                    self.accumulate(grads, *b, db);
                }
            }
            Op::Linear { x, w, b } => {
                let (xt, wt) = (self.value(*x), self.value(*w));
                let (batch, n_in, n_out) = (xt.dim(0), xt.dim(1), wt.dim(0));
                if self.rg(*x) {
                    let mut dx = vec![0.0; batch * n_in];
                    kernels::gemm(batch, n_out, n_in, 1.0, gd, false, wt.data(), false, 0.0, &mut dx);
                    self.accumulate(grads, *x, dx);
                }
                if self.rg(*w) {
                    let mut dw = vec![0.0; n_out * n_in];
                    kernels::gemm(n_out, batch, n_in, 1.0, gd, true, xt.data(), false, 0.0, &mut dw);
                    self.accumulate(grads, *w, dw);
                }
                if let Some(b) = b {
                    if self.rg(*b) {
                        let mut db = vec![0.0; n_out];
                        for row in gd.chunks(n_out) {
                            for (d, v) in db.iter_mut().zip(row) {
                                *d += v;
                            }
                        }
                        self.accumulate(grads, *b, db);
                    }
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let xt = self.value(*x);
                let (batch, channels) = (xt.dim(0), xt.dim(1));
                let len = if xt.rank() == 3 { xt.dim(2) } else { 1 };
                let gam = self.value(*gamma).data();
                let mut sum_dy = vec![0.0; channels];
                let mut sum_dy_xhat = vec![0.0; channels];
                for b in 0..batch {
                    for c in 0..channels {
                        let off = (b * channels + c) * len;
                        for i in off..off + len {
                            sum_dy[c] += gd[i];
                            sum_dy_xhat[c] += gd[i] * xhat[i];
                        }
                    }
                }
                if self.rg(*x) {
                    let n = (batch * len) as f64;
                    let mut dx = vec![0.0; xt.len()];
                    for b in 0..batch {
                        for c in 0..channels {
                            let off = (b * channels + c) * len;
                            let k = gam[c] * inv_std[c];
                            for i in off..off + len {
                                dx[i] = if *batch_stats {
                                    k * (gd[i] - sum_dy[c] / n - xhat[i] * sum_dy_xhat[c] / n)
                                } else {
                                    k * gd[i]
                                };
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *gamma, sum_dy_xhat);
                self.accumulate(grads, *beta, sum_dy);
            }
            Op::MaxPool { x, argmax } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (&i, v) in argmax.iter().zip(gd) {
                    dx[i] += v;
                }
                self.accumulate(grads, *x, dx);
            }
            Op::GlobalAvgPool { x } => {
                let xt = self.value(*x);
                let len = xt.dim(2);
                let mut dx = vec![0.0; xt.len()];
                for (row, v) in dx.chunks_mut(len).zip(gd) {
                    row.fill(v / len as f64);
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Dropout { x, mask } => {
                let dx = gd.iter().zip(mask).map(|(a, m)| a * m).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Swish { x, sig } => {
                let dx = gd
                    .iter()
                    .zip(self.value(*x).data())
                    .zip(sig)
                    .map(|((d, &v), s)| d * (s + v * s * (1.0 - s)))
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Sigmoid { x } => {
                let dx = gd
                    .iter()
                    .zip(node.value.data())
                    .map(|(d, s)| d * s * (1.0 - s))
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Relu { x } => {
                let dx = gd
                    .iter()
                    .zip(self.value(*x).data())
                    .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Softmax { x } => {
                let n = node.value.dim(1);
                let mut dx = vec![0.0; gd.len()];
                for ((y, dy), out) in node.value.data().chunks(n).zip(gd.chunks(n)).zip(dx.chunks_mut(n)) {
                    let dot: f64 = y.iter().zip(dy).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        out[j] = y[j] * (dy[j] - dot);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Add { a, b } => {
                self.accumulate(grads, *a, gd.to_vec());
                self.accumulate(grads, *b, gd.to_vec());
            }
            Op::ChannelScale { x, gate } => {
                let (xt, gt) = (self.value(*x), self.value(*gate));
                let len = xt.dim(2);
                if self.rg(*x) {
                    let mut dx = gd.to_vec();
                    for (row, gv) in dx.chunks_mut(len).zip(gt.data()) {
                        for v in row {
                            *v *= gv;
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                if self.rg(*gate) {
                    let dg = gd
                        .chunks(len)
                        .zip(xt.data().chunks(len))
                        .map(|(d, xv)| d.iter().zip(xv).map(|(p, q)| p * q).sum())
                        .collect();
                    self.accumulate(grads, *gate, dg);
                }
            }
            Op::Reshape { x } => {
                self.accumulate(grads, *x, gd.to_vec());
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
            } => {
                let classes = self.value(*logits).dim(1);
                let scale = gd[0] / targets.len() as f64;
                let mut dx = probs.clone();
                for (i, &t) in targets.iter().enumerate() {
                    dx[i * classes + t] -= 1.0;
                }
                for v in &mut dx {
                    *v *= scale;
                }
                self.accumulate(grads, *logits, dx);
            }
            Op::SumProduct { x, weights } => {
                let dx = weights.iter().map(|w| w * gd[0]).collect();
                self.accumulate(grads, *x, dx);
            }
        }
    }
}

/// Result of a backward pass.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: Vec<(Var, ParamId)>,
}

impl Gradients {
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }

    /// Adds every parameter gradient into the store's gradient buffers.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (v, id) in &self.params {
            if let Some(g) = &self.grads[v.0] {
                store.get_mut(*id).grad.add_assign(g);
            }
        }
    }
}
