use rand::Rng as _;

use crate::error::{Error, Result};
use crate::nn::params::{ParamId, ParamStore};
use crate::nn::tape::{Tape, Var};
use crate::nn::Tensor;
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything a layer needs during one forward pass.
pub struct Ctx<'a> {
    pub tape: &'a mut Tape,
    pub store: &'a mut ParamStore,
    pub mode: Mode,
    pub rng: &'a mut Rng,
}

impl Ctx<'_> {
    pub fn param(&mut self, id: ParamId) -> Var {
        self.tape.param(self.store, id)
    }
}

/// 1D convolution. Padding is "same"-style: `(k-1)/2` on the left and the
/// remainder on the right, so stride 1 preserves length for any kernel size.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let fan_in = c_in * kernel;
        let weight = store.add_fan_in_uniform(format!("{name}.weight"), &[c_out, c_in, kernel], fan_in, rng);
        let bias = bias.then(|| store.add_fan_in_uniform(format!("{name}.bias"), &[c_out], fan_in, rng));
        let pad_left = (kernel - 1) / 2;
        Self {
            weight,
            bias,
            stride,
            pad_left,
            pad_right: kernel - 1 - pad_left,
        }
    }

    pub fn unpadded(mut self) -> Self {
        self.pad_left = 0;
        self.pad_right = 0;
        self
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = self.bias.map(|b| ctx.param(b));
        ctx.tape.conv1d(x, w, b, self.stride, self.pad_left, self.pad_right)
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, n_in: usize, n_out: usize, rng: &mut Rng) -> Self {
        let weight = store.add_fan_in_uniform(format!("{name}.weight"), &[n_out, n_in], n_in, rng);
        let bias = store.add_fan_in_uniform(format!("{name}.bias"), &[n_out], n_in, rng);
        Self { weight, bias }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let w = ctx.param(self.weight);
        let b = ctx.param(self.bias);
        ctx.tape.linear(x, w, Some(b))
    }
}

/// Batch normalization over `[B, C]` or `[B, C, L]`. Running statistics are
/// non-trainable store entries updated as
/// `running = (1 - momentum) * running + momentum * batch` (unbiased variance).
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm1d {
    pub const DEFAULT_MOMENTUM: f64 = 0.1;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, channels: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Tensor::full(&[channels], 1.0), true),
            beta: store.add(format!("{name}.beta"), Tensor::zeros(&[channels]), true),
            running_mean: store.add(format!("{name}.running_mean"), Tensor::zeros(&[channels]), false),
            running_var: store.add(format!("{name}.running_var"), Tensor::full(&[channels], 1.0), false),
            momentum: Self::DEFAULT_MOMENTUM,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let gamma = ctx.param(self.gamma);
        let beta = ctx.param(self.beta);
        match ctx.mode {
            Mode::Train => {
                let shape = ctx.tape.value(x).shape().to_vec();
                let n: usize = shape[0] * shape.get(2).copied().unwrap_or(1);
                let (y, mean, var) = ctx.tape.batch_norm_train(x, gamma, beta, self.eps)?;
                let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
                let m = self.momentum;
                let rm = ctx.store.get_mut(self.running_mean).value.data_mut();
                for (r, b) in rm.iter_mut().zip(&mean) {
                    *r = (1.0 - m) * *r + m * b;
                }
                let rv = ctx.store.get_mut(self.running_var).value.data_mut();
                for (r, b) in rv.iter_mut().zip(&var) {
                    *r = (1.0 - m) * *r + m * b * unbias;
                }
                Ok(y)
            }
            Mode::Eval => {
                let mean = ctx.store.value(self.running_mean).data().to_vec();
                let var = ctx.store.value(self.running_var).data().to_vec();
                ctx.tape.batch_norm_eval(x, gamma, beta, &mean, &var, self.eps)
            }
        }
    }
}

/// Inverted dropout: kept activations are scaled by `1/(1-rate)` in
/// training; identity in evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::contract(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(Self { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        if ctx.mode == Mode::Eval || self.rate == 0.0 {
            return Ok(x);
        }
        let n = ctx.tape.value(x).len();
        let keep = 1.0 / (1.0 - self.rate);
        let mask = (0..n)
            .map(|_| if ctx.rng.gen::<f64>() < self.rate { 0.0 } else { keep })
            .collect();
        ctx.tape.dropout_with_mask(x, mask)
    }
}
