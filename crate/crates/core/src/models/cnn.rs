//! Plain 1D CNN baseline: three conv/ReLU/max-pool stages, then two fully
//! connected layers.

use serde::{Deserialize, Serialize};

use crate::dataset::WINDOW_LEN;
use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::nn::layers::{Conv1d, Ctx, Linear};
use crate::nn::{ParamStore, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CnnConfig {
    pub input_len: usize,
    pub channels: [usize; 3],
    pub kernel_size: usize,
    pub hidden: usize,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            input_len: WINDOW_LEN,
            channels: [16, 32, 64],
            kernel_size: 5,
            hidden: 64,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cnn1d {
    convs: Vec<Conv1d>,
    fc1: Linear,
    fc2: Linear,
    flat: usize,
}

impl Cnn1d {
    pub fn new(cfg: &CnnConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        if cfg.kernel_size < 1 || cfg.input_len >> 3 == 0 {
            return Err(Error::Config("CNN input too short for three pooling stages".into()));
        }
        let mut c_in = 1;
        let mut len = cfg.input_len;
        let mut convs = Vec::new();
        for (i, &c) in cfg.channels.iter().enumerate() {
            convs.push(Conv1d::new(store, &format!("conv{i}"), c_in, c, cfg.kernel_size, 1, true, rng));
            c_in = c;
            len /= 2;
        }
        let flat = c_in * len;
        let fc1 = Linear::new(store, "fc1", flat, cfg.hidden, rng);
        let fc2 = Linear::new(store, "fc2", cfg.hidden, NUM_CLASSES, rng);
        Ok(Self { convs, fc1, fc2, flat })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let mut h = x;
        for conv in &self.convs {
            h = conv.forward(ctx, h)?;
            h = ctx.tape.relu(h);
            h = ctx.tape.max_pool1d(h, 2)?;
        }
        let batch = ctx.tape.value(h).dim(0);
        h = ctx.tape.reshape(h, &[batch, self.flat])?;
        h = self.fc1.forward(ctx, h)?;
        h = ctx.tape.relu(h);
        self.fc2.forward(ctx, h)
    }
}
