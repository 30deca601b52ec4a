use serde::{Deserialize, Serialize};

use crate::dataset::WINDOW_LEN;
use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::nn::layers::{Ctx, Linear};
use crate::nn::{ParamStore, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub input_len: usize,
    pub hidden: Vec<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            input_len: WINDOW_LEN,
            hidden: vec![200, 100, 200],
        }
    }
}

/// Fully connected ReLU network on flat windows.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Linear>,
}

impl Mlp {
    pub fn new(cfg: &MlpConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        if cfg.input_len == 0 || cfg.hidden.contains(&0) {
            return Err(Error::Config("MLP layer sizes must be positive".into()));
        }
        let mut sizes = vec![cfg.input_len];
        sizes.extend(&cfg.hidden);
        sizes.push(NUM_CLASSES);
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("fc{i}"), w[0], w[1], rng))
            .collect();
        Ok(Self { layers })
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let mut h = x;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(ctx, h)?;
            if i < last {
                h = ctx.tape.relu(h);
            }
        }
        Ok(h)
    }
}
