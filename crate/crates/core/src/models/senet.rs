//! 1D squeeze-and-excitation residual network.
//!
//! ```text
//! stem:   conv(k, 1 -> C) [BN] swish
//! stage s (s = 0..stages, width C * 2^s), 2 basic blocks each:
//!   conv(k, stride) [BN] swish conv(k) [BN] SE  (+ skip)  swish
//!   the first block of every stage after the first has stride 2 and a
//!   1x1 stride-2 projection [BN] on the skip path
//! head:   global average pool  [dropout]  linear -> 7
//! ```
//! `C = channels_per_width * width_ratio`.

use serde::{Deserialize, Serialize};

use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::nn::layers::{BatchNorm1d, Conv1d, Ctx, Dropout, Linear};
use crate::nn::{ParamStore, Var};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SENetConfig {
    pub kernel_size: usize,
    pub block_stages: usize,
    pub width_ratio: usize,
    pub use_batch_norm: bool,
    pub use_dropout: bool,
    pub dropout_rate: f64,
    pub se_reduction: usize,
    pub num_classes: usize,
    /// Stem channels per unit of `width_ratio`.
    pub channels_per_width: usize,
    pub blocks_per_stage: usize,
    /// `false` builds the same residual network without SE gates.
    pub use_se: bool,
}

impl Default for SENetConfig {
    fn default() -> Self {
        Self {
            kernel_size: 5,
            block_stages: 4,
            width_ratio: 4,
            use_batch_norm: true,
            use_dropout: true,
            dropout_rate: 0.5,
            se_reduction: 16,
            num_classes: NUM_CLASSES,
            channels_per_width: 1,
            blocks_per_stage: 2,
            use_se: true,
        }
    }
}

impl SENetConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.kernel_size < 3 {
            return fail(format!("kernel_size must be >= 3, got {}", self.kernel_size));
        }
        if self.block_stages < 1 {
            return fail("block_stages must be >= 1".into());
        }
        if self.width_ratio < 1 || self.channels_per_width < 1 {
            return fail("width_ratio and channels_per_width must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} outside [0, 1)", self.dropout_rate));
        }
        if self.se_reduction < 1 {
            return fail("se_reduction must be >= 1".into());
        }
        if self.num_classes != NUM_CLASSES {
            return fail(format!("num_classes is fixed at {NUM_CLASSES}"));
        }
        if self.blocks_per_stage < 1 {
            return fail("blocks_per_stage must be >= 1".into());
        }
        Ok(())
    }

    pub fn base_channels(&self) -> usize {
        self.channels_per_width * self.width_ratio
    }
}

/// Squeeze (global average pool) and excitation (C -> C/r -> C, swish then
/// sigmoid); the resulting per-channel gate multiplies the feature map.
#[derive(Debug, Clone)]
pub struct SeBlock {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl SeBlock {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, reduction: usize, rng: &mut Rng) -> Self {
        let hidden = (channels / reduction).max(1);
        Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), channels, hidden, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, channels, rng),
        }
    }

    pub fn gate(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let s = ctx.tape.global_avg_pool1d(x)?;
        let h = self.fc1.forward(ctx, s)?;
        let h = ctx.tape.swish(h);
        let h = self.fc2.forward(ctx, h)?;
        Ok(ctx.tape.sigmoid(h))
    }

    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let g = self.gate(ctx, x)?;
        ctx.tape.channel_scale(x, g)
    }
}

#[derive(Debug, Clone)]
pub struct BasicBlock {
    pub conv1: Conv1d,
    pub bn1: Option<BatchNorm1d>,
    pub conv2: Conv1d,
    pub bn2: Option<BatchNorm1d>,
    pub se: Option<SeBlock>,
    pub projection: Option<(Conv1d, Option<BatchNorm1d>)>,
}

impl BasicBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        stride: usize,
        cfg: &SENetConfig,
        rng: &mut Rng,
    ) -> Self {
        let k = cfg.kernel_size;
        let bn = cfg.use_batch_norm;
        let conv1 = Conv1d::new(store, &format!("{name}.conv1"), c_in, c_out, k, stride, true, rng);
        let bn1 = bn.then(|| BatchNorm1d::new(store, &format!("{name}.bn1"), c_out));
        let conv2 = Conv1d::new(store, &format!("{name}.conv2"), c_out, c_out, k, 1, true, rng);
        let bn2 = bn.then(|| BatchNorm1d::new(store, &format!("{name}.bn2"), c_out));
        let se = cfg
            .use_se
            .then(|| SeBlock::new(store, &format!("{name}.se"), c_out, cfg.se_reduction, rng));
        let projection = (stride != 1 || c_in != c_out).then(|| {
            let conv = Conv1d::new(store, &format!("{name}.proj"), c_in, c_out, 1, stride, true, rng);
            let norm = bn.then(|| BatchNorm1d::new(store, &format!("{name}.proj_bn"), c_out));
            (conv, norm)
        });
        Self {
            conv1,
            bn1,
            conv2,
            bn2,
            se,
            projection,
        }
    }

    /// `unit_gate` replaces the SE gate with exact ones.
    pub fn forward(&self, ctx: &mut Ctx, x: Var, unit_gate: bool) -> Result<Var> {
        let mut h = self.conv1.forward(ctx, x)?;
        if let Some(bn) = &self.bn1 {
            h = bn.forward(ctx, h)?;
        }
        h = ctx.tape.swish(h);
        h = self.conv2.forward(ctx, h)?;
        if let Some(bn) = &self.bn2 {
            h = bn.forward(ctx, h)?;
        }
        if let (Some(se), false) = (&self.se, unit_gate) {
            h = se.forward(ctx, h)?;
        }
        let skip = match &self.projection {
            Some((conv, norm)) => {
                let s = conv.forward(ctx, x)?;
                match norm {
                    Some(bn) => bn.forward(ctx, s)?,
                    None => s,
                }
            }
            None => x,
        };
        let y = ctx.tape.add(h, skip)?;
        Ok(ctx.tape.swish(y))
    }
}

#[derive(Debug, Clone)]
pub struct SENet {
    pub stem: Conv1d,
    pub stem_bn: Option<BatchNorm1d>,
    pub stages: Vec<Vec<BasicBlock>>,
    pub dropout: Option<Dropout>,
    pub head: Linear,
    unit_gate: bool,
}

impl SENet {
    pub fn new(cfg: &SENetConfig, store: &mut ParamStore, rng: &mut Rng) -> Result<Self> {
        cfg.validate()?;
        let base = cfg.base_channels();
        let stem = Conv1d::new(store, "stem.conv", 1, base, cfg.kernel_size, 1, true, rng);
        let stem_bn = cfg.use_batch_norm.then(|| BatchNorm1d::new(store, "stem.bn", base));
        let mut stages = Vec::with_capacity(cfg.block_stages);
        let mut c_in = base;
        for s in 0..cfg.block_stages {
            let c_out = base << s;
            let blocks = (0..cfg.blocks_per_stage)
                .map(|b| {
                    let stride = if s > 0 && b == 0 { 2 } else { 1 };
                    let blk = BasicBlock::new(store, &format!("stage{s}.block{b}"), c_in, c_out, stride, cfg, rng);
                    c_in = c_out;
                    blk
                })
                .collect();
            stages.push(blocks);
        }
        let dropout = if cfg.use_dropout {
            Some(Dropout::new(cfg.dropout_rate)?)
        } else {
            None
        };
        let head = Linear::new(store, "head", c_in, cfg.num_classes, rng);
        Ok(Self {
            stem,
            stem_bn,
            stages,
            dropout,
            head,
            unit_gate: false,
        })
    }

    /// Test hook: with the gate forced to ones every SE block is an identity.
    pub fn set_unit_gate(&mut self, on: bool) {
        self.unit_gate = on;
    }

    /// `x: [B, 1, L]` to logits `[B, 7]`.
    pub fn forward(&self, ctx: &mut Ctx, x: Var) -> Result<Var> {
        let mut h = self.stem.forward(ctx, x)?;
        if let Some(bn) = &self.stem_bn {
            h = bn.forward(ctx, h)?;
        }
        h = ctx.tape.swish(h);
        for block in self.stages.iter().flatten() {
            h = block.forward(ctx, h, self.unit_gate)?;
        }
        h = ctx.tape.global_avg_pool1d(h)?;
        if let Some(d) = &self.dropout {
            h = d.forward(ctx, h)?;
        }
        self.head.forward(ctx, h)
    }
}
