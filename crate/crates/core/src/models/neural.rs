use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::models::cnn::{Cnn1d, CnnConfig};
use crate::models::mlp::{Mlp, MlpConfig};
use crate::models::senet::{SENet, SENetConfig};
use crate::nn::checkpoint::{self, CheckpointHeader};
use crate::nn::kernels::softmax_rows;
use crate::nn::layers::{Ctx, Mode};
use crate::nn::{ParamStore, Tape, Tensor, Var};
use crate::rng::{derived_rng, rng_from, Rng};

/// Serializable description of a deep model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", content = "config")]
pub enum Architecture {
    #[serde(rename = "senet1d")]
    SENet(SENetConfig),
    #[serde(rename = "cnn1d")]
    Cnn1d(CnnConfig),
    #[serde(rename = "mlp")]
    Mlp(MlpConfig),
}

impl Architecture {
    pub fn model_type(&self) -> &'static str {
        match self {
            Architecture::SENet(_) => "senet1d",
            Architecture::Cnn1d(_) => "cnn1d",
            Architecture::Mlp(_) => "mlp",
        }
    }

    /// Whether inputs are `[B, 1, L]` sequences rather than flat `[B, L]`.
    pub fn takes_sequences(&self) -> bool {
        !matches!(self, Architecture::Mlp(_))
    }
}

#[derive(Debug, Clone)]
enum Net {
    SENet(SENet),
    Cnn1d(Cnn1d),
    Mlp(Mlp),
}

/// A deep model: architecture, parameters and layer graph.
#[derive(Debug, Clone)]
pub struct NeuralModel {
    pub arch: Architecture,
    pub store: ParamStore,
    net: Net,
}

const INIT_STREAM: u64 = 0x1817;

impl NeuralModel {
    pub fn build(arch: Architecture, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new();
        let mut rng = derived_rng(seed, &[INIT_STREAM]);
        let net = match &arch {
            Architecture::SENet(c) => Net::SENet(SENet::new(c, &mut store, &mut rng)?),
            Architecture::Cnn1d(c) => Net::Cnn1d(Cnn1d::new(c, &mut store, &mut rng)?),
            Architecture::Mlp(c) => Net::Mlp(Mlp::new(c, &mut store, &mut rng)?),
        };
        Ok(Self { arch, store, net })
    }

    pub fn param_count(&self) -> usize {
        self.store.trainable_count()
    }

    pub fn senet_mut(&mut self) -> Option<&mut SENet> {
        match &mut self.net {
            Net::SENet(s) => Some(s),
            _ => None,
        }
    }

    /// Stacks rows into the model's input tensor.
    pub fn input_tensor(&self, rows: &[&[f64]]) -> Result<Tensor> {
        let batch = rows.len();
        if batch == 0 {
            return Err(Error::contract("empty batch"));
        }
        let len = rows[0].len();
        if rows.iter().any(|r| r.len() != len) {
            return Err(Error::contract("ragged batch"));
        }
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        if self.arch.takes_sequences() {
            Tensor::new(&[batch, 1, len], data)
        } else {
            Tensor::new(&[batch, len], data)
        }
    }

    /// Runs the network on an input already placed on `tape`.
    pub fn forward(&mut self, tape: &mut Tape, x: Var, mode: Mode, rng: &mut Rng) -> Result<Var> {
        let mut ctx = Ctx {
            tape,
            store: &mut self.store,
            mode,
            rng,
        };
        match &self.net {
            Net::SENet(n) => n.forward(&mut ctx, x),
            Net::Cnn1d(n) => n.forward(&mut ctx, x),
            Net::Mlp(n) => n.forward(&mut ctx, x),
        }
    }

    /// Evaluation-mode logits `[B, 7]`.
    pub fn logits(&mut self, rows: &[&[f64]]) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(self.input_tensor(rows)?);
        let mut rng = rng_from(0);
        let y = self.forward(&mut tape, x, Mode::Eval, &mut rng)?;
        Ok(tape.value(y).clone())
    }

    /// Evaluation-mode class probabilities, processed in chunks.
    pub fn predict_proba(&mut self, rows: &[&[f64]], chunk: usize) -> Result<Vec<[f64; NUM_CLASSES]>> {
        let mut out = Vec::with_capacity(rows.len());
        for part in rows.chunks(chunk.max(1)) {
            let logits = self.logits(part)?;
            for p in softmax_rows(logits.data(), NUM_CLASSES).chunks(NUM_CLASSES) {
                out.push(p.try_into().expect("7 classes"));
            }
        }
        Ok(out)
    }

    pub fn predict(&mut self, rows: &[&[f64]], chunk: usize) -> Result<Vec<usize>> {
        Ok(self
            .predict_proba(rows, chunk)?
            .iter()
            .map(|p| argmax(p))
            .collect())
    }

    pub fn checkpoint_header(&self, metadata: serde_json::Value) -> Result<CheckpointHeader> {
        Ok(CheckpointHeader::new(
            self.arch.model_type(),
            serde_json::to_value(&self.arch)?,
            &self.store,
            metadata,
        ))
    }

    pub fn to_checkpoint_bytes(&self, metadata: serde_json::Value) -> Result<Vec<u8>> {
        checkpoint::encode_checkpoint(&self.checkpoint_header(metadata)?, &self.store)
    }

    pub fn save(&self, path: &Path, metadata: serde_json::Value) -> Result<()> {
        checkpoint::write_checkpoint(path, &self.checkpoint_header(metadata)?, &self.store)
    }

    pub fn load(path: &Path) -> Result<(Self, CheckpointHeader)> {
        let (header, tensors) = checkpoint::read_checkpoint(path)?;
        let arch: Architecture = serde_json::from_value(header.architecture.clone())?;
        let mut model = Self::build(arch, 0)?;
        checkpoint::restore_into(&mut model.store, &header, tensors)?;
        Ok((model, header))
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}
