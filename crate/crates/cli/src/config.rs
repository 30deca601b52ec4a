//! Run configuration: every tunable of the pipeline in one JSON document.

use std::path::{Path, PathBuf};

use flowpat_core::domain::default_envelope;
use flowpat_core::dsp::{sampling_plan, WelchParams, DEFAULT_SAMPLING_FACTOR};
use flowpat_core::pipeline::{ModelKind, ModelSettings, ModelSpec};
use flowpat_core::sweep::SweepGroup;
use flowpat_core::synth::SynthConfig;
use flowpat_core::{Error, PatternEnvelope, Result, SplitProtocol, WINDOW_LEN};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::overrides::Override;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Synthetic experiments per (pattern, inclination) envelope row.
    pub per_row: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { per_row: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub protocol: SplitProtocol,
    pub train_per_pattern: usize,
    pub eval_per_pattern: usize,
    pub window_len: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            protocol: SplitProtocol::ExperimentBased,
            train_per_pattern: 2000,
            eval_per_pattern: 500,
            window_len: WINDOW_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsdConfig {
    /// Cumulative power fraction that defines the cutoff frequency.
    pub cutoff_fraction: f64,
    /// Sampling safety factor applied to the cutoff.
    pub sampling_factor: f64,
}

impl Default for PsdConfig {
    fn default() -> Self {
        Self {
            cutoff_fraction: 0.99,
            sampling_factor: DEFAULT_SAMPLING_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    pub stride: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self { stride: WINDOW_LEN }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub groups: Vec<SweepGroup>,
    pub n_seeds: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            groups: SweepGroup::ALL.to_vec(),
            n_seeds: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// Used when a trace's manifest does not state its own rate.
    pub sample_rate_hz: f64,
    /// Clamp ingested voltages into the calibrated 0-5 V range.
    pub calibrate: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: flowpat_core::domain::DEFAULT_SAMPLE_RATE_HZ,
            calibrate: true,
        }
    }
}

/// Input locations. Not part of the config hash, so moving a directory
/// does not invalidate the artifacts inside it.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub corpus: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub train: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed for splitting and training.
    pub seed: u64,
    pub synth: SynthConfig,
    pub envelope: PatternEnvelope,
    pub corpus: CorpusConfig,
    pub split: SplitConfig,
    pub model: ModelSpec,
    pub models: ModelSettings,
    /// Training runs per `train`/`eval`, each with a seed derived from `seed`.
    pub n_seeds: usize,
    pub welch: WelchParams,
    pub psd: PsdConfig,
    pub predict: PredictConfig,
    pub sweep: SweepConfig,
    pub ingest: IngestConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            synth: SynthConfig::default(),
            envelope: default_envelope(),
            corpus: CorpusConfig::default(),
            split: SplitConfig::default(),
            model: ModelSpec::new(ModelKind::Senet1d),
            models: ModelSettings::default(),
            n_seeds: 1,
            welch: WelchParams::default(),
            psd: PsdConfig::default(),
            predict: PredictConfig::default(),
            sweep: SweepConfig::default(),
            ingest: IngestConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the optional config file, then overrides, then `--seed`.
    pub fn resolve(file: Option<&Path>, overrides: &[Override], seed: Option<u64>) -> Result<Self> {
        let mut value = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                    path: path.to_path_buf(),
                    source,
                })?;
                let cfg: RunConfig = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                serde_json::to_value(cfg)?
            }
            None => serde_json::to_value(RunConfig::default())?,
        };
        for o in overrides {
            o.apply(&mut value)?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(value).map_err(|e| Error::Config(format!("after overrides: {e}")))?;
        if let Some(s) = seed {
            cfg.seed = s;
            cfg.synth.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        PatternEnvelope::new(self.envelope.rows().to_vec())?;
        self.welch.validate()?;
        self.models.senet.validate()?;
        self.models.train.validate()?;
        let positive = [
            ("corpus.per_row", self.corpus.per_row),
            ("split.train_per_pattern", self.split.train_per_pattern),
            ("split.eval_per_pattern", self.split.eval_per_pattern),
            ("split.window_len", self.split.window_len),
            ("n_seeds", self.n_seeds),
            ("predict.stride", self.predict.stride),
            ("sweep.n_seeds", self.sweep.n_seeds),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(self.ingest.sample_rate_hz > 0.0 && self.ingest.sample_rate_hz.is_finite()) {
            return Err(Error::Config("ingest.sample_rate_hz must be positive".into()));
        }
        if !(self.psd.cutoff_fraction > 0.0 && self.psd.cutoff_fraction <= 1.0) {
            return Err(Error::Config("psd.cutoff_fraction must lie in (0, 1]".into()));
        }
        sampling_plan(1.0, self.psd.sampling_factor).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the compact JSON form, excluding `paths`.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("paths");
        }
        sha256_hex(v.to_string().as_bytes())
    }

    /// The reproducibility record written into every output directory.
    pub fn record(&self) -> String {
        let doc = serde_json::json!({
            "config_hash": self.hash(),
            "config": self,
        });
        serde_json::to_string_pretty(&doc).expect("config serializes") + "\n"
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
