//! Fitting any model family on a split, multi-seed evaluation and model files.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{rows, DatasetSplit, WindowSample};
use crate::error::{Error, Result};
use crate::eval::{average_reports, evaluate, EvalReport, ReportMetadata};
use crate::models::classical::{ClassicalDocument, ClassicalModel, Preprocessor};
use crate::models::train::{train, TrainConfig, TrainingLog};
use crate::models::{
    Architecture, Classifier, CnnConfig, DecisionTree, ForestConfig, MlpConfig, NeuralModel, RandomForest,
    SENetConfig, SvmConfig, TreeConfig,
};
use crate::models::svm::LinearSvm;
use crate::rng::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Senet1d,
    Cnn1d,
    Mlp,
    DecisionTree,
    RandomForest,
    Svm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 6] = [
        ModelKind::Senet1d,
        ModelKind::Cnn1d,
        ModelKind::Mlp,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::Svm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Senet1d => "senet1d",
            ModelKind::Cnn1d => "cnn1d",
            ModelKind::Mlp => "mlp",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Svm => "svm",
        }
    }

    pub fn is_neural(self) -> bool {
        matches!(self, ModelKind::Senet1d | ModelKind::Cnn1d | ModelKind::Mlp)
    }

    /// Families trained on standardized inputs.
    pub fn standardizes(self) -> bool {
        matches!(self, ModelKind::Mlp | ModelKind::Svm)
    }
}

/// A model family, optionally preceded by PCA. Written `random_forest+pca`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub pca: bool,
}

impl ModelSpec {
    pub const fn new(kind: ModelKind) -> Self {
        Self { kind, pca: false }
    }

    pub const fn with_pca(kind: ModelKind) -> Self {
        Self { kind, pca: true }
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind.name())?;
        if self.pca {
            f.write_str("+pca")?;
        }
        Ok(())
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, pca) = match s.strip_suffix("+pca") {
            Some(b) => (b, true),
            None => (s, false),
        };
        let kind = ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == base)
            .ok_or_else(|| Error::Config(format!("unknown model '{s}'")))?;
        if pca && matches!(kind, ModelKind::Senet1d | ModelKind::Cnn1d) {
            return Err(Error::Config(format!("{} consumes raw sequences; PCA is not supported", kind.name())));
        }
        Ok(Self { kind, pca })
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hyperparameters of every model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub senet: SENetConfig,
    pub cnn: CnnConfig,
    pub mlp: MlpConfig,
    pub train: TrainConfig,
    pub tree: TreeConfig,
    pub forest: ForestConfig,
    pub svm: SvmConfig,
    pub pca_components: usize,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            senet: SENetConfig::default(),
            cnn: CnnConfig::default(),
            mlp: MlpConfig::default(),
            train: TrainConfig::default(),
            tree: TreeConfig::default(),
            forest: ForestConfig::default(),
            svm: SvmConfig::default(),
            pca_components: 15,
        }
    }
}

/// A fitted model of any family.
#[derive(Debug, Clone)]
pub enum Fitted {
    Neural {
        model: NeuralModel,
        preprocessing: Preprocessor,
    },
    Classical(ClassicalDocument),
}

impl Classifier for Fitted {
    fn predict(&mut self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        self.predict_proba(rows).map(|p| p.iter().map(|r| crate::models::argmax(r)).collect())
    }
}

impl Fitted {
    pub fn model_type(&self) -> String {
        match self {
            Fitted::Neural { model, preprocessing } => {
                let base = model.arch.model_type();
                if preprocessing.pca.is_some() {
                    format!("{base}+pca")
                } else {
                    base.to_string()
                }
            }
            Fitted::Classical(doc) => {
                let base = doc.model.model_type();
                if doc.preprocessing.pca.is_some() {
                    format!("{base}+pca")
                } else {
                    base.to_string()
                }
            }
        }
    }

    /// Class probabilities; classical models put all mass on their vote.
    pub fn predict_proba(&mut self, rows: &[&[f64]]) -> Result<Vec<[f64; crate::NUM_CLASSES]>> {
        match self {
            Fitted::Neural { model, preprocessing } => {
                if preprocessing.is_identity() {
                    model.predict_proba(rows, 256)
                } else {
                    let z = preprocessing.apply(rows);
                    let refs: Vec<&[f64]> = z.iter().map(|r| r.as_slice()).collect();
                    model.predict_proba(&refs, 256)
                }
            }
            Fitted::Classical(doc) => Ok(doc
                .predict(rows)?
                .into_iter()
                .map(|c| {
                    let mut p = [0.0; crate::NUM_CLASSES];
                    p[c] = 1.0;
                    p
                })
                .collect()),
        }
    }

    /// Writes a checkpoint (deep models) or JSON document (classical models).
    pub fn save(&self, path: &Path, metadata: serde_json::Value) -> Result<()> {
        match self {
            Fitted::Neural { model, preprocessing } => {
                let meta = serde_json::json!({
                    "preprocessing": preprocessing,
                    "run": metadata,
                });
                model.save(path, meta)
            }
            Fitted::Classical(doc) => {
                let mut doc = doc.clone();
                doc.metadata = metadata;
                doc.save(path)
            }
        }
    }

    /// Loads either file kind, returning the stored run metadata.
    pub fn load(path: &Path) -> Result<(Self, serde_json::Value)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let end = bytes.iter().position(|&b| b == b'\n').unwrap_or(bytes.len());
        let head: serde_json::Value = serde_json::from_slice(&bytes[..end])
            .map_err(|e| Error::Config(format!("{} is not a model file: {e}", path.display())))?;
        match head.get("format").and_then(|f| f.as_str()) {
            Some(crate::nn::checkpoint::CHECKPOINT_FORMAT) => {
                let (model, header) = NeuralModel::load(path)?;
                let preprocessing = serde_json::from_value(header.metadata["preprocessing"].clone())?;
                let run = header.metadata.get("run").cloned().unwrap_or_default();
                Ok((Fitted::Neural { model, preprocessing }, run))
            }
            Some(crate::models::classical::CLASSICAL_FORMAT) => {
                let doc = ClassicalDocument::from_json(std::str::from_utf8(&bytes).map_err(|e| {
                    Error::Config(format!("{}: {e}", path.display()))
                })?)?;
                let run = doc.metadata.clone();
                Ok((Fitted::Classical(doc), run))
            }
            other => Err(Error::Config(format!("{}: unknown model format {other:?}", path.display()))),
        }
    }
}

pub struct FitOutcome {
    pub fitted: Fitted,
    pub log: Option<TrainingLog>,
}

fn architecture(spec: ModelSpec, settings: &ModelSettings, input_dim: usize) -> Architecture {
    match spec.kind {
        ModelKind::Senet1d => Architecture::SENet(settings.senet.clone()),
        ModelKind::Cnn1d => Architecture::Cnn1d(CnnConfig {
            input_len: input_dim,
            ..settings.cnn.clone()
        }),
        _ => Architecture::Mlp(MlpConfig {
            input_len: input_dim,
            ..settings.mlp.clone()
        }),
    }
}

pub fn fit_model(spec: ModelSpec, settings: &ModelSettings, split: &DatasetSplit, seed: u64) -> Result<FitOutcome> {
    if split.train.is_empty() {
        return Err(Error::EmptyInput("split has no training samples".into()));
    }
    if spec.pca && matches!(spec.kind, ModelKind::Senet1d | ModelKind::Cnn1d) {
        return Err(Error::Config(format!("{spec}: PCA is not supported for sequence models")));
    }
    let train_rows = rows(&split.train);
    let pre = Preprocessor::fit(
        &train_rows,
        spec.kind.standardizes() || spec.pca,
        spec.pca.then_some(settings.pca_components),
    )?;
    let input_dim = pre.output_dim(split.window_len);
    if spec.kind.is_neural() {
        let train_s = pre.apply_samples(&split.train);
        let eval_s = pre.apply_samples(&split.eval);
        let model = NeuralModel::build(architecture(spec, settings, input_dim), seed)?;
        let outcome = train(model, &train_s, &eval_s, &settings.train, seed)?;
        return Ok(FitOutcome {
            fitted: Fitted::Neural {
                model: outcome.model,
                preprocessing: pre,
            },
            log: Some(outcome.log),
        });
    }
    let z;
    let x: Vec<&[f64]> = if pre.is_identity() {
        train_rows
    } else {
        z = pre.apply(&train_rows);
        z.iter().map(|r| r.as_slice()).collect()
    };
    let y = crate::dataset::labels(&split.train);
    let model = match spec.kind {
        ModelKind::DecisionTree => {
            ClassicalModel::DecisionTree(DecisionTree::fit(&x, &y, &settings.tree, &mut rng_from(seed))?)
        }
        ModelKind::RandomForest => ClassicalModel::RandomForest(RandomForest::fit(&x, &y, &settings.forest, seed)?),
        _ => ClassicalModel::Svm(LinearSvm::fit(&x, &y, &settings.svm, seed)?),
    };
    Ok(FitOutcome {
        fitted: Fitted::Classical(ClassicalDocument::new(pre, model, serde_json::Value::Null)),
        log: None,
    })
}

/// Attached to every SVM report: the baseline is a linear one-vs-rest
/// machine, not a kernel SVM.
pub const LINEAR_SVM_NOTE: &str =
    "svm is a linear one-vs-rest machine trained with Pegasos; no kernel is applied";

/// `n` run seeds derived from one master seed.
pub fn seed_list(master: u64, n: usize) -> Vec<u64> {
    (0..n).map(|i| derive_seed(master, &[0x5eed, i as u64])).collect()
}

pub struct SeedRun {
    pub seed: u64,
    pub report: EvalReport,
    pub log: Option<TrainingLog>,
    pub fitted: Fitted,
}

pub struct MultiSeedResult {
    /// Mean over seeds.
    pub report: EvalReport,
    pub runs: Vec<SeedRun>,
}

/// Fits and evaluates one model per seed, then averages the reports.
pub fn run_seeds(
    spec: ModelSpec,
    settings: &ModelSettings,
    split: &DatasetSplit,
    seeds: &[u64],
    metadata: &ReportMetadata,
) -> Result<MultiSeedResult> {
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let FitOutcome { mut fitted, log } = fit_model(spec, settings, split, seed)?;
        let mut meta = ReportMetadata {
            model_type: spec.to_string(),
            seeds: vec![seed],
            ..metadata.clone()
        };
        if spec.kind == ModelKind::Svm && !meta.notes.iter().any(|n| n == LINEAR_SVM_NOTE) {
            meta.notes.push(LINEAR_SVM_NOTE.to_string());
        }
        let report = evaluate(&mut fitted, &split.eval)?.with_metadata(meta);
        log::info!("{spec} seed {seed}: accuracy {:.4}, macro F1 {:.4}", report.accuracy, report.macro_f1);
        runs.push(SeedRun {
            seed,
            report,
            log,
            fitted,
        });
    }
    let reports: Vec<EvalReport> = runs.iter().map(|r| r.report.clone()).collect();
    Ok(MultiSeedResult {
        report: average_reports(&reports)?,
        runs,
    })
}

/// Evaluates an already fitted model on `samples`.
pub fn evaluate_fitted(fitted: &mut Fitted, samples: &[WindowSample], metadata: ReportMetadata) -> Result<EvalReport> {
    Ok(evaluate(fitted, samples)?.with_metadata(metadata))
}
