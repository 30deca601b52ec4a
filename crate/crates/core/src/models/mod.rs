//! The 1D SENet and the baseline classifiers.

pub mod classical;
pub mod cnn;
pub mod forest;
pub mod mlp;
pub mod neural;
pub mod pca;
pub mod senet;
pub mod svm;
pub mod train;
pub mod tree;

pub use classical::{ClassicalDocument, ClassicalModel, Preprocessor};
pub use cnn::CnnConfig;
pub use forest::{ForestConfig, RandomForest};
pub use mlp::MlpConfig;
pub use neural::{argmax, Architecture, NeuralModel};
pub use pca::Pca;
pub use senet::SENetConfig;
pub use svm::{LinearSvm, SvmConfig};
pub use train::{EpochRecord, TrainConfig, TrainOutcome, TrainingLog};
pub use tree::{DecisionTree, TreeConfig};

use crate::error::Result;

/// Anything that maps window rows to class codes.
pub trait Classifier {
    fn predict(&mut self, rows: &[&[f64]]) -> Result<Vec<usize>>;
}

impl Classifier for NeuralModel {
    fn predict(&mut self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        NeuralModel::predict(self, rows, 256)
    }
}
