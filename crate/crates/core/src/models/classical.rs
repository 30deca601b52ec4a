//! Input preprocessing and the JSON document for classical models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Standardizer, WindowSample};
use crate::error::{Error, Result};
use crate::models::forest::RandomForest;
use crate::models::pca::Pca;
use crate::models::svm::LinearSvm;
use crate::models::tree::DecisionTree;
use crate::models::Classifier;

/// Optional standardization followed by optional PCA, fitted on training rows.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocessor {
    pub standardizer: Option<Standardizer>,
    pub pca: Option<Pca>,
}

impl Preprocessor {
    pub fn fit(rows: &[&[f64]], standardize: bool, pca_components: Option<usize>) -> Result<Self> {
        let standardizer = if standardize { Some(Standardizer::fit(rows)?) } else { None };
        let pca = match pca_components {
            Some(k) => {
                let scaled = Self::scale(standardizer.as_ref(), rows);
                let refs: Vec<&[f64]> = scaled.iter().map(|r| r.as_slice()).collect();
                Some(Pca::fit(&refs, k)?)
            }
            None => None,
        };
        Ok(Self { standardizer, pca })
    }

    fn scale(st: Option<&Standardizer>, rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| st.map_or_else(|| r.to_vec(), |s| s.transform_row(r)))
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        self.standardizer.is_none() && self.pca.is_none()
    }

    /// Output dimension for `input_dim` inputs.
    pub fn output_dim(&self, input_dim: usize) -> usize {
        self.pca.as_ref().map_or(input_dim, |p| p.n_components())
    }

    pub fn apply_row(&self, row: &[f64]) -> Vec<f64> {
        let scaled = self.standardizer.as_ref().map_or_else(|| row.to_vec(), |s| s.transform_row(row));
        match &self.pca {
            Some(p) => p.transform_row(&scaled),
            None => scaled,
        }
    }

    pub fn apply(&self, rows: &[&[f64]]) -> Vec<Vec<f64>> {
        rows.iter().map(|r| self.apply_row(r)).collect()
    }

    pub fn apply_samples(&self, samples: &[WindowSample]) -> Vec<WindowSample> {
        if self.is_identity() {
            return samples.to_vec();
        }
        samples
            .iter()
            .map(|s| WindowSample {
                values: self.apply_row(&s.values),
                ..s.clone()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model_type", content = "model", rename_all = "snake_case")]
pub enum ClassicalModel {
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    Svm(LinearSvm),
}

impl ClassicalModel {
    pub fn model_type(&self) -> &'static str {
        match self {
            ClassicalModel::DecisionTree(_) => "decision_tree",
            ClassicalModel::RandomForest(_) => "random_forest",
            ClassicalModel::Svm(_) => "svm",
        }
    }

    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        match self {
            ClassicalModel::DecisionTree(m) => m.predict(rows),
            ClassicalModel::RandomForest(m) => m.predict(rows),
            ClassicalModel::Svm(m) => m.predict(rows),
        }
    }
}

pub const CLASSICAL_FORMAT: &str = "flowpat-classical";
pub const CLASSICAL_VERSION: u32 = 1;

/// Serialized classical model: preprocessing plus fitted parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassicalDocument {
    pub format: String,
    pub version: u32,
    pub preprocessing: Preprocessor,
    #[serde(flatten)]
    pub model: ClassicalModel,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl ClassicalDocument {
    pub fn new(preprocessing: Preprocessor, model: ClassicalModel, metadata: serde_json::Value) -> Self {
        Self {
            format: CLASSICAL_FORMAT.into(),
            version: CLASSICAL_VERSION,
            preprocessing,
            model,
            metadata,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Self = serde_json::from_str(text)?;
        if doc.format != CLASSICAL_FORMAT {
            return Err(Error::Config(format!("not a classical model document: format '{}'", doc.format)));
        }
        if doc.version != CLASSICAL_VERSION {
            return Err(Error::Config(format!("unsupported classical model version {}", doc.version)));
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

impl Classifier for ClassicalDocument {
    fn predict(&mut self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        if self.preprocessing.is_identity() {
            return self.model.predict(rows);
        }
        let z = self.preprocessing.apply(rows);
        let refs: Vec<&[f64]> = z.iter().map(|r| r.as_slice()).collect();
        self.model.predict(&refs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::tree::TreeConfig;
    use crate::rng::rng_from;

    #[test]
    fn document_round_trip() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, (i * i % 7) as f64, 1.0]).collect();
        let refs: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let y: Vec<usize> = (0..20).map(|i| i % 3).collect();
        let pre = Preprocessor::fit(&refs, true, Some(2)).unwrap();
        let z = pre.apply(&refs);
        let zr: Vec<&[f64]> = z.iter().map(|r| r.as_slice()).collect();
        let tree = DecisionTree::fit(&zr, &y, &TreeConfig::default(), &mut rng_from(0)).unwrap();
        let mut doc = ClassicalDocument::new(pre, ClassicalModel::DecisionTree(tree), serde_json::json!({"k": 1}));
        let text = doc.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["model_type"], "decision_tree");
        assert_eq!(v["version"], 1);
        let mut back = ClassicalDocument::from_json(&text).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.predict(&refs).unwrap(), doc.predict(&refs).unwrap());
    }

    #[test]
    fn rejects_foreign_documents() {
        let bad = r#"{"format":"other","version":1,"preprocessing":{"standardizer":null,"pca":null},"model_type":"svm","model":{"config":{"c":1.0,"epochs":1},"weights":[]}}"#;
        assert!(matches!(ClassicalDocument::from_json(bad), Err(Error::Config(_))));
    }
}
