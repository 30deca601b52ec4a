//! Random forest: bootstrapped CART trees with per-split feature sampling.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::models::tree::{check_xy, DecisionTree, TreeConfig};
use crate::rng::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` means `ceil(sqrt(n_features))`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            features_per_split: None,
            bootstrap: true,
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

/// `ceil(sqrt(d))`; 23 for a 500-sample window.
pub fn default_features_per_split(d: usize) -> usize {
    let mut k = (d as f64).sqrt() as usize;
    while k * k < d {
        k += 1;
    }
    k.max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    /// Tree `t` draws from its own stream derived from `(seed, t)`, so the
    /// result does not depend on the thread count.
    pub fn fit(x: &[&[f64]], y: &[usize], cfg: &ForestConfig, seed: u64) -> Result<Self> {
        let d = check_xy(x, y)?;
        if cfg.n_trees == 0 {
            return Err(Error::Config("forest needs at least one tree".into()));
        }
        let tree_cfg = TreeConfig {
            max_depth: cfg.max_depth,
            min_samples_split: cfg.min_samples_split,
            max_features: Some(cfg.features_per_split.unwrap_or_else(|| default_features_per_split(d))),
        };
        let trees = (0..cfg.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = derived_rng(seed, &[t as u64]);
                let mut idx: Vec<usize> = if cfg.bootstrap {
                    (0..x.len()).map(|_| rng.gen_range(0..x.len())).collect()
                } else {
                    (0..x.len()).collect()
                };
                DecisionTree::fit_indices(x, y, &mut idx, &tree_cfg, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { config: *cfg, trees })
    }

    /// Predictions of every tree, `[tree][sample]`.
    pub fn tree_predictions(&self, rows: &[&[f64]]) -> Result<Vec<Vec<usize>>> {
        self.trees.par_iter().map(|t| t.predict(rows)).collect()
    }

    /// Majority vote; ties go to the lowest class code.
    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        let per_tree = self.tree_predictions(rows)?;
        Ok((0..rows.len())
            .map(|i| {
                let mut votes = [0u32; NUM_CLASSES];
                for p in &per_tree {
                    votes[p[i]] += 1;
                }
                crate::models::tree::majority(&votes)
            })
            .collect())
    }
}
