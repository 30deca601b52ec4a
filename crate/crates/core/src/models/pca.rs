//! Principal component analysis through the SVD of the centred training
//! matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Row-major `[n_components][n_features]`, orthonormal rows.
    pub components: Vec<Vec<f64>>,
    /// Share of total variance per component, non-increasing.
    pub explained_variance_ratio: Vec<f64>,
}

impl Pca {
    pub fn fit(rows: &[&[f64]], n_components: usize) -> Result<Self> {
        let n = rows.len();
        let Some(first) = rows.first() else {
            return Err(Error::EmptyInput("PCA needs at least one row".into()));
        };
        let d = first.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::contract("PCA rows must share one length"));
        }
        if n_components == 0 || n_components > n.min(d) {
            return Err(Error::contract(format!(
                "{n_components} components requested from {n} samples of dimension {d}"
            )));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let centred = DMatrix::from_fn(n, d, |i, j| rows[i][j] - mean[j]);
        let svd = centred.svd(false, true);
        let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not produce V".into()))?;
        let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
        order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
        let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
        let mut components = Vec::with_capacity(n_components);
        let mut ratios = Vec::with_capacity(n_components);
        for &k in order.iter().take(n_components) {
            let mut v: Vec<f64> = vt.row(k).iter().copied().collect();
            // Sign convention: largest-magnitude entry positive.
            let pivot = v.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(0.0);
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            components.push(v);
            let s = svd.singular_values[k];
            ratios.push(if total > 0.0 { s * s / total } else { 0.0 });
        }
        Ok(Self {
            mean,
            components,
            explained_variance_ratio: ratios,
        })
    }

    pub fn n_components(&self) -> usize {
        self.components.len()
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        self.components
            .iter()
            .map(|c| c.iter().zip(row.iter().zip(&self.mean)).map(|(w, (x, m))| w * (x - m)).sum())
            .collect()
    }

    pub fn transform(&self, rows: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if let Some(r) = rows.iter().find(|r| r.len() != self.mean.len()) {
            return Err(Error::contract(format!("expected {} features, got {}", self.mean.len(), r.len())));
        }
        Ok(rows.iter().map(|r| self.transform_row(r)).collect())
    }

    pub fn inverse_transform_row(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (c, zk) in self.components.iter().zip(z) {
            for (xi, w) in x.iter_mut().zip(c) {
                *xi += zk * w;
            }
        }
        x
    }
}
