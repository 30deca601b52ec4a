//! One-vs-rest linear SVM trained with Pegasos-style subgradient steps on
//! `lambda/2 |w|^2 + mean(hinge)`, `lambda = 1 / (C n)`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::models::neural::argmax;
use crate::models::tree::check_xy;
use crate::rng::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 20 }
    }
}

/// Per-class weights with the bias stored as the last entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub config: SvmConfig,
    pub weights: Vec<Vec<f64>>,
}

impl LinearSvm {
    /// Expects standardized rows. The returned weights are the average of the
    /// iterates over the final epoch.
    pub fn fit(x: &[&[f64]], y: &[usize], cfg: &SvmConfig, seed: u64) -> Result<Self> {
        let d = check_xy(x, y)?;
        if !(cfg.c > 0.0) || cfg.epochs == 0 {
            return Err(Error::Config("SVM needs C > 0 and at least one epoch".into()));
        }
        let n = x.len();
        let lambda = 1.0 / (cfg.c * n as f64);
        let mut w = vec![vec![0.0; d + 1]; NUM_CLASSES];
        let mut avg = vec![vec![0.0; d + 1]; NUM_CLASSES];
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng_from(seed);
        let mut t = 0u64;
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            let last = epoch + 1 == cfg.epochs;
            for &i in &order {
                t += 1;
                let eta = 1.0 / (lambda * t as f64);
                let shrink = 1.0 - eta * lambda;
                let row = x[i];
                for (k, wk) in w.iter_mut().enumerate() {
                    let target = if y[i] == k { 1.0 } else { -1.0 };
                    let margin = target * (dot(wk, row) + wk[d]);
                    wk.iter_mut().for_each(|v| *v *= shrink);
                    if margin < 1.0 {
                        for (v, xi) in wk.iter_mut().zip(row) {
                            *v += eta * target * xi;
                        }
                        wk[d] += eta * target;
                    }
                    // Projection onto the ball that contains the optimum.
                    let norm = wk.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let radius = 1.0 / lambda.sqrt();
                    if norm > radius {
                        let s = radius / norm;
                        wk.iter_mut().for_each(|v| *v *= s);
                    }
                    if last {
                        for (a, v) in avg[k].iter_mut().zip(wk.iter()) {
                            *a += v;
                        }
                    }
                }
            }
        }
        for a in &mut avg {
            a.iter_mut().for_each(|v| *v /= n as f64);
        }
        Ok(Self {
            config: *cfg,
            weights: avg,
        })
    }

    pub fn margins(&self, row: &[f64]) -> [f64; NUM_CLASSES] {
        let d = row.len();
        let mut m = [0.0; NUM_CLASSES];
        for (mk, wk) in m.iter_mut().zip(&self.weights) {
            *mk = dot(wk, row) + wk[d];
        }
        m
    }

    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        let d = self.weights[0].len() - 1;
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::contract(format!("expected {d} features, got {}", r.len())));
        }
        Ok(rows.iter().map(|r| argmax(&self.margins(r))).collect())
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}
