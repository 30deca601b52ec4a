//! CART classification tree with Gini impurity.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::domain::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeConfig {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    /// Features examined per split; `None` examines all.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        class: usize,
        counts: [u32; NUM_CLASSES],
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub n_features: usize,
    pub nodes: Vec<Node>,
}

/// Majority class; ties go to the lowest code.
pub fn majority(counts: &[u32; NUM_CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

fn gini_weighted(counts: &[u32; NUM_CLASSES], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    // n * gini = n - sum(c^2)/n
    n - sq / n
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

struct Builder<'a> {
    x: &'a [&'a [f64]],
    y: &'a [usize],
    cfg: TreeConfig,
    n_features: usize,
    nodes: Vec<Node>,
    pairs: Vec<(f64, usize)>,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> [u32; NUM_CLASSES] {
        let mut c = [0u32; NUM_CLASSES];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    /// Lowest weighted Gini split on `feature`, if any value boundary exists.
    fn scan(&mut self, idx: &[usize], feature: usize, total: &[u32; NUM_CLASSES], best: &mut Option<Best>) {
        self.pairs.clear();
        self.pairs.extend(idx.iter().map(|&i| (self.x[i][feature], self.y[i])));
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let n = idx.len() as u32;
        let mut left = [0u32; NUM_CLASSES];
        for k in 0..self.pairs.len() - 1 {
            let (v, label) = self.pairs[k];
            left[label] += 1;
            let next = self.pairs[k + 1].0;
            if next <= v {
                continue;
            }
            let nl = k as u32 + 1;
            let mut right = *total;
            for c in 0..NUM_CLASSES {
                right[c] -= left[c];
            }
            let score = gini_weighted(&left, nl) + gini_weighted(&right, n - nl);
            if best.as_ref().is_none_or(|b| score < b.score - 1e-12) {
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                *best = Some(Best {
                    score,
                    feature,
                    threshold,
                });
            }
        }
    }

    fn grow(&mut self, idx: &mut [usize], depth: usize, rng: &mut Rng) -> usize {
        let counts = self.counts(idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: majority(&counts),
            counts,
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || idx.len() < self.cfg.min_samples_split.max(2) || self.cfg.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let d = self.n_features;
        let m = self.cfg.max_features.unwrap_or(d).clamp(1, d);
        let mut best = None;
        if m == d {
            for f in 0..d {
                self.scan(idx, f, &counts, &mut best);
            }
        } else {
            // Draw the whole permutation lazily: examine `m` features, then
            // keep going only while no valid split has been found.
            let perm = sample(rng, d, d).into_vec();
            for (k, &f) in perm.iter().enumerate() {
                if k >= m && best.is_some() {
                    break;
                }
                self.scan(idx, f, &counts, &mut best);
            }
        }
        let Some(b) = best else {
            return id;
        };
        let x = self.x;
        let mut split = 0;
        for k in 0..idx.len() {
            if x[idx[k]][b.feature] <= b.threshold {
                idx.swap(k, split);
                split += 1;
            }
        }
        let (l, r) = idx.split_at_mut(split);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split {
            feature: b.feature,
            threshold: b.threshold,
            left,
            right,
        };
        id
    }
}

pub(crate) fn check_xy(x: &[&[f64]], y: &[usize]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::EmptyInput("no training samples".into()));
    }
    if x.len() != y.len() {
        return Err(Error::contract(format!("{} rows but {} labels", x.len(), y.len())));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::contract("rows must share a positive length"));
    }
    if let Some(l) = y.iter().find(|&&l| l >= NUM_CLASSES) {
        return Err(Error::contract(format!("label {l} out of range")));
    }
    Ok(d)
}

impl DecisionTree {
    pub fn fit(x: &[&[f64]], y: &[usize], cfg: &TreeConfig, rng: &mut Rng) -> Result<Self> {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        Self::fit_indices(x, y, &mut idx, cfg, rng)
    }

    /// Fits on the rows listed in `idx` (repeats allowed, as in a bootstrap).
    pub fn fit_indices(x: &[&[f64]], y: &[usize], idx: &mut [usize], cfg: &TreeConfig, rng: &mut Rng) -> Result<Self> {
        let d = check_xy(x, y)?;
        if idx.is_empty() {
            return Err(Error::EmptyInput("no training samples".into()));
        }
        let mut b = Builder {
            x,
            y,
            cfg: *cfg,
            n_features: d,
            nodes: Vec::new(),
            pairs: Vec::with_capacity(idx.len()),
        };
        b.grow(idx, 0, rng);
        Ok(Self {
            n_features: d,
            nodes: b.nodes,
        })
    }

    pub fn predict_row(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { class, .. } => return *class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, rows: &[&[f64]]) -> Result<Vec<usize>> {
        if let Some(r) = rows.iter().find(|r| r.len() != self.n_features) {
            return Err(Error::contract(format!("expected {} features, got {}", self.n_features, r.len())));
        }
        Ok(rows.iter().map(|r| self.predict_row(r)).collect())
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}
