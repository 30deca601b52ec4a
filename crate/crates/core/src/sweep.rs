//! SENet hyperparameter grid. Each group varies one setting (or the
//! normalization/dropout pair) around the base configuration while all others
//! stay fixed, giving 20 points over five groups.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetSplit;
use crate::error::{Error, Result};
use crate::eval::{EvalReport, ReportMetadata};
use crate::models::SENetConfig;
use crate::pipeline::{run_seeds, ModelKind, ModelSettings, ModelSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepGroup {
    KernelSize,
    Normalization,
    DropoutRate,
    WidthRatio,
    BlockStages,
}

impl SweepGroup {
    pub const ALL: [SweepGroup; 5] = [
        SweepGroup::KernelSize,
        SweepGroup::Normalization,
        SweepGroup::DropoutRate,
        SweepGroup::WidthRatio,
        SweepGroup::BlockStages,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SweepGroup::KernelSize => "kernel_size",
            SweepGroup::Normalization => "normalization",
            SweepGroup::DropoutRate => "dropout_rate",
            SweepGroup::WidthRatio => "width_ratio",
            SweepGroup::BlockStages => "block_stages",
        }
    }
}

impl std::str::FromStr for SweepGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SweepGroup::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep group '{s}'")))
    }
}

/// Accuracy and F1 published for a grid point on the experiment-based split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferencePoint {
    pub accuracy: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub group: SweepGroup,
    /// File-name key such as `kernel_size-16` or `batch_norm-true_dropout-false`.
    pub key: String,
    pub config: SENetConfig,
    pub reference: ReferencePoint,
}

fn r(accuracy: f64, f1: f64) -> ReferencePoint {
    ReferencePoint { accuracy, f1 }
}

/// Points of the given groups, in group order then published column order.
pub fn grid_for(base: &SENetConfig, groups: &[SweepGroup]) -> Vec<GridPoint> {
    let mut out = Vec::new();
    for &group in groups {
        let point = |key: String, config: SENetConfig, reference| GridPoint {
            group,
            key,
            config,
            reference,
        };
        match group {
            SweepGroup::KernelSize => {
                for (k, refp) in [(16, r(0.821, 0.809)), (8, r(0.796, 0.786)), (5, r(0.821, 0.816)), (3, r(0.749, 0.754))] {
                    out.push(point(format!("kernel_size-{k}"), SENetConfig { kernel_size: k, ..base.clone() }, refp));
                }
            }
            SweepGroup::Normalization => {
                for (bn, dropout, refp) in [
                    (false, true, r(0.756, 0.701)),
                    (true, false, r(0.730, 0.717)),
                    (false, false, r(0.804, 0.797)),
                    (true, true, r(0.821, 0.816)),
                ] {
                    let cfg = SENetConfig {
                        use_batch_norm: bn,
                        use_dropout: dropout,
                        ..base.clone()
                    };
                    out.push(point(format!("batch_norm-{bn}_dropout-{dropout}"), cfg, refp));
                }
            }
            SweepGroup::DropoutRate => {
                for (rate, refp) in [(0.5, r(0.821, 0.816)), (0.4, r(0.831, 0.827)), (0.3, r(0.849, 0.845)), (0.2, r(0.834, 0.835))] {
                    let cfg = SENetConfig {
                        dropout_rate: rate,
                        use_dropout: true,
                        ..base.clone()
                    };
                    out.push(point(format!("dropout_rate-{rate}"), cfg, refp));
                }
            }
            SweepGroup::WidthRatio => {
                for (w, refp) in [(1, r(0.722, 0.700)), (2, r(0.813, 0.807)), (4, r(0.821, 0.816)), (8, r(0.717, 0.680))] {
                    out.push(point(format!("width_ratio-{w}"), SENetConfig { width_ratio: w, ..base.clone() }, refp));
                }
            }
            SweepGroup::BlockStages => {
                for (n, refp) in [(2, r(0.750, 0.764)), (3, r(0.821, 0.816)), (4, r(0.850, 0.847)), (5, r(0.834, 0.831))] {
                    out.push(point(format!("block_stages-{n}"), SENetConfig { block_stages: n, ..base.clone() }, refp));
                }
            }
        }
    }
    out
}

/// All 20 points.
pub fn grid(base: &SENetConfig) -> Vec<GridPoint> {
    grid_for(base, &SweepGroup::ALL)
}

/// One grid point's outcome, as written to `sweep_<key>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub point: GridPoint,
    pub report: EvalReport,
}

pub fn record_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("sweep_{key}.json"))
}

/// Trains and evaluates every point over `seeds`, writing one report per
/// point plus `sweep_summary.csv`. Returns the records in grid order.
pub fn run_sweep(
    points: &[GridPoint],
    settings: &ModelSettings,
    split: &DatasetSplit,
    seeds: &[u64],
    metadata: &ReportMetadata,
    out_dir: &Path,
) -> Result<Vec<SweepRecord>> {
    if seeds.is_empty() {
        return Err(Error::Config("sweep needs at least one seed".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let spec = ModelSpec {
        kind: ModelKind::Senet1d,
        pca: false,
    };
    let mut records = Vec::with_capacity(points.len());
    for p in points {
        log::info!("sweep point {}", p.key);
        let point_settings = ModelSettings {
            senet: p.config.clone(),
            ..settings.clone()
        };
        let mut meta = metadata.clone();
        meta.notes.push(format!("sweep point {}", p.key));
        let result = run_seeds(spec, &point_settings, split, seeds, &meta)?;
        let record = SweepRecord {
            point: p.clone(),
            report: result.report,
        };
        let path = record_path(out_dir, &p.key);
        let text = serde_json::to_string_pretty(&record)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        records.push(record);
    }
    let path = out_dir.join("sweep_summary.csv");
    std::fs::write(&path, summary_csv(&records)).map_err(|e| Error::io(&path, e))?;
    Ok(records)
}

pub fn summary_csv(records: &[SweepRecord]) -> String {
    let mut s = String::from("group,key,accuracy,macro_f1,reference_accuracy,reference_f1\n");
    for rec in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            rec.point.group.name(),
            rec.point.key,
            rec.report.accuracy,
            rec.report.macro_f1,
            rec.point.reference.accuracy,
            rec.point.reference.f1
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn twenty_distinct_points_each_one_group_from_base() {
        let base = SENetConfig::default();
        let g = grid(&base);
        assert_eq!(g.len(), 20);
        let keys: BTreeSet<&str> = g.iter().map(|p| p.key.as_str()).collect();
        assert_eq!(keys.len(), 20);
        for p in &g {
            let c = &p.config;
            let diffs = [
                c.kernel_size != base.kernel_size,
                c.use_batch_norm != base.use_batch_norm || c.use_dropout != base.use_dropout,
                c.dropout_rate != base.dropout_rate,
                c.width_ratio != base.width_ratio,
                c.block_stages != base.block_stages,
            ];
            let changed: Vec<usize> = (0..5).filter(|&i| diffs[i]).collect();
            assert!(changed.len() <= 1, "{}", p.key);
            if let Some(&i) = changed.first() {
                assert_eq!(SweepGroup::ALL[i], p.group, "{}", p.key);
            }
            c.validate().unwrap();
        }
    }

    #[test]
    fn kernel_group_keys() {
        let keys: Vec<String> = grid_for(&SENetConfig::default(), &[SweepGroup::KernelSize])
            .into_iter()
            .map(|p| p.key)
            .collect();
        assert_eq!(keys, ["kernel_size-16", "kernel_size-8", "kernel_size-5", "kernel_size-3"]);
        assert_eq!("width_ratio".parse::<SweepGroup>().unwrap(), SweepGroup::WidthRatio);
        assert!("depth".parse::<SweepGroup>().is_err());
    }
}
