//! Balanced sliding-window datasets and the two split protocols.
//!
//! * `ExperimentBased`: every experiment's timeline is cut at
//!   `floor(0.8 * len)`; training windows come from before the cut, evaluation
//!   windows from after it, and no window straddles it.
//! * `PatternBased`: whole experiments are held out, `ceil(0.2 * n)` per
//!   pattern.
//!
//! Window starts are drawn uniformly with replacement, so quotas larger than
//! the number of distinct starts are legal; repeated starts are counted.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{CapacitanceTrace, Experiment, FlowPattern, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::rng::derived_rng;

pub const WINDOW_LEN: usize = 500;

/// Share of each timeline (or of each pattern's experiments) used for training.
pub const TRAIN_FRACTION: f64 = 0.8;

const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitProtocol {
    ExperimentBased,
    PatternBased,
}

impl fmt::Display for SplitProtocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitProtocol::ExperimentBased => "experiment_based",
            SplitProtocol::PatternBased => "pattern_based",
        })
    }
}

impl FromStr for SplitProtocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "experiment_based" | "experiment" => Ok(SplitProtocol::ExperimentBased),
            "pattern_based" | "pattern" => Ok(SplitProtocol::PatternBased),
            other => Err(Error::Config(format!("unknown split protocol '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub values: Vec<f64>,
    pub label: FlowPattern,
    pub source_experiment: String,
    pub start_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<WindowSample>,
    pub eval: Vec<WindowSample>,
    pub protocol: SplitProtocol,
    pub seed: u64,
    pub window_len: usize,
    pub train_per_pattern: usize,
    pub eval_per_pattern: usize,
    /// Windows whose `(experiment, start)` already occurred in the same
    /// partition.
    pub duplicate_starts: usize,
    /// Experiments assigned to each partition, sorted.
    pub train_experiments: Vec<String>,
    pub eval_experiments: Vec<String>,
}

/// Reproducibility record for a split; never contains window values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitManifest {
    pub protocol: SplitProtocol,
    pub seed: u64,
    pub window_len: usize,
    pub train_per_pattern: usize,
    pub eval_per_pattern: usize,
    pub train_fraction: f64,
    pub n_train: usize,
    pub n_eval: usize,
    pub duplicate_starts: usize,
    pub train_experiments: Vec<String>,
    pub eval_experiments: Vec<String>,
    /// SHA-256 over every sample's label, source and start, train then eval.
    pub content_hash: String,
    #[serde(default)]
    pub config_hash: Option<String>,
}

/// The `start..start + len` slice of `trace`.
pub fn window_at(trace: &CapacitanceTrace, start_index: usize, window_len: usize) -> Result<&[f64]> {
    let end = start_index.checked_add(window_len);
    match end {
        Some(end) if end <= trace.len() => Ok(&trace.values()[start_index..end]),
        _ => Err(Error::contract(format!(
            "window [{start_index}, {start_index}+{window_len}) exceeds trace length {}",
            trace.len()
        ))),
    }
}

/// Timeline index where the evaluation region of an experiment begins.
pub fn timeline_boundary(len: usize) -> usize {
    (len as f64 * TRAIN_FRACTION).floor() as usize
}

/// Number of held-out experiments for a pattern with `n` experiments.
pub fn held_out_count(n: usize) -> usize {
    (n as f64 * (1.0 - TRAIN_FRACTION) - 1e-9).ceil() as usize
}

/// A sampling region: experiment plus the admissible window-start range.
struct Region<'a> {
    exp: &'a Experiment,
    first: usize,
    last: usize,
}

const TRAIN_STREAM: u64 = 1;
const EVAL_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

pub fn build_split(
    experiments: &[Experiment],
    protocol: SplitProtocol,
    train_per_pattern: usize,
    eval_per_pattern: usize,
    window_len: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    if window_len == 0 {
        return Err(Error::contract("window length must be positive"));
    }
    let mut by_pattern: BTreeMap<usize, Vec<&Experiment>> = BTreeMap::new();
    for e in experiments {
        by_pattern.entry(e.label.code()).or_default().push(e);
    }
    let missing: Vec<String> = FlowPattern::ALL
        .iter()
        .filter(|p| !by_pattern.contains_key(&p.code()))
        .map(|p| p.name().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Coverage(format!("no experiments for {}", missing.join(", "))));
    }

    let mut train = Vec::with_capacity(train_per_pattern * NUM_CLASSES);
    let mut eval = Vec::with_capacity(eval_per_pattern * NUM_CLASSES);
    let mut duplicate_starts = 0;
    let mut train_ids = Vec::new();
    let mut eval_ids = Vec::new();
    for pattern in FlowPattern::ALL {
        let exps = &by_pattern[&pattern.code()];
        let (train_regions, eval_regions) = match protocol {
            SplitProtocol::ExperimentBased => timeline_regions(exps, window_len)?,
            SplitProtocol::PatternBased => held_out_regions(pattern, exps, window_len, seed)?,
        };
        train_ids.extend(train_regions.iter().map(|r| r.exp.id.clone()));
        eval_ids.extend(eval_regions.iter().map(|r| r.exp.id.clone()));
        for (regions, quota, stream, out) in [
            (&train_regions, train_per_pattern, TRAIN_STREAM, &mut train),
            (&eval_regions, eval_per_pattern, EVAL_STREAM, &mut eval),
        ] {
            let mut rng = derived_rng(seed, &[pattern.code() as u64, stream]);
            let mut seen = HashSet::new();
            for _ in 0..quota {
                let r = &regions[rng.gen_range(0..regions.len())];
                let start = rng.gen_range(r.first..=r.last);
                if !seen.insert((r.exp.id.as_str(), start)) {
                    duplicate_starts += 1;
                }
                out.push(WindowSample {
                    values: window_at(&r.exp.trace, start, window_len)?.to_vec(),
                    label: pattern,
                    source_experiment: r.exp.id.clone(),
                    start_index: start,
                });
            }
        }
    }
    if duplicate_starts > 0 {
        log::info!("split drew {duplicate_starts} repeated window starts");
    }
    Ok(DatasetSplit {
        train,
        eval,
        protocol,
        seed,
        window_len,
        train_per_pattern,
        eval_per_pattern,
        duplicate_starts,
        train_experiments: sorted(train_ids),
        eval_experiments: sorted(eval_ids),
    })
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

type Regions<'a> = (Vec<Region<'a>>, Vec<Region<'a>>);

fn timeline_regions<'a>(exps: &[&'a Experiment], window_len: usize) -> Result<Regions<'a>> {
    let mut train = Vec::new();
    let mut eval = Vec::new();
    for e in exps {
        let len = e.trace.len();
        let b = timeline_boundary(len);
        let shortest = b.min(len - b);
        if shortest < window_len {
            return Err(Error::InsufficientData {
                required: window_len,
                actual: shortest,
            });
        }
        train.push(Region {
            exp: e,
            first: 0,
            last: b - window_len,
        });
        eval.push(Region {
            exp: e,
            first: b,
            last: len - window_len,
        });
    }
    Ok((train, eval))
}

fn held_out_regions<'a>(
    pattern: FlowPattern,
    exps: &[&'a Experiment],
    window_len: usize,
    seed: u64,
) -> Result<Regions<'a>> {
    if exps.len() < 2 {
        return Err(Error::Protocol(format!(
            "{pattern} has {} experiment(s); holding one out needs at least 2",
            exps.len()
        )));
    }
    let mut order: Vec<&Experiment> = exps.to_vec();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    order.shuffle(&mut derived_rng(seed, &[pattern.code() as u64, SHUFFLE_STREAM]));
    let n_eval = held_out_count(order.len());
    let mut regions = Vec::with_capacity(order.len());
    for e in order {
        if e.trace.len() < window_len {
            return Err(Error::InsufficientData {
                required: window_len,
                actual: e.trace.len(),
            });
        }
        regions.push(Region {
            exp: e,
            first: 0,
            last: e.trace.len() - window_len,
        });
    }
    let train = regions.split_off(n_eval);
    Ok((train, regions))
}

impl DatasetSplit {
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for (tag, part) in [("train", &self.train), ("eval", &self.eval)] {
            h.update(tag.as_bytes());
            for s in part {
                h.update(format!("{},{},{};", s.label.code(), s.source_experiment, s.start_index).as_bytes());
            }
        }
        format!("{:x}", h.finalize())
    }

    pub fn manifest(&self, config_hash: Option<String>) -> SplitManifest {
        SplitManifest {
            protocol: self.protocol,
            seed: self.seed,
            window_len: self.window_len,
            train_per_pattern: self.train_per_pattern,
            eval_per_pattern: self.eval_per_pattern,
            train_fraction: TRAIN_FRACTION,
            n_train: self.train.len(),
            n_eval: self.eval.len(),
            duplicate_starts: self.duplicate_starts,
            train_experiments: self.train_experiments.clone(),
            eval_experiments: self.eval_experiments.clone(),
            content_hash: self.content_hash(),
            config_hash,
        }
    }
}

pub fn rows(samples: &[WindowSample]) -> Vec<&[f64]> {
    samples.iter().map(|s| s.values.as_slice()).collect()
}

pub fn labels(samples: &[WindowSample]) -> Vec<usize> {
    samples.iter().map(|s| s.label.code()).collect()
}

/// Per-dimension affine scaling fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Population mean and standard deviation per column, std floored.
    pub fn fit(rows: &[&[f64]]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::EmptyInput("cannot standardize an empty training set".into()));
        };
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, samples: &[WindowSample]) -> Vec<WindowSample> {
        samples
            .iter()
            .map(|s| WindowSample {
                values: self.transform_row(&s.values),
                ..s.clone()
            })
            .collect()
    }
}

/// Standardizes both partitions with statistics of the training partition.
pub fn standardize(split: &DatasetSplit) -> Result<(DatasetSplit, Vec<f64>, Vec<f64>)> {
    let st = Standardizer::fit(&rows(&split.train))?;
    let out = DatasetSplit {
        train: st.transform(&split.train),
        eval: st.transform(&split.eval),
        ..split.clone()
    };
    Ok((out, st.mean, st.std))
}

fn csv_header(window_len: usize) -> String {
    let mut h = String::from("label,source_experiment,start_index");
    for i in 0..window_len {
        h.push_str(&format!(",v{i}"));
    }
    h
}

pub fn write_samples_csv(path: &Path, samples: &[WindowSample], window_len: usize) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{}", csv_header(window_len)).map_err(io)?;
    for s in samples {
        write!(w, "{},{},{}", s.label.name(), s.source_experiment, s.start_index).map_err(io)?;
        for v in &s.values {
            write!(w, ",{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_samples_csv(path: &Path) -> Result<Vec<WindowSample>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut width = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if i == 0 {
            width = Some(line.split(',').count());
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if Some(fields.len()) != width || fields.len() < 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected {} fields, found {}", width.unwrap_or(0), fields.len()),
            });
        }
        let parse_err = |message: String| Error::Parse { line: lineno, message };
        let label: FlowPattern = fields[0].parse().map_err(|_| parse_err(format!("unknown label '{}'", fields[0])))?;
        let start_index = fields[2]
            .parse()
            .map_err(|_| parse_err(format!("bad start index '{}'", fields[2])))?;
        let values = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(format!("bad value '{f}'"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(WindowSample {
            values,
            label,
            source_experiment: fields[1].to_string(),
            start_index,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(n: usize) -> CapacitanceTrace {
        CapacitanceTrace::new_unclamped(100.0, (1..=n).map(|v| v as f64).collect()).unwrap()
    }

    fn corpus(per_pattern: usize, len: usize) -> Vec<Experiment> {
        FlowPattern::ALL
            .iter()
            .flat_map(|&p| {
                (0..per_pattern).map(move |i| Experiment {
                    id: format!("{p}-{i}"),
                    inclination_deg: 0.0,
                    u_gs_mps: 1.0,
                    u_os_mps: 1.0,
                    label: p,
                    trace: ramp(len),
                })
            })
            .collect()
    }

    #[test]
    fn window_slices() {
        let t = ramp(1000);
        assert_eq!(window_at(&t, 0, 500).unwrap(), &t.values()[..500]);
        assert_eq!(window_at(&t, 500, 500).unwrap()[0], 501.0);
        assert_eq!(window_at(&t, 500, 500).unwrap()[499], 1000.0);
        assert!(matches!(window_at(&t, 501, 500), Err(Error::Contract(_))));
    }

    #[test]
    fn held_out_counts() {
        assert_eq!(held_out_count(5), 1);
        assert_eq!(held_out_count(6), 2);
        assert_eq!(held_out_count(20), 4);
        assert_eq!(held_out_count(2), 1);
    }

    #[test]
    fn quotas_are_exact() {
        let c = corpus(3, 3000);
        let s = build_split(&c, SplitProtocol::ExperimentBased, 20, 5, 500, 1).unwrap();
        assert_eq!((s.train.len(), s.eval.len()), (140, 35));
        for p in FlowPattern::ALL {
            assert_eq!(s.train.iter().filter(|w| w.label == p).count(), 20);
        }
    }

    #[test]
    fn values_match_their_start() {
        let c = corpus(2, 2500);
        let s = build_split(&c, SplitProtocol::PatternBased, 10, 10, 500, 9).unwrap();
        for w in s.train.iter().chain(&s.eval) {
            assert_eq!(w.values[0], (w.start_index + 1) as f64);
            assert_eq!(w.values.len(), 500);
        }
    }

    #[test]
    fn five_experiments_hold_out_one() {
        let c = corpus(5, 1000);
        let s = build_split(&c, SplitProtocol::PatternBased, 10, 10, 500, 3).unwrap();
        let m = s.manifest(None);
        let slug = |ids: &[String]| ids.iter().filter(|i| i.starts_with("Slug-")).count();
        assert_eq!(slug(&m.eval_experiments), 1);
        assert_eq!(slug(&m.train_experiments), 4);
    }

    #[test]
    fn coverage_and_protocol_errors() {
        let c: Vec<_> = corpus(2, 3000).into_iter().filter(|e| e.label != FlowPattern::Annular).collect();
        assert!(matches!(
            build_split(&c, SplitProtocol::ExperimentBased, 1, 1, 500, 0),
            Err(Error::Coverage(_))
        ));
        let c = corpus(1, 3000);
        assert!(matches!(
            build_split(&c, SplitProtocol::PatternBased, 1, 1, 500, 0),
            Err(Error::Protocol(_))
        ));
        assert!(build_split(&c, SplitProtocol::ExperimentBased, 1, 1, 500, 0).is_ok());
    }

    #[test]
    fn short_eval_region_is_rejected() {
        let c = corpus(1, 2000);
        assert!(matches!(
            build_split(&c, SplitProtocol::ExperimentBased, 1, 1, 500, 0),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn standardization_uses_train_statistics() {
        let c = corpus(2, 3000);
        let s = build_split(&c, SplitProtocol::ExperimentBased, 30, 10, 500, 4).unwrap();
        let (z, mean, std) = standardize(&s).unwrap();
        let n = z.train.len() as f64;
        for d in [0, 250, 499] {
            let m: f64 = z.train.iter().map(|w| w.values[d]).sum::<f64>() / n;
            let v: f64 = z.train.iter().map(|w| (w.values[d] - m).powi(2)).sum::<f64>() / n;
            assert!(m.abs() < 1e-9);
            assert!((v.sqrt() - 1.0).abs() < 1e-6);
        }
        let w = &s.eval[0];
        assert_eq!(z.eval[0].values[7], (w.values[7] - mean[7]) / std[7]);
    }

    #[test]
    fn constant_dimension_maps_to_zero() {
        let r: Vec<Vec<f64>> = (0..4).map(|i| vec![2.0, i as f64]).collect();
        let refs: Vec<&[f64]> = r.iter().map(|v| v.as_slice()).collect();
        let st = Standardizer::fit(&refs).unwrap();
        assert_eq!(st.std[0], STD_FLOOR);
        assert_eq!(st.transform_row(&r[0])[0], 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let c = corpus(2, 3000);
        let s = build_split(&c, SplitProtocol::ExperimentBased, 2, 1, 500, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("train.csv");
        write_samples_csv(&path, &s.train, 500).unwrap();
        assert_eq!(read_samples_csv(&path).unwrap(), s.train);
    }

    #[test]
    fn protocol_names_parse() {
        assert_eq!("pattern".parse::<SplitProtocol>().unwrap(), SplitProtocol::PatternBased);
        assert_eq!(
            SplitProtocol::ExperimentBased.to_string().parse::<SplitProtocol>().unwrap(),
            SplitProtocol::ExperimentBased
        );
        assert!("random".parse::<SplitProtocol>().is_err());
    }
}
