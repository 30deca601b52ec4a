//! Independent oracles shared by the topic tests and the acceptance runner.
//! Each returns a one-line summary on success and the first discrepancy on
//! failure.

use std::collections::{BTreeMap, BTreeSet};

use flowpat_core::dataset::{build_split, DatasetSplit, SplitProtocol};
use flowpat_core::domain::{FlowPattern, NUM_CLASSES};
use flowpat_core::dsp::{fft, welch_psd_values, WelchParams};
use flowpat_core::eval::EvalReport;
use flowpat_core::models::{DecisionTree, Pca, TreeConfig};
use flowpat_core::nn::kernels::softmax_rows;
use flowpat_core::nn::{Tape, Tensor};
use flowpat_core::rng::{rng_from, Rng};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;

use super::ramp_experiment;

pub type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn naive_dft(x: &[Complex64], inverse: bool) -> Vec<Complex64> {
    let n = x.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n)
        .map(|k| {
            let s: Complex64 = x
                .iter()
                .enumerate()
                .map(|(t, v)| v * Complex64::from_polar(1.0, sign * 2.0 * std::f64::consts::PI * (k * t % n) as f64 / n as f64))
                .sum();
            if inverse {
                s / n as f64
            } else {
                s
            }
        })
        .collect()
}

/// FFT against the quadratic DFT, plus the inverse round trip.
pub fn fft_oracle(inputs_per_length: usize) -> Check {
    let mut rng = rng_from(0xff7);
    let (mut worst_dft, mut worst_trip): (f64, f64) = (0.0, 0.0);
    for n in [8usize, 64, 256] {
        for _ in 0..inputs_per_length {
            let x: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let fast = fft(&x, false).map_err(|e| e.to_string())?;
            let slow = naive_dft(&x, false);
            let back = fft(&fast, true).map_err(|e| e.to_string())?;
            for i in 0..n {
                worst_dft = worst_dft.max((fast[i] - slow[i]).norm());
                worst_trip = worst_trip.max((back[i] - x[i]).norm());
            }
        }
    }
    ensure(worst_dft < 1e-9 && worst_trip < 1e-9, || {
        format!("max |fft - dft| = {worst_dft:.2e}, max round-trip error = {worst_trip:.2e}")
    })?;
    Ok(format!(
        "{} inputs, max |fft - dft| = {worst_dft:.2e}, round trip {worst_trip:.2e}",
        3 * inputs_per_length
    ))
}

/// Segment count, sine peak location and white-noise Parseval check.
pub fn welch_oracle(noise_seeds: u64) -> Check {
    let params = WelchParams::default();
    ensure(params.segment_count() == 31, || format!("{} segments over 8192 points", params.segment_count()))?;

    let fs = 100.0;
    let sine: Vec<f64> = (0..8192).map(|i| (2.0 * std::f64::consts::PI * 10.0 * i as f64 / fs).sin()).collect();
    let s = welch_psd_values(&sine, fs, &params).map_err(|e| e.to_string())?;
    let peak = s.peak_frequency();
    ensure((peak - 10.0).abs() <= s.resolution_hz, || format!("sine peak at {peak} Hz"))?;

    let mut worst: f64 = 0.0;
    for seed in 0..noise_seeds {
        let mut rng = rng_from(0x7e1c + seed);
        let x: Vec<f64> = (0..8192).map(|_| rng.sample(StandardNormal)).collect();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64;
        let total = welch_psd_values(&x, fs, &params).map_err(|e| e.to_string())?.total_power();
        worst = worst.max((total / var - 1.0).abs());
    }
    ensure(worst <= 0.10, || format!("white-noise power off by {:.1}%", 100.0 * worst))?;
    Ok(format!(
        "31 segments, sine peak {peak:.3} Hz (bin {:.4} Hz), worst Parseval deviation {:.2}% over {noise_seeds} seeds",
        s.resolution_hz,
        100.0 * worst
    ))
}

/// Uniform-logit loss and the closed-form logit gradient.
pub fn cross_entropy_oracle(batches: u64) -> Check {
    let mut tape = Tape::new();
    let z = tape.leaf(Tensor::zeros(&[5, NUM_CLASSES]));
    let loss = tape.cross_entropy(z, &[0, 1, 2, 3, 6]).map_err(|e| e.to_string())?;
    let l = tape.value(loss).item();
    let uniform_err = (l - (NUM_CLASSES as f64).ln()).abs();
    ensure(uniform_err < 1e-9, || format!("uniform loss {l} vs ln 7"))?;

    let mut worst: f64 = 0.0;
    for seed in 0..batches {
        let mut rng = rng_from(0xce + seed);
        let n = rng.gen_range(1..33);
        let logits: Vec<f64> = (0..n * NUM_CLASSES).map(|_| rng.gen_range(-6.0..6.0)).collect();
        let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..NUM_CLASSES)).collect();
        let mut tape = Tape::new();
        let z = tape.leaf(Tensor::new(&[n, NUM_CLASSES], logits.clone()).unwrap());
        let loss = tape.cross_entropy(z, &targets).map_err(|e| e.to_string())?;
        let grads = tape.backward(loss);
        let g = grads.wrt(z).ok_or("no logit gradient")?;
        let p = softmax_rows(&logits, NUM_CLASSES);
        for i in 0..n {
            for c in 0..NUM_CLASSES {
                let onehot = if targets[i] == c { 1.0 } else { 0.0 };
                let expect = (p[i * NUM_CLASSES + c] - onehot) / n as f64;
                worst = worst.max((g.data()[i * NUM_CLASSES + c] - expect).abs());
            }
        }
    }
    ensure(worst < 1e-10, || format!("gradient deviates by {worst:.2e}"))?;
    Ok(format!("|L(uniform) - ln 7| = {uniform_err:.1e}, max gradient deviation {worst:.1e} over {batches} batches"))
}

/// A random ramp corpus: every pattern present, trace values encode their
/// own sample index.
fn random_corpus(rng: &mut Rng, window_len: usize, min_per_pattern: usize) -> Vec<flowpat_core::domain::Experiment> {
    let mut out = Vec::new();
    for p in FlowPattern::ALL {
        for j in 0..rng.gen_range(min_per_pattern..min_per_pattern + 4) {
            let len = rng.gen_range(5 * window_len + 5..20 * window_len);
            let offset = 1e6 * (out.len() + 1) as f64;
            out.push(ramp_experiment(&format!("{}-{j}", p.name()), p, len, offset));
        }
    }
    out
}

fn check_split(split: &DatasetSplit, corpus: &[flowpat_core::domain::Experiment], train_q: usize, eval_q: usize) -> Result<(), String> {
    let by_id: BTreeMap<&str, &flowpat_core::domain::Experiment> = corpus.iter().map(|e| (e.id.as_str(), e)).collect();
    let d = split.window_len;
    for (part, samples, quota) in [("train", &split.train, train_q), ("eval", &split.eval, eval_q)] {
        let mut counts = [0usize; NUM_CLASSES];
        for s in samples {
            counts[s.label.code()] += 1;
            let e = by_id.get(s.source_experiment.as_str()).ok_or_else(|| format!("unknown source {}", s.source_experiment))?;
            ensure(e.label == s.label, || format!("{part} window labelled {} from a {} experiment", s.label, e.label))?;
            ensure(s.values.len() == d, || format!("{part} window of length {}", s.values.len()))?;
            let first = s.values[0] - e.trace.values()[0];
            ensure(first == s.start_index as f64, || format!("{part} window content starts at {first}, recorded {}", s.start_index))?;
            if split.protocol == SplitProtocol::ExperimentBased {
                let boundary = e.trace.len() * 4 / 5;
                let leak = match part {
                    "train" => s.start_index + d > boundary,
                    _ => s.start_index < boundary || s.start_index + d > e.trace.len(),
                };
                ensure(!leak, || format!("{part} window [{}, {}) crosses boundary {boundary} of {}", s.start_index, s.start_index + d, e.id))?;
            }
        }
        ensure(counts.iter().all(|&c| c == quota), || format!("{part} counts {counts:?}, quota {quota}"))?;
    }
    if split.protocol == SplitProtocol::PatternBased {
        let train: BTreeSet<&str> = split.train.iter().map(|s| s.source_experiment.as_str()).collect();
        let eval: BTreeSet<&str> = split.eval.iter().map(|s| s.source_experiment.as_str()).collect();
        ensure(train.is_disjoint(&eval), || "an experiment feeds both partitions".to_string())?;
        let assigned_train: BTreeSet<&str> = split.train_experiments.iter().map(String::as_str).collect();
        let assigned_eval: BTreeSet<&str> = split.eval_experiments.iter().map(String::as_str).collect();
        ensure(assigned_train.is_disjoint(&assigned_eval), || "assigned experiment lists overlap".to_string())?;
        ensure(train.is_subset(&assigned_train) && eval.is_subset(&assigned_eval), || "window drawn from an unassigned experiment".to_string())?;
        for p in FlowPattern::ALL {
            let n = corpus.iter().filter(|e| e.label == p).count();
            let held = split.eval_experiments.iter().filter(|id| by_id[id.as_str()].label == p).count();
            let expect = (n * 2).div_ceil(10);
            ensure(held == expect, || format!("{p}: {held} of {n} experiments held out, expected {expect}"))?;
        }
    }
    Ok(())
}

/// Randomized split trials: leakage, exact quotas and seed determinism under
/// both protocols.
pub fn split_trials(trials: u64) -> Check {
    for t in 0..trials {
        let mut rng = rng_from(0x5b1 + t);
        let protocol = if t % 2 == 0 { SplitProtocol::ExperimentBased } else { SplitProtocol::PatternBased };
        let d = rng.gen_range(4..40);
        let corpus = random_corpus(&mut rng, d, 2);
        let (tq, eq) = (rng.gen_range(1..30), rng.gen_range(1..10));
        let seed = rng.gen();
        let a = build_split(&corpus, protocol, tq, eq, d, seed).map_err(|e| format!("trial {t}: {e}"))?;
        check_split(&a, &corpus, tq, eq).map_err(|e| format!("trial {t} ({protocol}): {e}"))?;
        let b = build_split(&corpus, protocol, tq, eq, d, seed).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("trial {t}: same seed gave a different split"))?;
    }
    Ok(format!("{trials} trials, both protocols, no leakage, exact quotas, deterministic"))
}

struct Counted {
    tp: u64,
    fp: u64,
    fn_: u64,
}

/// `(support, precision, recall, f1)` for one class.
type ClassRow = (u64, f64, f64, f64);

/// Recomputes every metric by walking the prediction pairs directly:
/// accuracy, per-class rows, macro F1 and weighted F1.
fn brute_force(truth: &[usize], pred: &[usize]) -> (f64, Vec<ClassRow>, f64, f64) {
    let mut counted: Vec<Counted> = (0..NUM_CLASSES).map(|_| Counted { tp: 0, fp: 0, fn_: 0 }).collect();
    let mut correct = 0u64;
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            counted[t].tp += 1;
            correct += 1;
        } else {
            counted[p].fp += 1;
            counted[t].fn_ += 1;
        }
    }
    let per: Vec<ClassRow> = counted
        .iter()
        .map(|c| {
            let precision = if c.tp + c.fp == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fp) as f64 };
            let recall = if c.tp + c.fn_ == 0 { 0.0 } else { c.tp as f64 / (c.tp + c.fn_) as f64 };
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            (c.tp + c.fn_, precision, recall, f1)
        })
        .collect();
    let macro_f1 = per.iter().map(|x| x.3).sum::<f64>() / NUM_CLASSES as f64;
    let weighted = per.iter().map(|x| x.3 * x.0 as f64).sum::<f64>() / truth.len() as f64;
    (correct as f64 / truth.len() as f64, per, macro_f1, weighted)
}

fn compare(report: &EvalReport, truth: &[usize], pred: &[usize]) -> Result<(), String> {
    let (acc, per, macro_f1, weighted) = brute_force(truth, pred);
    ensure(report.accuracy == acc, || format!("accuracy {} vs {acc}", report.accuracy))?;
    ensure(report.macro_f1 == macro_f1, || format!("macro F1 {} vs {macro_f1}", report.macro_f1))?;
    ensure(report.weighted_f1 == weighted, || format!("weighted F1 {} vs {weighted}", report.weighted_f1))?;
    for (m, (support, p, r, f)) in report.per_class.iter().zip(per) {
        ensure(m.support == support && m.precision == p && m.recall == r && m.f1 == f, || {
            format!("{}: report {m:?}, oracle ({support}, {p}, {r}, {f})", m.pattern)
        })?;
    }
    ensure(report.n_samples == truth.len() as u64, || "sample count".to_string())?;
    Ok(())
}

/// Report metrics against direct counting, including a class that never
/// occurs and is never predicted.
pub fn metrics_oracle(sets: u64) -> Check {
    for s in 0..sets {
        let mut rng = rng_from(0x3e7 + s);
        let n = 200;
        let skip = (s % 8) as usize; // 7 means no class is skipped
        let draw = |rng: &mut Rng| loop {
            let c = rng.gen_range(0..NUM_CLASSES);
            if c != skip {
                break c;
            }
        };
        let truth: Vec<usize> = (0..n).map(|_| draw(&mut rng)).collect();
        let pred: Vec<usize> = truth
            .iter()
            .map(|&t| if rng.gen_bool(0.6) { t } else { draw(&mut rng) })
            .collect();
        let report = EvalReport::from_predictions(&truth, &pred).map_err(|e| e.to_string())?;
        compare(&report, &truth, &pred).map_err(|e| format!("set {s}: {e}"))?;
    }
    // ElongatedBubble present in truth but never predicted correctly, and
    // absent entirely in a second case.
    let eb = FlowPattern::ElongatedBubble.code();
    let truth = vec![0, 1, eb, eb, 4, 5, 6];
    let pred = vec![0, 1, 3, 3, 4, 5, 6];
    let report = EvalReport::from_predictions(&truth, &pred).map_err(|e| e.to_string())?;
    let row = &report.per_class[eb];
    ensure(row.precision == 0.0 && row.recall == 0.0 && row.f1 == 0.0, || format!("zero row {row:?}"))?;
    compare(&report, &truth, &pred)?;
    let absent = EvalReport::from_predictions(&[0, 1], &[0, 1]).map_err(|e| e.to_string())?;
    ensure(absent.per_class[eb].f1 == 0.0 && absent.macro_f1.is_finite(), || "absent class produced non-zero or NaN".to_string())?;
    Ok(format!("{sets} random sets of 200 match direct counting exactly; all-zero ElongatedBubble row finite"))
}

/// Unlimited-depth tree memorizes 500 consistent samples.
pub fn tree_memorization(rows: &[Vec<f64>], labels: &[usize]) -> Check {
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let tree = DecisionTree::fit(&refs, labels, &TreeConfig::default(), &mut rng_from(0)).map_err(|e| e.to_string())?;
    let pred = tree.predict(&refs).map_err(|e| e.to_string())?;
    let correct = pred.iter().zip(labels).filter(|(a, b)| a == b).count();
    ensure(correct == labels.len(), || format!("{correct}/{} training samples", labels.len()))?;
    Ok(format!("{} samples, depth {}, {} leaves, 100% training accuracy", labels.len(), tree.depth(), tree.leaf_count()))
}

/// Full-rank PCA reconstructs its training data.
pub fn pca_reconstruction(n: usize, d: usize) -> Check {
    let mut rng = rng_from(0x9ca);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
    let pca = Pca::fit(&refs, d).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for r in &rows {
        let back = pca.inverse_transform_row(&pca.transform_row(r));
        for (a, b) in r.iter().zip(&back) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-8, || format!("reconstruction error {worst:.2e}"))?;
    Ok(format!("{n}x{d} full-rank reconstruction error {worst:.1e}"))
}
