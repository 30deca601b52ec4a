//! Subcommand implementations. Each writes into an output directory that
//! also receives `run_config.json`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use flowpat_core::dataset::{build_split, read_samples_csv, rows, write_samples_csv};
use flowpat_core::domain::validate_operating_point;
use flowpat_core::dsp::{estimate_cutoff, sampling_plan, welch_psd};
use flowpat_core::eval::{average_reports, export_plot_data, PlotData, ReportMetadata};
use flowpat_core::io::{ingest_csv, load_experiment, write_corpus};
use flowpat_core::models::{argmax, Pca, TrainingLog};
use flowpat_core::pipeline::{evaluate_fitted, fit_model, seed_list, Fitted, ModelKind, ModelSpec, LINEAR_SVM_NOTE};
use flowpat_core::sweep::{grid_for, run_sweep};
use flowpat_core::synth::generate_corpus;
use flowpat_core::{DatasetSplit, Error, Experiment, FlowPattern, Result, SplitManifest, SplitProtocol};
use serde::{Deserialize, Serialize};

use crate::config::{sha256_hex, RunConfig};

pub const RUN_CONFIG: &str = "run_config.json";
pub const SPLIT_MANIFEST: &str = "split_manifest.json";
pub const TRAIN_MANIFEST: &str = "train_manifest.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        message: format!("{}: {e}", path.display()),
    })
}

fn prepare_out(out: &Path, cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    write(&out.join(RUN_CONFIG), &cfg.record())
}

fn required<'a>(flag: Option<&'a Path>, configured: Option<&'a Path>, name: &str) -> Result<&'a Path> {
    flag.or(configured)
        .ok_or_else(|| Error::Config(format!("--{name} (or paths.{name}) is required")))
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let corpus = generate_corpus(cfg.corpus.per_row, &cfg.synth, &cfg.envelope)?;
    prepare_out(out, cfg)?;
    write_corpus(out, &corpus)?;
    log::info!("wrote {} experiments to {}", corpus.len(), out.display());
    Ok(())
}

pub struct IngestArgs {
    pub trace: PathBuf,
    pub label: FlowPattern,
    pub inclination_deg: f64,
    pub u_gs_mps: f64,
    pub u_os_mps: f64,
    pub id: Option<String>,
}

pub fn ingest(cfg: &RunConfig, args: &IngestArgs, out: &Path) -> Result<()> {
    if let Err(violations) =
        validate_operating_point(args.label, args.inclination_deg, args.u_gs_mps, args.u_os_mps, &cfg.envelope)
    {
        let msgs: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::Config(format!("{} operating point outside envelope: {}", args.label, msgs.join("; "))));
    }
    let trace = ingest_csv(&args.trace, cfg.ingest.sample_rate_hz, cfg.ingest.calibrate)?;
    if trace.len() < cfg.split.window_len {
        log::warn!("trace has {} samples, fewer than one {}-sample window", trace.len(), cfg.split.window_len);
    }
    let id = match &args.id {
        Some(id) => id.clone(),
        None => args
            .trace
            .file_stem()
            .and_then(|s| s.to_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Config("cannot derive an id from the trace path; pass --id".into()))?,
    };
    if id.is_empty() || id.contains(['/', '\\', ',']) {
        return Err(Error::Config(format!("experiment id {id:?} must be non-empty without '/', '\\' or ','")));
    }
    let e = Experiment {
        id,
        inclination_deg: args.inclination_deg,
        u_gs_mps: args.u_gs_mps,
        u_os_mps: args.u_os_mps,
        label: args.label,
        trace,
    };
    prepare_out(out, cfg)?;
    write_corpus(out, std::slice::from_ref(&e))?;
    Ok(())
}

pub fn split(cfg: &RunConfig, corpus_dir: Option<&Path>, out: &Path) -> Result<()> {
    let dir = required(corpus_dir, cfg.paths.corpus.as_deref(), "corpus")?;
    let corpus = load_corpus(cfg, dir)?;
    let s = &cfg.split;
    let split = build_split(&corpus, s.protocol, s.train_per_pattern, s.eval_per_pattern, s.window_len, cfg.seed)?;
    prepare_out(out, cfg)?;
    write_samples_csv(&out.join("train.csv"), &split.train, split.window_len)?;
    write_samples_csv(&out.join("eval.csv"), &split.eval, split.window_len)?;
    write_json(&out.join(SPLIT_MANIFEST), &split.manifest(Some(cfg.hash())))?;
    log::info!("{} split: {} train, {} eval windows", split.protocol, split.train.len(), split.eval.len());
    Ok(())
}

/// Every experiment manifest in `dir` except the run record, in file-name
/// order.
fn load_corpus(cfg: &RunConfig, dir: &Path) -> Result<Vec<Experiment>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != RUN_CONFIG))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!("no experiment manifests in {}", dir.display())));
    }
    paths
        .iter()
        .map(|p| load_experiment(p, cfg.ingest.sample_rate_hz, cfg.split.window_len, Some(&cfg.envelope)))
        .collect()
}

/// Reads a split directory and checks the partitions against the manifest.
pub fn load_split(dir: &Path) -> Result<(DatasetSplit, SplitManifest)> {
    let m: SplitManifest = read_json(&dir.join(SPLIT_MANIFEST))?;
    let split = DatasetSplit {
        train: read_samples_csv(&dir.join("train.csv"))?,
        eval: read_samples_csv(&dir.join("eval.csv"))?,
        protocol: m.protocol,
        seed: m.seed,
        window_len: m.window_len,
        train_per_pattern: m.train_per_pattern,
        eval_per_pattern: m.eval_per_pattern,
        duplicate_starts: m.duplicate_starts,
        train_experiments: m.train_experiments.clone(),
        eval_experiments: m.eval_experiments.clone(),
    };
    if split.content_hash() != m.content_hash {
        return Err(Error::Protocol(format!("partitions in {} do not match {SPLIT_MANIFEST}", dir.display())));
    }
    if split.eval.iter().chain(&split.train).any(|s| s.values.len() != m.window_len) {
        return Err(Error::Protocol(format!("windows in {} are not {} samples long", dir.display(), m.window_len)));
    }
    Ok((split, m))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainedRun {
    pub seed: u64,
    /// Relative to the training directory.
    pub checkpoint: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainManifest {
    pub model: ModelSpec,
    pub protocol: SplitProtocol,
    pub config_hash: String,
    pub split_hash: String,
    pub runs: Vec<TrainedRun>,
}

pub fn train(cfg: &RunConfig, split_dir: Option<&Path>, out: &Path) -> Result<()> {
    let dir = required(split_dir, cfg.paths.split.as_deref(), "split")?;
    let (split, m) = load_split(dir)?;
    let hash = cfg.hash();
    if m.config_hash.as_deref() != Some(hash.as_str()) {
        log::warn!("split in {} was made under a different config; eval will refuse it without --force", dir.display());
    }
    prepare_out(out, cfg)?;
    let mut runs = Vec::new();
    for (i, seed) in seed_list(cfg.seed, cfg.n_seeds).into_iter().enumerate() {
        log::info!("training {} seed {seed}", cfg.model);
        let outcome = fit_model(cfg.model, &cfg.models, &split, seed)?;
        let rel = format!("seed_{i}/{}", if cfg.model.kind.is_neural() { "model.ckpt" } else { "model.json" });
        let seed_dir = out.join(format!("seed_{i}"));
        fs::create_dir_all(&seed_dir).map_err(io_err(&seed_dir))?;
        let meta = serde_json::json!({
            "model": cfg.model,
            "seed": seed,
            "config_hash": hash,
            "split_hash": m.content_hash,
        });
        let path = out.join(&rel);
        outcome.fitted.save(&path, meta)?;
        if let Some(log) = &outcome.log {
            write(&seed_dir.join("training_curve.csv"), &flowpat_core::eval::training_curve_csv(log))?;
            write_json(&seed_dir.join("training_log.json"), log)?;
        }
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        runs.push(TrainedRun {
            seed,
            checkpoint: rel,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = TrainManifest {
        model: cfg.model,
        protocol: split.protocol,
        config_hash: hash,
        split_hash: m.content_hash,
        runs,
    };
    write_json(&out.join(TRAIN_MANIFEST), &manifest)
}

pub fn eval(cfg: &RunConfig, split_dir: Option<&Path>, train_dir: Option<&Path>, force: bool, out: &Path) -> Result<()> {
    let sdir = required(split_dir, cfg.paths.split.as_deref(), "split")?;
    let tdir = required(train_dir, cfg.paths.train.as_deref(), "train")?;
    let (split, sm) = load_split(sdir)?;
    let tm: TrainManifest = read_json(&tdir.join(TRAIN_MANIFEST))?;
    let hash = cfg.hash();

    let mut mismatches = Vec::new();
    if tm.config_hash != hash {
        mismatches.push(format!("checkpoints were trained under config {} but the current config is {hash}", tm.config_hash));
    }
    if sm.config_hash.as_deref() != Some(hash.as_str()) {
        mismatches.push(format!("split was built under config {:?} but the current config is {hash}", sm.config_hash));
    }
    if tm.split_hash != sm.content_hash {
        mismatches.push(format!("checkpoints were trained on split {} but the split is {}", tm.split_hash, sm.content_hash));
    }
    let mut loaded = Vec::new();
    for run in &tm.runs {
        let path = tdir.join(&run.checkpoint);
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let actual = sha256_hex(&bytes);
        if actual != run.sha256 {
            mismatches.push(format!("{} has sha256 {actual}, manifest says {}", run.checkpoint, run.sha256));
        }
        let (fitted, _) = Fitted::load(&path)?;
        loaded.push((run, actual, fitted));
    }
    if loaded.is_empty() {
        return Err(Error::EmptyInput(format!("{} lists no checkpoints", tdir.join(TRAIN_MANIFEST).display())));
    }
    if !mismatches.is_empty() && !force {
        return Err(Error::Config(format!("refusing to evaluate: {}; pass --force to override", mismatches.join("; "))));
    }

    prepare_out(out, cfg)?;
    let mut notes: Vec<String> = mismatches.iter().map(|m| format!("forced past: {m}")).collect();
    if tm.model.kind == ModelKind::Svm {
        notes.push(LINEAR_SVM_NOTE.to_string());
    }
    let base = ReportMetadata {
        model_type: tm.model.to_string(),
        protocol: Some(split.protocol.to_string()),
        config_hash: Some(hash),
        split_hash: Some(sm.content_hash.clone()),
        checkpoint_hash: None,
        seeds: Vec::new(),
        notes,
    };
    let mut reports = Vec::new();
    for (i, (run, sha, mut fitted)) in loaded.into_iter().enumerate() {
        let meta = ReportMetadata {
            checkpoint_hash: Some(sha),
            seeds: vec![run.seed],
            ..base.clone()
        };
        let report = evaluate_fitted(&mut fitted, &split.eval, meta)?;
        log::info!("seed {}: accuracy {:.4}, macro F1 {:.4}", run.seed, report.accuracy, report.macro_f1);
        if tm.runs.len() > 1 {
            let seed_dir = out.join(format!("seed_{i}"));
            fs::create_dir_all(&seed_dir).map_err(io_err(&seed_dir))?;
            report.write_json(&seed_dir.join("report.json"))?;
        }
        reports.push(report);
    }
    let mut report = average_reports(&reports)?;
    if reports.len() > 1 {
        let manifest_path = tdir.join(TRAIN_MANIFEST);
        let manifest_bytes = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
        report.metadata.checkpoint_hash = Some(sha256_hex(&manifest_bytes));
        for r in &reports {
            report.metadata.notes.push(format!(
                "seed {} checkpoint sha256 {}",
                r.metadata.seeds[0],
                r.metadata.checkpoint_hash.as_deref().unwrap_or("")
            ));
        }
    }
    report.write_json(&out.join("report.json"))?;

    let log_path = tdir.join("seed_0").join("training_log.json");
    let log: Option<TrainingLog> = if log_path.exists() { Some(read_json(&log_path)?) } else { None };
    let eval_rows = rows(&split.eval);
    let pca = Pca::fit(&eval_rows, 2)?;
    let points: Vec<[f64; 2]> = pca.transform(&eval_rows)?.into_iter().map(|z| [z[0], z[1]]).collect();
    let labels: Vec<FlowPattern> = split.eval.iter().map(|s| s.label).collect();
    export_plot_data(
        out,
        PlotData {
            report: Some(&report),
            training_log: log.as_ref(),
            pca: Some((&points, &labels)),
        },
    )?;
    Ok(())
}

pub fn sweep(cfg: &RunConfig, split_dir: Option<&Path>, out: &Path) -> Result<()> {
    let dir = required(split_dir, cfg.paths.split.as_deref(), "split")?;
    let (split, m) = load_split(dir)?;
    let points = grid_for(&cfg.models.senet, &cfg.sweep.groups);
    if points.is_empty() {
        return Err(Error::Config("sweep.groups selects no grid points".into()));
    }
    prepare_out(out, cfg)?;
    let meta = ReportMetadata {
        protocol: Some(split.protocol.to_string()),
        config_hash: Some(cfg.hash()),
        split_hash: Some(m.content_hash),
        ..Default::default()
    };
    let seeds = seed_list(cfg.seed, cfg.sweep.n_seeds);
    run_sweep(&points, &cfg.models, &split, &seeds, &meta, out)?;
    Ok(())
}

/// A checkpoint file, or a training directory whose first run is used.
fn resolve_checkpoint(path: &Path) -> Result<PathBuf> {
    if !path.is_dir() {
        return Ok(path.to_path_buf());
    }
    let tm: TrainManifest = read_json(&path.join(TRAIN_MANIFEST))?;
    let run = tm
        .runs
        .first()
        .ok_or_else(|| Error::EmptyInput(format!("{} lists no checkpoints", path.display())))?;
    Ok(path.join(&run.checkpoint))
}

/// `start_index,predicted_label,confidence` for every full window.
pub fn predict(cfg: &RunConfig, checkpoint: &Path, trace_path: &Path) -> Result<String> {
    let (mut fitted, _) = Fitted::load(&resolve_checkpoint(checkpoint)?)?;
    let trace = ingest_csv(trace_path, cfg.ingest.sample_rate_hz, cfg.ingest.calibrate)?;
    let len = cfg.split.window_len;
    if trace.len() < len {
        return Err(Error::InsufficientData {
            required: len,
            actual: trace.len(),
        });
    }
    let values = trace.values();
    let starts: Vec<usize> = (0..=values.len() - len).step_by(cfg.predict.stride).collect();
    let mut out = String::from("start_index,predicted_label,confidence\n");
    for chunk in starts.chunks(256) {
        let windows: Vec<&[f64]> = chunk.iter().map(|&s| &values[s..s + len]).collect();
        for (&start, p) in chunk.iter().zip(fitted.predict_proba(&windows)?) {
            let c = argmax(&p);
            let label = FlowPattern::from_code(c).expect("class index in range");
            let _ = writeln!(out, "{start},{label},{}", p[c]);
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct PsdSummary {
    config_hash: String,
    sample_rate_hz: f64,
    segments: usize,
    resolution_hz: f64,
    peak_hz: f64,
    cutoff_fraction: f64,
    cutoff_hz: f64,
    sampling_factor: f64,
    recommended_sample_rate_hz: f64,
}

pub fn psd(cfg: &RunConfig, trace_path: &Path, out: &Path) -> Result<()> {
    let trace = ingest_csv(trace_path, cfg.ingest.sample_rate_hz, cfg.ingest.calibrate)?;
    let spectrum = welch_psd(&trace, &cfg.welch)?;
    let cutoff = estimate_cutoff(&spectrum, cfg.psd.cutoff_fraction)?;
    let plan = sampling_plan(cutoff, cfg.psd.sampling_factor)?;
    prepare_out(out, cfg)?;
    write(&out.join("spectrum.csv"), &spectrum.to_csv())?;
    let summary = PsdSummary {
        config_hash: cfg.hash(),
        sample_rate_hz: trace.sample_rate_hz(),
        segments: cfg.welch.segment_count(),
        resolution_hz: spectrum.resolution_hz,
        peak_hz: spectrum.peak_frequency(),
        cutoff_fraction: cfg.psd.cutoff_fraction,
        cutoff_hz: plan.f_c_hz,
        sampling_factor: plan.k,
        recommended_sample_rate_hz: plan.f_s_hz,
    };
    write_json(&out.join("psd_summary.json"), &summary)
}
