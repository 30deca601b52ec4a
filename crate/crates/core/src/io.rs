//! Trace CSV and experiment manifest files.
//!
//! Trace CSV: header `time_s,voltage_v`, one `time,voltage` row per sample,
//! LF line endings. Voltages are written with the shortest representation
//! that round-trips, so write-then-read is bit-exact.
//!
//! A corpus directory holds one `<id>.json` manifest per experiment next to
//! its `<id>.csv` trace.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{validate_experiment, CapacitanceTrace, Experiment, FlowPattern, PatternEnvelope};
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str = "time_s,voltage_v";

/// Reads a two-column trace CSV.
pub fn ingest_csv(path: &Path, sample_rate_hz: f64, calibrate: bool) -> Result<CapacitanceTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trace_csv(&text, sample_rate_hz, calibrate)
}

pub fn parse_trace_csv(text: &str, sample_rate_hz: f64, calibrate: bool) -> Result<CapacitanceTrace> {
    let mut values = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r').trim();
        if line.is_empty() {
            continue;
        }
        if line_no == 1 && line.eq_ignore_ascii_case(TRACE_HEADER) {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(t), Some(v), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 columns, got {:?}", line),
            });
        };
        let parse = |s: &str, what: &str| {
            s.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("non-numeric {what} {:?}", s.trim()),
            })
        };
        parse(t, "time")?;
        values.push(parse(v, "voltage")?);
    }
    if values.is_empty() {
        return Err(Error::EmptyInput("trace CSV has no data rows".into()));
    }
    if calibrate {
        CapacitanceTrace::new(sample_rate_hz, values)
    } else {
        CapacitanceTrace::new_unclamped(sample_rate_hz, values)
    }
}

pub fn format_trace_csv(trace: &CapacitanceTrace) -> String {
    let mut out = String::with_capacity(trace.len() * 16 + 20);
    out.push_str(TRACE_HEADER);
    out.push('\n');
    let fs = trace.sample_rate_hz();
    for (i, v) in trace.values().iter().enumerate() {
        let _ = writeln!(out, "{},{}", i as f64 / fs, v);
    }
    out
}

pub fn write_trace_csv(path: &Path, trace: &CapacitanceTrace) -> Result<()> {
    fs::write(path, format_trace_csv(trace)).map_err(|e| Error::io(path, e))
}

/// On-disk description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub id: String,
    pub inclination_deg: f64,
    pub u_gs_mps: f64,
    pub u_os_mps: f64,
    pub label: FlowPattern,
    pub trace_path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<f64>,
}

impl ExperimentManifest {
    pub fn for_experiment(e: &Experiment) -> Self {
        Self {
            id: e.id.clone(),
            inclination_deg: e.inclination_deg,
            u_gs_mps: e.u_gs_mps,
            u_os_mps: e.u_os_mps,
            label: e.label,
            trace_path: format!("{}.csv", e.id),
            sample_rate_hz: Some(e.trace.sample_rate_hz()),
        }
    }
}

/// Writes every experiment as `<id>.json` + `<id>.csv` under `dir`.
pub fn write_corpus(dir: &Path, experiments: &[Experiment]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(experiments.len() * 2);
    for e in experiments {
        let manifest = ExperimentManifest::for_experiment(e);
        let trace_path = dir.join(&manifest.trace_path);
        write_trace_csv(&trace_path, &e.trace)?;
        let json_path = dir.join(format!("{}.json", e.id));
        let mut body = serde_json::to_string_pretty(&manifest)?;
        body.push('\n');
        fs::write(&json_path, body).map_err(|err| Error::io(&json_path, err))?;
        written.push(json_path);
        written.push(trace_path);
    }
    Ok(written)
}

pub fn read_manifest(path: &Path) -> Result<ExperimentManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Loads one experiment from its manifest, rejecting traces shorter than
/// `min_len` samples and, when an envelope is given, operating points outside it.
pub fn load_experiment(
    manifest_path: &Path,
    default_sample_rate_hz: f64,
    min_len: usize,
    env: Option<&PatternEnvelope>,
) -> Result<Experiment> {
    let m = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let trace_path = base.join(&m.trace_path);
    let fs_hz = m.sample_rate_hz.unwrap_or(default_sample_rate_hz);
    let trace = ingest_csv(&trace_path, fs_hz, true)?;
    if trace.len() < min_len {
        return Err(Error::InsufficientData {
            required: min_len,
            actual: trace.len(),
        });
    }
    let e = Experiment {
        id: m.id,
        inclination_deg: m.inclination_deg,
        u_gs_mps: m.u_gs_mps,
        u_os_mps: m.u_os_mps,
        label: m.label,
        trace,
    };
    if let Some(env) = env {
        if let Err(v) = validate_experiment(&e, env) {
            let msgs: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            return Err(Error::Config(format!(
                "experiment {} outside envelope: {}",
                e.id,
                msgs.join("; ")
            )));
        }
    }
    Ok(e)
}

/// Loads every `*.json` manifest in `dir`, sorted by file name.
pub fn load_corpus(
    dir: &Path,
    default_sample_rate_hz: f64,
    min_len: usize,
    env: Option<&PatternEnvelope>,
) -> Result<Vec<Experiment>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyInput(format!(
            "no experiment manifests in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| load_experiment(p, default_sample_rate_hz, min_len, env))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reads_rows_in_order() {
        let t = parse_trace_csv("time_s,voltage_v\n0.00,2.5\n0.01,2.6\n", 100.0, true).unwrap();
        assert_eq!(t.values(), &[2.5, 2.6]);
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn calibration_clamps_overshoot() {
        let t = parse_trace_csv("time_s,voltage_v\n0.0,6.2\n0.01,-1\n", 100.0, true).unwrap();
        assert_eq!(t.values(), &[5.0, 0.0]);
        let raw = parse_trace_csv("time_s,voltage_v\n0.0,6.2\n", 100.0, false).unwrap();
        assert_eq!(raw.values(), &[6.2]);
    }

    #[test]
    fn malformed_rows_name_their_line() {
        let err = parse_trace_csv("time_s,voltage_v\n0.0,1.0\nabc\n", 100.0, true).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_trace_csv("time_s,voltage_v\n0.0,1.0\n0.1,abc\n", 100.0, true).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_trace_csv("time_s,voltage_v\n0.0,1.0,3\n", 100.0, true).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(matches!(parse_trace_csv("", 100.0, true), Err(Error::EmptyInput(_))));
        assert!(matches!(
            parse_trace_csv("time_s,voltage_v\n", 100.0, true),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn ingest_reads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        fs::write(&p, "time_s,voltage_v\n0.00,2.5\n0.01,2.6\n").unwrap();
        let t = ingest_csv(&p, 100.0, true).unwrap();
        assert_eq!(t.values(), &[2.5, 2.6]);
        assert!(matches!(
            ingest_csv(&dir.path().join("missing.csv"), 100.0, true),
            Err(Error::Io { .. })
        ));
    }

    proptest! {
        #[test]
        fn write_then_read_is_bit_exact(values in proptest::collection::vec(0.0f64..=5.0, 1..200)) {
            let t = CapacitanceTrace::new(100.0, values).unwrap();
            let text = format_trace_csv(&t);
            let back = parse_trace_csv(&text, 100.0, true).unwrap();
            prop_assert_eq!(back.values(), t.values());
            let again = parse_trace_csv(&format_trace_csv(&back), 100.0, true).unwrap();
            prop_assert_eq!(again, back);
        }
    }
}
