//! Domain types shared across the pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of flow pattern classes; also the width of every model's output.
pub const NUM_CLASSES: usize = 7;

/// Calibrated voltage range of the capacitance transducer.
pub const VOLTAGE_MIN: f64 = 0.0;
pub const VOLTAGE_MAX: f64 = 5.0;

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 100.0;

/// Two-phase flow patterns. The discriminant is the class index used by
/// every model output, confusion matrix and export.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FlowPattern {
    DispersedBubble = 0,
    Plug = 1,
    ElongatedBubble = 2,
    Slug = 3,
    SlugChurn = 4,
    StratifiedWavy = 5,
    Annular = 6,
}

impl FlowPattern {
    pub const ALL: [FlowPattern; NUM_CLASSES] = [
        FlowPattern::DispersedBubble,
        FlowPattern::Plug,
        FlowPattern::ElongatedBubble,
        FlowPattern::Slug,
        FlowPattern::SlugChurn,
        FlowPattern::StratifiedWavy,
        FlowPattern::Annular,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<FlowPattern> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FlowPattern::DispersedBubble => "DispersedBubble",
            FlowPattern::Plug => "Plug",
            FlowPattern::ElongatedBubble => "ElongatedBubble",
            FlowPattern::Slug => "Slug",
            FlowPattern::SlugChurn => "SlugChurn",
            FlowPattern::StratifiedWavy => "StratifiedWavy",
            FlowPattern::Annular => "Annular",
        }
    }
}

impl fmt::Display for FlowPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FlowPattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown flow pattern {s:?}")))
    }
}

impl TryFrom<String> for FlowPattern {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FlowPattern> for String {
    fn from(p: FlowPattern) -> String {
        p.name().to_string()
    }
}

/// Clamp a voltage into the calibrated range.
pub fn clamp_voltage(v: f64) -> f64 {
    v.clamp(VOLTAGE_MIN, VOLTAGE_MAX)
}

/// A calibrated voltage sequence sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacitanceTrace {
    sample_rate_hz: f64,
    values: Vec<f64>,
}

impl CapacitanceTrace {
    /// Builds a trace, clamping every value into `[0, 5]` V.
    pub fn new(sample_rate_hz: f64, values: Vec<f64>) -> Result<Self> {
        let mut trace = Self::new_unclamped(sample_rate_hz, values)?;
        for v in &mut trace.values {
            *v = clamp_voltage(*v);
        }
        Ok(trace)
    }

    /// Builds a trace without calibration clamping (ingestion with
    /// `calibrate = false`).
    pub fn new_unclamped(sample_rate_hz: f64, values: Vec<f64>) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::contract(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if values.is_empty() {
            return Err(Error::EmptyInput("trace has no samples".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite sample at index {i}")));
        }
        Ok(Self {
            sample_rate_hz,
            values,
        })
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate_hz
    }
}

/// One rig run (or synthetic stand-in).
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub id: String,
    pub inclination_deg: f64,
    pub u_gs_mps: f64,
    pub u_os_mps: f64,
    pub label: FlowPattern,
    pub trace: CapacitanceTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.min && x <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeRow {
    pub pattern: FlowPattern,
    pub inclination_deg: f64,
    pub u_gs: Range,
    pub u_os: Range,
}

const INCLINATION_TOL: f64 = 1e-9;

/// Superficial velocity envelope per (pattern, inclination).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternEnvelope {
    rows: Vec<EnvelopeRow>,
}

impl PatternEnvelope {
    pub fn new(rows: Vec<EnvelopeRow>) -> Result<Self> {
        for r in &rows {
            if !(r.u_gs.min <= r.u_gs.max && r.u_os.min <= r.u_os.max) {
                return Err(Error::Config(format!(
                    "envelope row {} @ {} deg has min > max",
                    r.pattern, r.inclination_deg
                )));
            }
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[EnvelopeRow] {
        &self.rows
    }

    pub fn row(&self, pattern: FlowPattern, inclination_deg: f64) -> Option<&EnvelopeRow> {
        self.rows.iter().find(|r| {
            r.pattern == pattern && (r.inclination_deg - inclination_deg).abs() < INCLINATION_TOL
        })
    }

    pub fn rows_for(&self, pattern: FlowPattern) -> impl Iterator<Item = &EnvelopeRow> {
        self.rows.iter().filter(move |r| r.pattern == pattern)
    }

    /// Keeps only the rows of the given patterns.
    pub fn restricted_to(&self, patterns: &[FlowPattern]) -> PatternEnvelope {
        PatternEnvelope {
            rows: self
                .rows
                .iter()
                .filter(|r| patterns.contains(&r.pattern))
                .copied()
                .collect(),
        }
    }

    /// True when every pattern has at least one row.
    pub fn covers_all_patterns(&self) -> bool {
        FlowPattern::ALL
            .iter()
            .all(|p| self.rows_for(*p).next().is_some())
    }
}

/// The laboratory envelope used to build the dataset, one row per
/// (pattern, inclination) combination that was run.
pub fn default_envelope() -> PatternEnvelope {
    use FlowPattern::*;
    let row = |pattern, inclination_deg, gs: (f64, f64), os: (f64, f64)| EnvelopeRow {
        pattern,
        inclination_deg,
        u_gs: Range::new(gs.0, gs.1),
        u_os: Range::new(os.0, os.1),
    };
    PatternEnvelope {
        rows: vec![
            row(DispersedBubble, 0.0, (0.000, 0.100), (0.675, 1.120)),
            row(DispersedBubble, 15.0, (0.000, 0.080), (0.224, 1.120)),
            row(DispersedBubble, 30.0, (0.000, 0.100), (0.400, 1.120)),
            row(Plug, 15.0, (0.127, 0.500), (0.530, 1.100)),
            row(Plug, 30.0, (0.051, 0.314), (0.210, 1.100)),
            row(ElongatedBubble, 0.0, (0.150, 0.740), (0.420, 1.100)),
            row(ElongatedBubble, 15.0, (0.250, 0.750), (0.320, 1.100)),
            row(ElongatedBubble, 30.0, (0.055, 0.576), (0.110, 1.100)),
            row(Slug, 0.0, (0.370, 2.290), (0.316, 1.100)),
            row(Slug, 15.0, (0.700, 2.180), (0.120, 1.100)),
            row(Slug, 30.0, (0.470, 2.860), (0.110, 0.950)),
            row(SlugChurn, 0.0, (2.110, 3.740), (0.425, 1.100)),
            row(SlugChurn, 15.0, (2.900, 4.400), (0.110, 1.100)),
            row(SlugChurn, 30.0, (2.000, 4.290), (0.100, 1.100)),
            row(Annular, 0.0, (4.480, 5.000), (0.310, 1.100)),
            row(Annular, 15.0, (4.750, 5.000), (0.106, 1.100)),
            row(Annular, 30.0, (4.000, 5.000), (0.110, 1.100)),
            row(StratifiedWavy, 0.0, (1.240, 3.000), (0.100, 0.320)),
        ],
    }
}

/// A single reason an experiment falls outside its envelope.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoEnvelopeRow { inclination_deg: f64 },
    GasBelow { min: f64, actual: f64 },
    GasAbove { max: f64, actual: f64 },
    LiquidBelow { min: f64, actual: f64 },
    LiquidAbove { max: f64, actual: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoEnvelopeRow { inclination_deg } => {
                write!(f, "no envelope row for inclination {inclination_deg}")
            }
            Violation::GasBelow { min, actual } => {
                write!(f, "u_GS below {min:.3} (got {actual})")
            }
            Violation::GasAbove { max, actual } => {
                write!(f, "u_GS above {max:.3} (got {actual})")
            }
            Violation::LiquidBelow { min, actual } => {
                write!(f, "u_OS below {min:.3} (got {actual})")
            }
            Violation::LiquidAbove { max, actual } => {
                write!(f, "u_OS above {max:.3} (got {actual})")
            }
        }
    }
}

/// Checks the experiment's operating point against the envelope of its label.
pub fn validate_operating_point(
    label: FlowPattern,
    inclination_deg: f64,
    u_gs_mps: f64,
    u_os_mps: f64,
    env: &PatternEnvelope,
) -> std::result::Result<(), Vec<Violation>> {
    let Some(row) = env.row(label, inclination_deg) else {
        return Err(vec![Violation::NoEnvelopeRow { inclination_deg }]);
    };
    let mut v = Vec::new();
    if u_gs_mps < row.u_gs.min {
        v.push(Violation::GasBelow { min: row.u_gs.min, actual: u_gs_mps });
    }
    if u_gs_mps > row.u_gs.max {
        v.push(Violation::GasAbove { max: row.u_gs.max, actual: u_gs_mps });
    }
    if u_os_mps < row.u_os.min {
        v.push(Violation::LiquidBelow { min: row.u_os.min, actual: u_os_mps });
    }
    if u_os_mps > row.u_os.max {
        v.push(Violation::LiquidAbove { max: row.u_os.max, actual: u_os_mps });
    }
    if v.is_empty() {
        Ok(())
    } else {
        Err(v)
    }
}

pub fn validate_experiment(
    e: &Experiment,
    env: &PatternEnvelope,
) -> std::result::Result<(), Vec<Violation>> {
    validate_operating_point(e.label, e.inclination_deg, e.u_gs_mps, e.u_os_mps, env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn codes_are_bijective() {
        for (i, p) in FlowPattern::ALL.iter().enumerate() {
            assert_eq!(p.code(), i);
            assert_eq!(FlowPattern::from_code(i), Some(*p));
            assert_eq!(p.name().parse::<FlowPattern>().unwrap(), *p);
        }
        assert_eq!(FlowPattern::from_code(7), None);
        assert!("Bubbly".parse::<FlowPattern>().is_err());
    }

    #[test]
    fn serde_uses_canonical_name() {
        let s = serde_json::to_string(&FlowPattern::SlugChurn).unwrap();
        assert_eq!(s, "\"SlugChurn\"");
        let p: FlowPattern = serde_json::from_str(&s).unwrap();
        assert_eq!(p, FlowPattern::SlugChurn);
    }

    #[test]
    fn envelope_rows_match_lab_table() {
        let env = default_envelope();
        assert_eq!(env.rows().len(), 18);
        assert!(env.covers_all_patterns());

        let db = env.row(FlowPattern::DispersedBubble, 0.0).unwrap();
        assert_eq!(db.u_gs, Range::new(0.0, 0.1));
        assert_eq!(db.u_os, Range::new(0.675, 1.12));

        let an = env.row(FlowPattern::Annular, 30.0).unwrap();
        assert_eq!(an.u_gs, Range::new(4.0, 5.0));
        assert_eq!(an.u_os, Range::new(0.11, 1.1));

        let sw = env.row(FlowPattern::StratifiedWavy, 0.0).unwrap();
        assert_eq!(sw.u_gs, Range::new(1.24, 3.0));
        assert_eq!(sw.u_os, Range::new(0.1, 0.32));
        assert!(env.row(FlowPattern::StratifiedWavy, 15.0).is_none());
        assert!(env.row(FlowPattern::StratifiedWavy, 30.0).is_none());
        assert_eq!(env.rows_for(FlowPattern::Plug).count(), 2);
    }

    #[test]
    fn validation_reports_specific_violations() {
        let env = default_envelope();
        assert!(validate_operating_point(FlowPattern::Slug, 15.0, 1.0, 0.5, &env).is_ok());

        let v = validate_operating_point(FlowPattern::Slug, 15.0, 0.1, 0.5, &env).unwrap_err();
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().starts_with("u_GS below 0.700"), "{}", v[0]);

        let v = validate_operating_point(FlowPattern::Plug, 0.0, 0.2, 0.6, &env).unwrap_err();
        assert_eq!(v[0].to_string(), "no envelope row for inclination 0");

        let v = validate_operating_point(FlowPattern::Annular, 0.0, 6.0, 0.0, &env).unwrap_err();
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn trace_construction_clamps_and_rejects() {
        let t = CapacitanceTrace::new(100.0, vec![-0.2, 2.5, 6.2]).unwrap();
        assert_eq!(t.values(), &[0.0, 2.5, 5.0]);
        assert!(CapacitanceTrace::new(0.0, vec![1.0]).is_err());
        assert!(matches!(
            CapacitanceTrace::new(100.0, vec![]),
            Err(Error::EmptyInput(_))
        ));
        assert!(CapacitanceTrace::new(100.0, vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn clamp_is_idempotent(x in -1e6f64..1e6) {
            let once = clamp_voltage(x);
            prop_assert_eq!(clamp_voltage(once), once);
            prop_assert!((VOLTAGE_MIN..=VOLTAGE_MAX).contains(&once));
        }
    }
}
