//! Confusion matrices, per-class metrics, seed averaging and plot-ready CSV
//! exports.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::WindowSample;
use crate::domain::{FlowPattern, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::models::train::TrainingLog;
use crate::models::Classifier;

pub type Confusion = [[u64; NUM_CLASSES]; NUM_CLASSES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub pattern: FlowPattern,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Provenance attached to a report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportMetadata {
    pub model_type: String,
    pub protocol: Option<String>,
    pub config_hash: Option<String>,
    pub split_hash: Option<String>,
    pub checkpoint_hash: Option<String>,
    pub seeds: Vec<u64>,
    pub notes: Vec<String>,
}

/// Published accuracy and F1 for one model, both split protocols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PaperReference {
    pub model: &'static str,
    pub experiment_based: (f64, f64),
    pub pattern_based: (f64, f64),
    pub reproduced: bool,
}

/// Published Table-2 figures `(accuracy, f1)`, for side-by-side comparison
/// only; they come from a rig dataset that is not available.
pub const PAPER_REFERENCE: [PaperReference; 11] = [
    PaperReference { model: "senet1d", experiment_based: (0.850, 0.847), pattern_based: (0.712, 0.674), reproduced: true },
    PaperReference { model: "random_forest", experiment_based: (0.788, 0.778), pattern_based: (0.473, 0.470), reproduced: true },
    PaperReference { model: "random_forest+pca", experiment_based: (0.769, 0.769), pattern_based: (0.461, 0.472), reproduced: true },
    PaperReference { model: "svm", experiment_based: (0.645, 0.612), pattern_based: (0.565, 0.535), reproduced: true },
    PaperReference { model: "svm+pca", experiment_based: (0.611, 0.570), pattern_based: (0.539, 0.507), reproduced: true },
    PaperReference { model: "mlp", experiment_based: (0.611, 0.578), pattern_based: (0.528, 0.482), reproduced: true },
    PaperReference { model: "mlp+pca", experiment_based: (0.629, 0.602), pattern_based: (0.502, 0.451), reproduced: true },
    PaperReference { model: "decision_tree", experiment_based: (0.638, 0.639), pattern_based: (0.412, 0.428), reproduced: true },
    PaperReference { model: "decision_tree+pca", experiment_based: (0.662, 0.670), pattern_based: (0.362, 0.370), reproduced: true },
    PaperReference { model: "cnn1d", experiment_based: (0.747, 0.720), pattern_based: (0.690, 0.660), reproduced: true },
    PaperReference { model: "transformer", experiment_based: (0.706, 0.680), pattern_based: (0.676, 0.660), reproduced: false },
];

/// Owned copy of a [`PaperReference`] carried inside reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFigures {
    pub model: String,
    pub experiment_based: (f64, f64),
    pub pattern_based: (f64, f64),
    pub reproduced: bool,
}

impl From<&PaperReference> for ReferenceFigures {
    fn from(r: &PaperReference) -> Self {
        Self {
            model: r.model.to_string(),
            experiment_based: r.experiment_based,
            pattern_based: r.pattern_based,
            reproduced: r.reproduced,
        }
    }
}

pub fn paper_reference(model: &str) -> Option<&'static PaperReference> {
    PAPER_REFERENCE.iter().find(|r| r.model == model)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Rows are true classes, columns predictions. After averaging this is
    /// the sum over runs.
    pub confusion: Confusion,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Evaluation samples per run.
    pub n_samples: u64,
    pub seeds_averaged: usize,
    pub metadata: ReportMetadata,
    pub reference: Option<ReferenceFigures>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize]) -> Result<Confusion> {
    if y_true.len() != y_pred.len() {
        return Err(Error::contract(format!(
            "{} labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut m = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= NUM_CLASSES || p >= NUM_CLASSES {
            return Err(Error::contract(format!("class code out of range: true {t}, predicted {p}")));
        }
        m[t][p] += 1;
    }
    Ok(m)
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Result<Self> {
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::EmptyInput("no evaluation samples".into()));
        }
        let diag: u64 = (0..NUM_CLASSES).map(|i| confusion[i][i]).sum();
        let per_class: Vec<ClassMetrics> = FlowPattern::ALL
            .iter()
            .map(|&p| {
                let c = p.code();
                let tp = confusion[c][c];
                let support: u64 = confusion[c].iter().sum();
                let predicted: u64 = (0..NUM_CLASSES).map(|r| confusion[r][c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    pattern: p,
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / NUM_CLASSES as f64;
        let weighted_f1 = per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / total as f64;
        Ok(Self {
            confusion,
            accuracy: ratio(diag, total),
            macro_f1,
            weighted_f1,
            per_class,
            n_samples: total,
            seeds_averaged: 1,
            metadata: ReportMetadata::default(),
            reference: None,
        })
    }

    pub fn from_predictions(y_true: &[usize], y_pred: &[usize]) -> Result<Self> {
        Self::from_confusion(confusion_matrix(y_true, y_pred)?)
    }

    /// Attaches metadata and the matching published reference, if any.
    pub fn with_metadata(mut self, metadata: ReportMetadata) -> Self {
        self.reference = paper_reference(&metadata.model_type).map(ReferenceFigures::from);
        self.metadata = metadata;
        self
    }

    /// Confusion rows divided by their sums; empty rows stay zero.
    pub fn normalized_confusion(&self) -> [[f64; NUM_CLASSES]; NUM_CLASSES] {
        let mut out = [[0.0; NUM_CLASSES]; NUM_CLASSES];
        for (row, src) in out.iter_mut().zip(&self.confusion) {
            let s: u64 = src.iter().sum();
            for (o, v) in row.iter_mut().zip(src) {
                *o = ratio(*v, s);
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Runs `model` over `samples` and scores the predictions.
pub fn evaluate(model: &mut dyn Classifier, samples: &[WindowSample]) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no evaluation samples".into()));
    }
    let rows: Vec<&[f64]> = samples.iter().map(|s| s.values.as_slice()).collect();
    let pred = model.predict(&rows)?;
    let truth: Vec<usize> = samples.iter().map(|s| s.label.code()).collect();
    EvalReport::from_predictions(&truth, &pred)
}

/// Mean of the scalar metrics; confusion matrices are summed.
pub fn average_reports(reports: &[EvalReport]) -> Result<EvalReport> {
    let Some(first) = reports.first() else {
        return Err(Error::EmptyInput("no reports to average".into()));
    };
    if let Some(r) = reports.iter().find(|r| r.n_samples != first.n_samples) {
        return Err(Error::contract(format!(
            "reports cover different eval sets ({} vs {} samples)",
            first.n_samples, r.n_samples
        )));
    }
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&EvalReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let mut confusion = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for r in reports {
        for (row, src) in confusion.iter_mut().zip(&r.confusion) {
            for (c, v) in row.iter_mut().zip(src) {
                *c += v;
            }
        }
    }
    let per_class = (0..NUM_CLASSES)
        .map(|c| ClassMetrics {
            pattern: first.per_class[c].pattern,
            precision: mean(&|r| r.per_class[c].precision),
            recall: mean(&|r| r.per_class[c].recall),
            f1: mean(&|r| r.per_class[c].f1),
            support: first.per_class[c].support,
        })
        .collect();
    let mut metadata = first.metadata.clone();
    metadata.seeds = reports.iter().flat_map(|r| r.metadata.seeds.iter().copied()).collect();
    metadata.seeds.sort_unstable();
    Ok(EvalReport {
        confusion,
        accuracy: mean(&|r| r.accuracy),
        macro_f1: mean(&|r| r.macro_f1),
        weighted_f1: mean(&|r| r.weighted_f1),
        per_class,
        n_samples: first.n_samples,
        seeds_averaged: reports.iter().map(|r| r.seeds_averaged).sum(),
        metadata,
        reference: first.reference.clone(),
    })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn confusion_header() -> String {
    let mut s = String::from("true\\predicted");
    for p in FlowPattern::ALL {
        s.push(',');
        s.push_str(p.name());
    }
    s.push('\n');
    s
}

pub fn confusion_csv(report: &EvalReport) -> String {
    let mut s = confusion_header();
    for p in FlowPattern::ALL {
        s.push_str(p.name());
        for v in &report.confusion[p.code()] {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

pub fn normalized_confusion_csv(report: &EvalReport) -> String {
    let mut s = confusion_header();
    for (p, row) in FlowPattern::ALL.iter().zip(report.normalized_confusion()) {
        s.push_str(p.name());
        for v in row {
            s.push_str(&format!(",{v}"));
        }
        s.push('\n');
    }
    s
}

pub fn parse_confusion_csv(text: &str) -> Result<Confusion> {
    let mut m = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    let mut seen = 0;
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != NUM_CLASSES + 1 {
            return Err(err(format!("expected {} fields", NUM_CLASSES + 1)));
        }
        let p: FlowPattern = fields[0].parse().map_err(|_| err(format!("unknown pattern '{}'", fields[0])))?;
        for (c, f) in fields[1..].iter().enumerate() {
            m[p.code()][c] = f.parse().map_err(|_| err(format!("bad count '{f}'")))?;
        }
        seen += 1;
    }
    if seen != NUM_CLASSES {
        return Err(Error::Parse {
            line: seen + 1,
            message: format!("expected {NUM_CLASSES} rows, found {seen}"),
        });
    }
    Ok(m)
}

pub fn training_curve_csv(log: &TrainingLog) -> String {
    let mut s = String::from("epoch,train_loss,eval_loss,eval_accuracy\n");
    for e in &log.epochs {
        s.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.eval_loss, e.eval_accuracy));
    }
    s
}

/// `x,y,label` rows; `points` and `labels` align.
pub fn pca_2d_csv(points: &[[f64; 2]], labels: &[FlowPattern]) -> Result<String> {
    if points.len() != labels.len() {
        return Err(Error::contract("points and labels differ in length"));
    }
    let mut s = String::from("x,y,label\n");
    for (p, l) in points.iter().zip(labels) {
        s.push_str(&format!("{},{},{}\n", p[0], p[1], l.name()));
    }
    Ok(s)
}

/// Everything that can be exported for plotting.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlotData<'a> {
    pub report: Option<&'a EvalReport>,
    pub training_log: Option<&'a TrainingLog>,
    pub pca: Option<(&'a [[f64; 2]], &'a [FlowPattern])>,
}

/// Writes `confusion.csv`, `confusion_normalized.csv`, `training_curve.csv`
/// and `pca_2d.csv` into `dir` for whichever inputs are present.
pub fn export_plot_data(dir: &Path, data: PlotData) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut emit = |name: &str, text: String| -> Result<()> {
        let path = dir.join(name);
        write_file(&path, &text)?;
        written.push(path);
        Ok(())
    };
    if let Some(r) = data.report {
        emit("confusion.csv", confusion_csv(r))?;
        emit("confusion_normalized.csv", normalized_confusion_csv(r))?;
    }
    if let Some(log) = data.training_log {
        emit("training_curve.csv", training_curve_csv(log))?;
    }
    if let Some((points, labels)) = data.pca {
        emit("pca_2d.csv", pca_2d_csv(points, labels)?)?;
    }
    Ok(written)
}
