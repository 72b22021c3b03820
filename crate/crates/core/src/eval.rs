//! Prequential (test-then-train) evaluation and F1 bookkeeping.
//!
//! Every sample is first predicted, scored into a cumulative confusion
//! matrix, and only then used for training. The F1 score of the cumulative
//! matrix is recorded every `report_interval` samples and at the end of the
//! stream.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::{ForestError, MondrianForest};
use crate::instrument::ModeKind;
use crate::scalar::Scalar;
use crate::stream::StreamSample;

pub const DEFAULT_REPORT_INTERVAL: usize = 50;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("empty stream")]
    EmptyStream,
    #[error("report interval must be positive")]
    InvalidInterval,
    #[error("label {label} out of range for {n_classes} classes at element {elements_seen}")]
    LabelOutOfRange {
        label: usize,
        n_classes: usize,
        elements_seen: usize,
    },
    #[error("model failed after {elements_seen} elements: {source}")]
    Model { elements_seen: usize, source: ForestError },
    #[error("checkpoint grids differ: {0}")]
    CheckpointMismatch(String),
    #[error("need at least two reports to aggregate, got {0}")]
    TooFewReports(usize),
    #[error("report csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EvalError {
    pub fn is_overflow(&self) -> bool {
        matches!(self, EvalError::Model { source, .. } if source.is_overflow())
    }
}

fn csv_error(e: csv::Error) -> EvalError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => EvalError::Io(io),
        other => EvalError::Csv(format!("{other:?}")),
    }
}

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    /// Builds a matrix from row-major nested counts.
    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let n = rows.len();
        assert!(rows.iter().all(|r| r.len() == n), "confusion matrix must be square");
        Self {
            n_classes: n,
            counts: rows.concat(),
        }
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.n_classes + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    fn row_sum(&self, k: usize) -> u64 {
        (0..self.n_classes).map(|j| self.get(k, j)).sum()
    }

    fn col_sum(&self, k: usize) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, k)).sum()
    }

    /// F1 of class `k`, zero when precision + recall is zero.
    pub fn class_f1(&self, k: usize) -> f64 {
        let tp = self.get(k, k) as f64;
        let predicted = self.col_sum(k) as f64;
        let actual = self.row_sum(k) as f64;
        if tp == 0.0 {
            return 0.0;
        }
        let precision = tp / predicted;
        let recall = tp / actual;
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum F1Average {
    #[default]
    Macro,
    Micro,
}

impl FromStr for F1Average {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macro" => Ok(F1Average::Macro),
            "micro" => Ok(F1Average::Micro),
            other => Err(format!("unknown F1 averaging `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scoring {
    pub average: F1Average,
    pub include_class0: bool,
}

impl Default for Scoring {
    fn default() -> Self {
        Self {
            average: F1Average::Macro,
            include_class0: true,
        }
    }
}

impl Scoring {
    pub fn score(&self, cm: &ConfusionMatrix) -> Result<f64, EvalError> {
        let first = usize::from(!self.include_class0);
        match self.average {
            F1Average::Macro => macro_f1_from(cm, first),
            F1Average::Micro => micro_f1_from(cm, first),
        }
    }
}

/// Mean per-class F1 over the classes that occurred as true labels.
pub fn macro_f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    macro_f1_from(cm, 0)
}

/// Pooled F1 over all classes; equals accuracy when every class is included.
pub fn micro_f1(cm: &ConfusionMatrix) -> Result<f64, EvalError> {
    micro_f1_from(cm, 0)
}

fn macro_f1_from(cm: &ConfusionMatrix, first: usize) -> Result<f64, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let present: Vec<usize> = (first..cm.n_classes).filter(|&k| cm.row_sum(k) > 0).collect();
    if present.is_empty() {
        return Ok(0.0);
    }
    Ok(present.iter().map(|&k| cm.class_f1(k)).sum::<f64>() / present.len() as f64)
}

fn micro_f1_from(cm: &ConfusionMatrix, first: usize) -> Result<f64, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for k in first..cm.n_classes {
        let hit = cm.get(k, k);
        tp += hit;
        fp += cm.col_sum(k) - hit;
        fn_ += cm.row_sum(k) - hit;
    }
    if tp == 0 {
        return Ok(0.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// A model that can be evaluated prequentially.
pub trait OnlineClassifier {
    fn n_classes(&self) -> usize;
    fn predict(&self, features: &[f64]) -> Result<usize, ForestError>;
    fn learn(&mut self, features: &[f64], label: usize) -> Result<(), ForestError>;
}

impl<F: Scalar> OnlineClassifier for MondrianForest<F> {
    fn n_classes(&self) -> usize {
        self.config().n_classes
    }

    fn predict(&self, features: &[f64]) -> Result<usize, ForestError> {
        MondrianForest::predict(self, features)
    }

    fn learn(&mut self, features: &[f64], label: usize) -> Result<(), ForestError> {
        self.partial_fit(features, label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub elements_seen: usize,
    pub f1: f64,
}

/// Identity of a run, echoed into every CSV row.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RunInfo {
    pub run_id: String,
    pub mode: Option<ModeKind>,
    pub p: u32,
    pub e: u32,
    pub trees: usize,
    pub memory_bytes: u64,
    pub seed: u64,
    pub ordering: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrequentialReport {
    pub info: RunInfo,
    pub checkpoints: Vec<Checkpoint>,
    pub final_f1: f64,
    pub confusion: ConfusionMatrix,
    /// Prediction made for each element, before training on it.
    pub predictions: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrequentialOptions {
    pub report_interval: usize,
    pub scoring: Scoring,
}

impl Default for PrequentialOptions {
    fn default() -> Self {
        Self {
            report_interval: DEFAULT_REPORT_INTERVAL,
            scoring: Scoring::default(),
        }
    }
}

pub fn prequential_run<C: OnlineClassifier>(
    model: &mut C,
    stream: &[StreamSample],
    options: &PrequentialOptions,
) -> Result<PrequentialReport, EvalError> {
    if stream.is_empty() {
        return Err(EvalError::EmptyStream);
    }
    if options.report_interval == 0 {
        return Err(EvalError::InvalidInterval);
    }
    let n_classes = model.n_classes();
    let mut confusion = ConfusionMatrix::new(n_classes);
    let mut checkpoints = Vec::with_capacity(stream.len() / options.report_interval + 1);
    let mut predictions = Vec::with_capacity(stream.len());
    for (i, sample) in stream.iter().enumerate() {
        let model_error = |source| EvalError::Model {
            elements_seen: i,
            source,
        };
        if sample.label >= n_classes {
            return Err(EvalError::LabelOutOfRange {
                label: sample.label,
                n_classes,
                elements_seen: i,
            });
        }
        let predicted = model.predict(&sample.features).map_err(model_error)?;
        confusion.record(sample.label, predicted);
        predictions.push(predicted);
        model.learn(&sample.features, sample.label).map_err(model_error)?;
        let seen = i + 1;
        if seen % options.report_interval == 0 || seen == stream.len() {
            checkpoints.push(Checkpoint {
                elements_seen: seen,
                f1: options.scoring.score(&confusion)?,
            });
        }
    }
    let final_f1 = checkpoints.last().map_or(0.0, |c| c.f1);
    Ok(PrequentialReport {
        info: RunInfo::default(),
        checkpoints,
        final_f1,
        confusion,
        predictions,
    })
}

fn same_grid(a: &[Checkpoint], b: &[Checkpoint]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::CheckpointMismatch(format!(
            "{} vs {} checkpoints",
            a.len(),
            b.len()
        )));
    }
    match a.iter().zip(b).find(|(x, y)| x.elements_seen != y.elements_seen) {
        Some((x, y)) => Err(EvalError::CheckpointMismatch(format!(
            "checkpoint at {} vs {}",
            x.elements_seen, y.elements_seen
        ))),
        None => Ok(()),
    }
}

/// Pointwise `F1_reduced - F1_baseline`; negative means the reduced run is worse.
pub fn delta_f1(reduced: &[Checkpoint], baseline: &[Checkpoint]) -> Result<Vec<Checkpoint>, EvalError> {
    same_grid(reduced, baseline)?;
    Ok(reduced
        .iter()
        .zip(baseline)
        .map(|(r, b)| Checkpoint {
            elements_seen: r.elements_seen,
            f1: r.f1 - b.f1,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveStats {
    pub elements_seen: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Pointwise mean and population standard deviation of several curves.
pub fn aggregate_orderings(curves: &[&[Checkpoint]]) -> Result<CurveStats, EvalError> {
    if curves.len() < 2 {
        return Err(EvalError::TooFewReports(curves.len()));
    }
    for c in &curves[1..] {
        same_grid(curves[0], c)?;
    }
    let len = curves[0].len();
    let mut stats = CurveStats {
        elements_seen: Vec::with_capacity(len),
        mean: Vec::new(),
        std: Vec::new(),
    };
    for i in 0..len {
        let values: Vec<f64> = curves.iter().map(|c| c[i].f1).collect();
        let (mean, std) = mean_std(&values);
        stats.elements_seen.push(curves[0][i].elements_seen);
        stats.mean.push(mean);
        stats.std.push(std);
    }
    Ok(stats)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Overflow,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Ok => "ok",
            RunStatus::Overflow => "overflow",
        })
    }
}

/// One line of a report CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub run_id: String,
    pub instrumentation: String,
    pub p: u32,
    pub e: u32,
    pub trees: usize,
    pub memory_bytes: u64,
    pub seed: u64,
    pub ordering: usize,
    pub elements_seen: usize,
    pub f1: Option<f64>,
    pub delta_f1: Option<f64>,
    pub status: RunStatus,
}

impl RunInfo {
    fn row(&self, elements_seen: usize, f1: Option<f64>, delta_f1: Option<f64>, status: RunStatus) -> ReportRow {
        ReportRow {
            run_id: self.run_id.clone(),
            instrumentation: self.mode.map_or_else(String::new, |m| m.to_string()),
            p: self.p,
            e: self.e,
            trees: self.trees,
            memory_bytes: self.memory_bytes,
            seed: self.seed,
            ordering: self.ordering,
            elements_seen,
            f1,
            delta_f1,
            status,
        }
    }

    /// Single row recording a run that stopped on a non-finite value.
    pub fn overflow_row(&self, elements_seen: usize) -> ReportRow {
        self.row(elements_seen, None, None, RunStatus::Overflow)
    }
}

impl PrequentialReport {
    /// One row per checkpoint, with deltas when a baseline curve is given.
    pub fn rows(&self, delta: Option<&[Checkpoint]>) -> Vec<ReportRow> {
        self.checkpoints
            .iter()
            .enumerate()
            .map(|(i, c)| {
                self.info
                    .row(c.elements_seen, Some(c.f1), delta.map(|d| d[i].f1), RunStatus::Ok)
            })
            .collect()
    }
}

pub fn write_report_csv<W: Write>(writer: W, rows: &[ReportRow]) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(writer);
    for row in rows {
        w.serialize(row).map_err(csv_error)?;
    }
    if rows.is_empty() {
        w.write_record([
            "run_id",
            "instrumentation",
            "p",
            "e",
            "trees",
            "memory_bytes",
            "seed",
            "ordering",
            "elements_seen",
            "f1",
            "delta_f1",
            "status",
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: Read>(reader: R) -> Result<Vec<ReportRow>, EvalError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for record in rdr.deserialize() {
        rows.push(record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            EvalError::Csv(format!("line {line}: {e}"))
        })?);
    }
    Ok(rows)
}
