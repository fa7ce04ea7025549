//! Confusion counting and precision / recall / F1.

use std::fmt::Write as _;

use thiserror::Error;

use crate::dataio::WindowedDataset;
use crate::encoding::{clamp_count, decode_argmax, ClassLabel, NUM_CLASSES};
use crate::model::{ForwardPass, Mode, Model, ModelError};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("{preds} predictions but {truths} ground-truth labels")]
    LengthMismatch { preds: usize, truths: usize },
    #[error("nothing to evaluate")]
    EmptyInput,
    #[error("test set has no windows")]
    EmptyDataset,
    #[error("window {0} has no occupancy label")]
    MissingLabel(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-class true positive, false positive and false negative tallies.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: [u64; NUM_CLASSES],
    pub fp: [u64; NUM_CLASSES],
    pub fn_: [u64; NUM_CLASSES],
}

impl ConfusionCounts {
    pub fn samples(&self) -> u64 {
        self.tp.iter().sum::<u64>() + self.fp.iter().sum::<u64>()
    }

    /// Number of samples whose true class is `k`.
    pub fn support(&self, k: usize) -> u64 {
        self.tp[k] + self.fn_[k]
    }
}

pub fn confusion(preds: &[ClassLabel], truths: &[ClassLabel]) -> Result<ConfusionCounts, EvalError> {
    if preds.len() != truths.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), truths: truths.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut c = ConfusionCounts::default();
    for (p, t) in preds.iter().zip(truths) {
        if p == t {
            c.tp[t.index()] += 1;
        } else {
            c.fp[p.index()] += 1;
            c.fn_[t.index()] += 1;
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `(tp / (tp + fp), tp / (tp + fn))` for class `k`; 0 on empty denominators.
pub fn precision_recall(counts: &ConfusionCounts, k: usize) -> (f64, f64) {
    (ratio(counts.tp[k], counts.tp[k] + counts.fp[k]), ratio(counts.tp[k], counts.tp[k] + counts.fn_[k]))
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Round half away from zero, then clamp into `0..=15`.
pub fn round_to_class(pred: f64) -> ClassLabel {
    let r = pred.round();
    if r <= 0.0 {
        clamp_count(0)
    } else {
        clamp_count(r.min(u32::MAX as f64) as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub samples: u64,
}

impl MetricsReport {
    pub fn from_counts(c: &ConfusionCounts) -> Self {
        let per_class = std::array::from_fn(|k| {
            let (p, r) = precision_recall(c, k);
            ClassMetrics { precision: p, recall: r, f1: f1(p, r), support: c.support(k) }
        });
        let tp: u64 = c.tp.iter().sum();
        let fp: u64 = c.fp.iter().sum();
        let fn_: u64 = c.fn_.iter().sum();
        let micro_precision = ratio(tp, tp + fp);
        let micro_recall = ratio(tp, tp + fn_);
        MetricsReport {
            per_class,
            micro_precision,
            micro_recall,
            micro_f1: f1(micro_precision, micro_recall),
            samples: c.samples(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,precision,recall,f1,support\n");
        for (k, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(out, "{k},{},{},{},{}", m.precision, m.recall, m.f1, m.support);
        }
        let _ = writeln!(
            out,
            "micro,{},{},{},{}",
            self.micro_precision, self.micro_recall, self.micro_f1, self.samples
        );
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:>6} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f1", "support");
        for (k, m) in self.per_class.iter().enumerate() {
            let _ = writeln!(
                out,
                "{k:>6} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                m.precision, m.recall, m.f1, m.support
            );
        }
        let _ = writeln!(
            out,
            "{:>6} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            "micro", self.micro_precision, self.micro_recall, self.micro_f1, self.samples
        );
        out
    }
}

/// Micro-averaged F1 of a prediction list.
pub fn micro_f1(preds: &[ClassLabel], truths: &[ClassLabel]) -> Result<f64, EvalError> {
    Ok(MetricsReport::from_counts(&confusion(preds, truths)?).micro_f1)
}

/// Argmax class for the classifier; rounded, clamped value for the
/// regressor.
pub fn predict_label(fp: &ForwardPass) -> ClassLabel {
    match fp.mode {
        Mode::Classifier => decode_argmax(&fp.probs).unwrap_or_else(|_| clamp_count(0)),
        Mode::Regressor => round_to_class(fp.logits[0]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub timestamp: i64,
    pub truth: ClassLabel,
    pub prediction: ClassLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub series: Vec<SeriesPoint>,
}

impl Evaluation {
    /// `timestamp,truth,prediction` rows.
    pub fn series_csv(&self) -> String {
        let mut out = String::from("timestamp,truth,prediction\n");
        for p in &self.series {
            let _ = writeln!(out, "{},{},{}", p.timestamp, p.truth, p.prediction);
        }
        out
    }
}

/// Scores a model on labelled windows.
pub fn evaluate_model(model: &Model, test: &WindowedDataset) -> Result<Evaluation, EvalError> {
    if test.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let mut series = Vec::with_capacity(test.len());
    for i in 0..test.len() {
        let truth = test.labels[i].ok_or(EvalError::MissingLabel(i))?;
        let fp = model.forward(test.window(i))?;
        series.push(SeriesPoint { timestamp: test.timestamps[i], truth: clamp_count(truth), prediction: predict_label(&fp) });
    }
    let preds: Vec<ClassLabel> = series.iter().map(|p| p.prediction).collect();
    let truths: Vec<ClassLabel> = series.iter().map(|p| p.truth).collect();
    let report = MetricsReport::from_counts(&confusion(&preds, &truths)?);
    Ok(Evaluation { report, series })
}
