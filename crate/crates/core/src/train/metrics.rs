//! Micro-averaged fixation-intention metrics and fold summaries.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{Result, TrainError};
use crate::gaze::IntentionLabelMatrix;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    /// Pools every `(fixation, finding)` pair of one prediction.
    pub fn add(&mut self, pred: &Tensor, labels: &IntentionLabelMatrix, threshold: f64) -> Result<()> {
        let (t, k) = pred.dims2("confusion")?;
        if (t, k) != (labels.rows(), labels.k()) {
            return Err(TrainError::Shape(format!(
                "predictions {t}x{k} vs labels {}x{}",
                labels.rows(),
                labels.k()
            )));
        }
        for (&p, &l) in pred.data().iter().zip(labels.as_slice()) {
            match (p > threshold, l != 0) {
                (true, true) => self.tp += 1,
                (true, false) => self.fp += 1,
                (false, true) => self.fn_ += 1,
                (false, false) => self.tn += 1,
            }
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Percentages. A ratio with an empty denominator is 0, except that a
    /// confusion with no positives at all (predicted or actual) scores 100.
    pub fn metrics(&self) -> Metrics {
        let pct = |num: u64, den: u64| if den == 0 { 0.0 } else { 100.0 * num as f64 / den as f64 };
        if self.tp + self.fp + self.fn_ == 0 {
            return Metrics {
                accuracy: if self.total() == 0 { 0.0 } else { 100.0 },
                precision: 100.0,
                recall: 100.0,
                f1: 100.0,
            };
        }
        let precision = pct(self.tp, self.tp + self.fp);
        let recall = pct(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            accuracy: pct(self.tp + self.tn, self.total()),
            precision,
            recall,
            f1,
        }
    }
}

/// Accuracy, F1, precision and recall in percent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: Confusion,
    pub metrics: Metrics,
}

/// Binarizes at `threshold` and micro-averages over all pairs of all sessions.
pub fn evaluate_predictions(preds: &[Tensor], labels: &[&IntentionLabelMatrix], threshold: f64) -> Result<Evaluation> {
    if preds.is_empty() {
        return Err(TrainError::EmptyDataset("evaluation"));
    }
    if preds.len() != labels.len() {
        return Err(TrainError::Shape(format!("{} predictions for {} label sets", preds.len(), labels.len())));
    }
    let mut confusion = Confusion::default();
    for (p, l) in preds.iter().zip(labels) {
        confusion.add(p, l, threshold)?;
    }
    Ok(Evaluation {
        confusion,
        metrics: confusion.metrics(),
    })
}

/// Two-sided 95% Student-t quantile with `dof` degrees of freedom.
pub fn t_critical_95(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive dof")
        .inverse_cdf(0.975)
}

/// Per-fold values of one metric with their mean and t-interval half-width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub per_fold: Vec<f64>,
    pub mean: f64,
    pub ci95: f64,
}

impl MetricSummary {
    pub fn from_values(values: &[f64]) -> Result<MetricSummary> {
        let n = values.len();
        if n == 0 {
            return Err(TrainError::EmptyDataset("metric summary"));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let ci95 = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            t_critical_95(n - 1) * var.sqrt() / (n as f64).sqrt()
        };
        Ok(MetricSummary {
            per_fold: values.to_vec(),
            mean,
            ci95,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: MetricSummary,
    pub f1: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
}

impl MetricsReport {
    pub fn from_folds(folds: &[Metrics]) -> Result<MetricsReport> {
        let col = |f: fn(&Metrics) -> f64| MetricSummary::from_values(&folds.iter().map(f).collect::<Vec<_>>());
        Ok(MetricsReport {
            accuracy: col(|m| m.accuracy)?,
            f1: col(|m| m.f1)?,
            precision: col(|m| m.precision)?,
            recall: col(|m| m.recall)?,
        })
    }

    pub fn mean(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy.mean,
            f1: self.f1.mean,
            precision: self.precision.mean,
            recall: self.recall.mean,
        }
    }

    pub fn ci95(&self) -> Metrics {
        Metrics {
            accuracy: self.accuracy.ci95,
            f1: self.f1.ci95,
            precision: self.precision.ci95,
            recall: self.recall.ci95,
        }
    }
}
