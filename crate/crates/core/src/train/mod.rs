//! Loss, optimizer loop, metrics, cross-validation and ablations.

pub mod cv;
pub mod metrics;
pub mod optim;
pub mod report;
pub mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cv::{
    ablation_rows, cross_validate, cross_validate_prepared, fold_assignment, run_ablations, run_pool, AblationRow,
    AblationTable, CvOutcome, FoldResult,
};
pub use metrics::{
    evaluate_predictions, t_critical_95, Confusion, Evaluation, MetricSummary, Metrics, MetricsReport,
};
pub use optim::AdamW;
pub use report::{emit_report, metrics_row, RenderedReport, ResultSet};
pub use trainer::{evaluate, evaluate_prepared, prepare, train, train_prepared, LogRecord, Prepared, TrainOutcome};

use crate::gaze::IntentionLabelMatrix;
use crate::model::ModelError;
use crate::tensor::{kernels, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("{0} needs a non-empty dataset")]
    EmptyDataset(&'static str),
    #[error("training diverged at iteration {iteration}: loss {loss}")]
    Diverged { iteration: usize, loss: f64 },
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Log (and validate, when a validation set is given) every this many iterations.
    pub eval_every: usize,
    /// Stop after this many evaluations without a validation-F1 improvement.
    pub early_stop_patience: Option<usize>,
    /// Global gradient-norm clip.
    pub grad_clip: Option<f64>,
    /// Binarization threshold for metrics.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            batch_size: 8,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            seed: 0,
            eval_every: 100,
            early_stop_patience: None,
            grad_clip: Some(1.0),
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 || self.eval_every == 0 {
            return bad("batch_size and eval_every must be >= 1".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad(format!("learning_rate {} must be >= 0", self.learning_rate));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad(format!("threshold {} must lie in (0, 1)", self.threshold));
        }
        if self.early_stop_patience == Some(0) {
            return bad("early_stop_patience must be >= 1".into());
        }
        if matches!(self.grad_clip, Some(c) if !(c > 0.0)) {
            return bad("grad_clip must be > 0".into());
        }
        Ok(())
    }
}

/// Mean binary cross-entropy of `[T, K]` confidences against labels.
pub fn bce_loss(pred: &Tensor, labels: &IntentionLabelMatrix) -> Result<f64> {
    let target = Tensor::new(vec![labels.rows(), labels.k()], labels.to_f64())?;
    if pred.shape() != target.shape() {
        return Err(TrainError::Shape(format!(
            "predictions {:?} vs labels {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(kernels::bce(pred, &target)?)
}
