use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_predictions, Evaluation};
use super::optim::AdamW;
use super::{Result, TrainConfig, TrainError};
use crate::gaze::{IntentionLabelMatrix, LabeledSession};
use crate::model::{Model, ModelConfig, ModelInput, ModelKind};
use crate::tensor::{Graph, Tensor};

/// A labeled session converted to network input.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub session_id: String,
    pub input: ModelInput,
    pub labels: IntentionLabelMatrix,
    /// `labels` as a `[T, K]` tensor of 0/1.
    pub target: Tensor,
}

pub fn prepare(dataset: &[LabeledSession], model_cfg: &ModelConfig) -> Result<Vec<Prepared>> {
    dataset
        .iter()
        .map(|s| {
            if s.labels.k() != model_cfg.num_findings {
                return Err(TrainError::Shape(format!(
                    "session {}: labels have {} findings, model expects {}",
                    s.session.session_id,
                    s.labels.k(),
                    model_cfg.num_findings
                )));
            }
            let input = ModelInput::from_session(&s.session, &model_cfg.backbone)?;
            let target = Tensor::new(vec![s.labels.rows(), s.labels.k()], s.labels.to_f64())?;
            Ok(Prepared {
                session_id: s.session.session_id.clone(),
                input,
                labels: s.labels.clone(),
                target,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub iteration: usize,
    /// Mean batch loss since the previous record.
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub val_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogRecord>,
    /// Iterations actually run (early stopping may end sooner).
    pub iterations_run: usize,
}

pub fn train(
    dataset: &[LabeledSession],
    kind: ModelKind,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    val: Option<&[LabeledSession]>,
) -> Result<TrainOutcome> {
    let data = prepare(dataset, model_cfg)?;
    let val = val.map(|v| prepare(v, model_cfg)).transpose()?;
    let refs: Vec<&Prepared> = data.iter().collect();
    let val_refs: Option<Vec<&Prepared>> = val.as_ref().map(|v| v.iter().collect());
    train_prepared(&refs, kind, cfg, model_cfg, val_refs.as_deref())
}

/// Frozen backbones get their features computed once up front.
fn model_inputs(model: &Model, data: &[&Prepared]) -> Result<Vec<ModelInput>> {
    data.iter()
        .map(|p| {
            let mut input = p.input.clone();
            if model.config.freeze_backbone {
                model.cache_features(&mut input)?;
            }
            Ok(input)
        })
        .collect()
}

pub fn train_prepared(
    data: &[&Prepared],
    kind: ModelKind,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    val: Option<&[&Prepared]>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    let mut model = Model::init(kind, model_cfg.clone(), cfg.seed)?;
    let inputs = model_inputs(&model, data)?;
    let val_inputs = match val {
        Some(v) => Some(model_inputs(&model, v)?),
        None => None,
    };

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    order_rng.set_stream(1);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(2);

    let n = data.len();
    let bs = cfg.batch_size.min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut order_rng);
    let mut cursor = 0;

    let mut opt = AdamW::new(cfg.learning_rate, cfg.weight_decay);
    let mut log = Vec::new();
    let mut interval_loss = 0.0;
    let mut interval_len = 0;
    let mut best: Option<(f64, crate::model::ParamStore)> = None;
    let mut stale = 0;
    let mut iterations_run = 0;

    for it in 1..=cfg.iterations {
        let mut batch = Vec::with_capacity(bs);
        while batch.len() < bs {
            if cursor == n {
                order.shuffle(&mut order_rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        // weight each session by its length so the batch loss is the mean
        // over every real (fixation, finding) pair in the batch
        let total_t: usize = batch.iter().map(|&i| inputs[i].len()).sum();
        let mut grads: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut loss = 0.0;
        for &i in &batch {
            let mut g = Graph::new();
            let p = model.bind(&mut g);
            let out = model.forward(&mut g, &p, &inputs[i], Some(&mut dropout_rng))?;
            let l = g.bce(out, &data[i].target)?;
            let w = inputs[i].len() as f64 / total_t as f64;
            loss += w * g.value(l).item();
            let lw = g.scale(l, w);
            let gr = g.backward(lw)?;
            for (name, var) in p.iter() {
                if let Some(t) = gr.get(*var) {
                    let acc = grads.entry(name.clone()).or_insert_with(|| vec![0.0; t.numel()]);
                    for (a, &v) in acc.iter_mut().zip(t.data()) {
                        *a += v;
                    }
                }
            }
        }
        if !loss.is_finite() || grads.values().flatten().any(|v| !v.is_finite()) {
            return Err(TrainError::Diverged { iteration: it, loss });
        }
        if let Some(max_norm) = cfg.grad_clip {
            let norm = grads.values().flatten().map(|v| v * v).sum::<f64>().sqrt();
            if norm > max_norm {
                let s = max_norm / norm;
                grads.values_mut().flatten().for_each(|v| *v *= s);
            }
        }
        opt.step(&mut model.params, &grads);
        iterations_run = it;
        interval_loss += loss;
        interval_len += 1;

        if it % cfg.eval_every == 0 || it == cfg.iterations {
            let val_f1 = match (&val_inputs, val) {
                (Some(vi), Some(v)) => Some(evaluate_inputs(&model, vi, v, cfg.threshold)?.metrics.f1),
                _ => None,
            };
            log.push(LogRecord {
                iteration: it,
                loss: interval_loss / interval_len as f64,
                val_f1,
            });
            interval_loss = 0.0;
            interval_len = 0;
            if let (Some(f1), Some(patience)) = (val_f1, cfg.early_stop_patience) {
                if best.as_ref().map_or(true, |(b, _)| f1 > *b) {
                    best = Some((f1, model.params.clone()));
                    stale = 0;
                } else {
                    stale += 1;
                    if stale >= patience {
                        break;
                    }
                }
            }
        }
    }
    if let Some((_, params)) = best {
        model.params = params;
    }
    Ok(TrainOutcome {
        model,
        log,
        iterations_run,
    })
}

fn evaluate_inputs(model: &Model, inputs: &[ModelInput], data: &[&Prepared], threshold: f64) -> Result<Evaluation> {
    let preds = inputs
        .iter()
        .map(|i| model.predict_input(i))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let labels: Vec<&IntentionLabelMatrix> = data.iter().map(|p| &p.labels).collect();
    evaluate_predictions(&preds, &labels, threshold)
}

/// Metrics of a trained model on prepared sessions.
pub fn evaluate_prepared(model: &Model, data: &[&Prepared], threshold: f64) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset("evaluation"));
    }
    let inputs = model_inputs(model, data)?;
    evaluate_inputs(model, &inputs, data, threshold)
}

/// Binarizes predictions at `threshold` and micro-averages over all pairs.
pub fn evaluate(model: &Model, dataset: &[LabeledSession], threshold: f64) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(TrainError::EmptyDataset("evaluation"));
    }
    let data = prepare(dataset, &model.config)?;
    let refs: Vec<&Prepared> = data.iter().collect();
    evaluate_prepared(model, &refs, threshold)
}
