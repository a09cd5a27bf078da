//! K-fold cross-validation and the component ablation table.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{Evaluation, Metrics, MetricsReport};
use super::trainer::{evaluate_prepared, prepare, train_prepared, Prepared};
use super::{Result, TrainConfig, TrainError};
use crate::gaze::LabeledSession;
use crate::model::{Ablations, ModelConfig, ModelKind};

/// Seeded session-level shuffle dealt round-robin into `folds` test sets.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(TrainError::Config(format!("cross-validation needs at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(TrainError::Config(format!("{n} sessions cannot fill {folds} folds")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    Ok(out)
}

/// Runs `task(i)` for `i in 0..n` on up to `jobs` threads; results keep index order.
pub fn run_pool<T: Send>(jobs: usize, n: usize, task: impl Fn(usize) -> Result<T> + Sync) -> Result<Vec<T>> {
    let jobs = jobs.clamp(1, n.max(1));
    if jobs == 1 {
        return (0..n).map(task).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let r = task(i);
                slots.lock().expect("worker panicked")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("worker panicked")
        .into_iter()
        .map(|r| r.expect("every task ran"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub test_sessions: Vec<String>,
    pub evaluation: Evaluation,
    pub iterations_run: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub report: MetricsReport,
    pub folds: Vec<FoldResult>,
}

pub fn cross_validate(
    dataset: &[LabeledSession],
    folds: usize,
    kind: ModelKind,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    jobs: usize,
) -> Result<CvOutcome> {
    model_cfg.validate()?;
    let data = prepare(dataset, model_cfg)?;
    cross_validate_prepared(&data, folds, kind, cfg, model_cfg, jobs)
}

/// Fold `f` trains with seed `cfg.seed + f` on every other fold and tests on `f`.
pub fn cross_validate_prepared(
    data: &[Prepared],
    folds: usize,
    kind: ModelKind,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    jobs: usize,
) -> Result<CvOutcome> {
    cfg.validate()?;
    let assignment = fold_assignment(data.len(), folds, cfg.seed)?;
    let results = run_pool(jobs, folds, |f| {
        let test: Vec<&Prepared> = assignment[f].iter().map(|&i| &data[i]).collect();
        let train: Vec<&Prepared> = assignment
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, idx)| idx.iter().map(|&i| &data[i]))
            .collect();
        let fold_cfg = TrainConfig {
            seed: cfg.seed.wrapping_add(f as u64),
            ..cfg.clone()
        };
        let out = train_prepared(&train, kind, &fold_cfg, model_cfg, None)?;
        let evaluation = evaluate_prepared(&out.model, &test, cfg.threshold)?;
        Ok(FoldResult {
            fold: f,
            test_sessions: test.iter().map(|p| p.session_id.clone()).collect(),
            evaluation,
            iterations_run: out.iterations_run,
        })
    })?;
    let metrics: Vec<Metrics> = results.iter().map(|r| r.evaluation.metrics).collect();
    Ok(CvOutcome {
        report: MetricsReport::from_folds(&metrics)?,
        folds: results,
    })
}

/// Row names and toggles of the ablation table, in presentation order.
pub fn ablation_rows() -> Vec<(&'static str, Ablations)> {
    let with = |f: fn(&mut Ablations)| {
        let mut a = Ablations::default();
        f(&mut a);
        a
    };
    vec![
        ("Full Model", Ablations::default()),
        ("w/o Pool Attention", with(|a| a.no_pool = true)),
        ("w/o 1D Temporal Embedding", with(|a| a.no_temporal = true)),
        ("w/o 2D Spatial Embedding", with(|a| a.no_spatial = true)),
        ("w/o Peripheral Feature", with(|a| a.no_peripheral = true)),
        ("w/o Fovea Mapping", with(|a| a.layout_embed = true)),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub ablation: Ablations,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, name: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// One cross-validation per ablation row, all on the same fold split.
/// Toggles already set in `base` are kept and combined with each row's.
pub fn run_ablations(
    dataset: &[LabeledSession],
    base: &ModelConfig,
    cfg: &TrainConfig,
    folds: usize,
    jobs: usize,
) -> Result<AblationTable> {
    base.validate()?;
    let data = prepare(dataset, base)?;
    let mut rows = Vec::new();
    for (name, toggles) in ablation_rows() {
        let b = base.ablation;
        let model_cfg = ModelConfig {
            ablation: Ablations {
                no_pool: b.no_pool || toggles.no_pool,
                no_temporal: b.no_temporal || toggles.no_temporal,
                no_spatial: b.no_spatial || toggles.no_spatial,
                no_peripheral: b.no_peripheral || toggles.no_peripheral,
                layout_embed: b.layout_embed || toggles.layout_embed,
            },
            ..base.clone()
        };
        let out = cross_validate_prepared(&data, folds, ModelKind::RadGazeIntent, cfg, &model_cfg, jobs)?;
        rows.push(AblationRow {
            name: name.to_string(),
            ablation: model_cfg.ablation,
            report: out.report,
        });
    }
    Ok(AblationTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_partition_sessions() {
        let f = fold_assignment(23, 5, 7).unwrap();
        let mut all: Vec<usize> = f.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..23).collect::<Vec<_>>());
        assert!(f.iter().all(|x| x.len() == 4 || x.len() == 5));
        assert_eq!(f, fold_assignment(23, 5, 7).unwrap());
        assert!(fold_assignment(10, 1, 0).is_err());
        assert!(fold_assignment(3, 5, 0).is_err());
    }

    #[test]
    fn pool_preserves_order() {
        let out = run_pool(3, 10, |i| Ok(i * i)).unwrap();
        assert_eq!(out, (0..10).map(|i| i * i).collect::<Vec<_>>());
    }

    #[test]
    fn six_rows_in_order() {
        let rows = ablation_rows();
        assert_eq!(rows.len(), 6);
        assert_eq!(rows[0].1, Ablations::default());
        assert!(rows[5].1.layout_embed);
    }
}
