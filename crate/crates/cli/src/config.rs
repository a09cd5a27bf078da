//! Flat key=value run configuration shared by every subcommand.
//!
//! Resolution order: built-in defaults, then the `--config` file, then
//! `--set key=value` overrides, then dedicated flags. Keys are exactly the
//! field names of [`RunConfig`]; anything else is rejected.

use std::path::Path;

use radgaze_core::gaze::{
    read_vocabulary, FindingVocabulary, HybridConfig, LabelMode, LabelSpec, ScanScope, SeqConfig,
};
use radgaze_core::model::{Ablations, CausalMode, ModelConfig, ModelKind};
use radgaze_core::train::TrainConfig;
use radgaze_core::vision::BackboneConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Number, Value};

use crate::error::Failure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,

    /// Vocabulary file; empty means the first `num_findings` default names.
    pub vocabulary: String,
    pub num_findings: usize,
    pub mode: LabelMode,
    pub tau_star: f64,
    pub scan_scope: ScanScope,
    pub min_dwell: f64,

    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub eval_every: usize,
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
    /// 0 disables clipping.
    pub grad_clip: f64,
    pub threshold: f64,
    pub folds: usize,

    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    pub ffn_mult: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub causal_mode: CausalMode,
    pub no_pool: bool,
    pub no_temporal: bool,
    pub no_spatial: bool,
    pub no_peripheral: bool,
    pub layout_embed: bool,
    pub image_height: usize,
    pub image_width: usize,
    pub channels: usize,
    pub trunk_widths: [usize; 4],
    pub freeze_backbone: bool,
    pub mlp_hidden: [usize; 2],
    pub recurrent_hidden: usize,
    pub recurrent_dropout: f64,

    pub gradcheck_fixations: usize,
    pub gradcheck_step: f64,
    /// Coordinates sampled per parameter tensor; 0 checks every coordinate.
    pub gradcheck_coords: usize,
    pub gradcheck_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        let t = TrainConfig::default();
        let h = HybridConfig::default();
        RunConfig {
            model: ModelKind::RadGazeIntent,
            seed: 0,
            vocabulary: String::new(),
            num_findings: m.num_findings,
            mode: LabelMode::RadSeq,
            tau_star: h.tau_star,
            scan_scope: h.scope,
            min_dwell: h.seq.min_dwell,
            iterations: t.iterations,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            eval_every: t.eval_every,
            early_stop_patience: t.early_stop_patience.unwrap_or(0),
            grad_clip: t.grad_clip.unwrap_or(0.0),
            threshold: t.threshold,
            folds: 5,
            d_model: m.d_model,
            n_heads: m.n_heads,
            n_encoder_layers: m.n_encoder_layers,
            n_decoder_layers: m.n_decoder_layers,
            ffn_mult: m.ffn_mult,
            pool_kernel: m.pool_kernel,
            pool_stride: m.pool_stride,
            causal_mode: m.causal_mode,
            no_pool: false,
            no_temporal: false,
            no_spatial: false,
            no_peripheral: false,
            layout_embed: false,
            image_height: m.backbone.height,
            image_width: m.backbone.width,
            channels: m.backbone.channels,
            trunk_widths: m.backbone.trunk_widths,
            freeze_backbone: m.freeze_backbone,
            mlp_hidden: m.mlp_hidden,
            recurrent_hidden: m.recurrent_hidden,
            recurrent_dropout: m.recurrent_dropout,
            gradcheck_fixations: 6,
            gradcheck_step: 1e-5,
            gradcheck_coords: 4,
            gradcheck_tolerance: 1e-4,
        }
    }
}

/// Accumulates overrides on top of the defaults.
pub struct ConfigBuilder {
    fields: Map<String, Value>,
    seed_given: bool,
}

fn typed_value(old: &Value, raw: &str) -> Result<Value, String> {
    match old {
        Value::Bool(_) => raw
            .parse::<bool>()
            .map(Value::Bool)
            .map_err(|_| format!("expected true or false, got {raw:?}")),
        Value::Number(n) if n.is_u64() => raw
            .parse::<u64>()
            .map(Value::from)
            .map_err(|_| format!("expected a non-negative integer, got {raw:?}")),
        Value::Number(_) => raw
            .parse::<f64>()
            .ok()
            .and_then(Number::from_f64)
            .map(Value::Number)
            .ok_or_else(|| format!("expected a finite number, got {raw:?}")),
        Value::String(_) => Ok(Value::String(raw.to_string())),
        Value::Array(items) => raw
            .split(',')
            .map(|part| typed_value(&items[0], part.trim()))
            .collect::<Result<Vec<_>, _>>()
            .map(Value::Array),
        _ => Err("unsupported value".into()),
    }
}

impl ConfigBuilder {
    pub fn new() -> Self {
        let Value::Object(fields) = serde_json::to_value(RunConfig::default()).expect("config serializes") else {
            unreachable!("RunConfig is a struct");
        };
        ConfigBuilder {
            fields,
            seed_given: false,
        }
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        let old = self.fields.get(key).ok_or_else(|| format!("unknown config key {key:?}"))?;
        let v = typed_value(old, raw.trim()).map_err(|e| format!("{key}: {e}"))?;
        self.fields.insert(key.to_string(), v);
        if key == "seed" {
            self.seed_given = true;
        }
        Ok(())
    }

    /// `KEY=VALUE`, as given to `--set`.
    pub fn set_pair(&mut self, pair: &str) -> Result<(), String> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| format!("expected KEY=VALUE, got {pair:?}"))?;
        self.set(k.trim(), v)
    }

    pub fn load_file(&mut self, path: &Path) -> Result<(), Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))?;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.set_pair(line)
                .map_err(|e| Failure::usage(format!("{}:{}: {e}", path.display(), i + 1)))?;
        }
        Ok(())
    }

    pub fn build(self) -> Result<Resolved, Failure> {
        let cfg: RunConfig =
            serde_json::from_value(Value::Object(self.fields)).map_err(|e| Failure::usage(format!("config: {e}")))?;
        Ok(Resolved {
            cfg,
            seed_given: self.seed_given,
        })
    }
}

pub struct Resolved {
    pub cfg: RunConfig,
    seed_given: bool,
}

impl Resolved {
    /// Stochastic commands refuse to run on an implicit seed.
    pub fn require_seed(&self) -> Result<u64, Failure> {
        if self.seed_given {
            Ok(self.cfg.seed)
        } else {
            Err(Failure::usage("this command needs a seed: pass --seed or set seed in the config".into()))
        }
    }
}

impl RunConfig {
    pub fn vocabulary(&self) -> Result<FindingVocabulary, Failure> {
        if self.vocabulary.is_empty() {
            Ok(FindingVocabulary::first(self.num_findings)?)
        } else {
            let path = Path::new(&self.vocabulary);
            crate::error::require_file(path)?;
            Ok(read_vocabulary(path)?)
        }
    }

    pub fn label_spec(&self) -> LabelSpec {
        let seq = SeqConfig {
            min_dwell: self.min_dwell,
        };
        match self.mode {
            LabelMode::RadExplore => LabelSpec::RadExplore,
            LabelMode::RadSeq => LabelSpec::RadSeq(seq),
            LabelMode::RadHybrid => LabelSpec::RadHybrid(HybridConfig {
                tau_star: self.tau_star,
                scope: self.scan_scope,
                seq,
            }),
        }
    }

    pub fn model_config(&self, num_findings: usize) -> Result<ModelConfig, Failure> {
        let m = ModelConfig {
            d_model: self.d_model,
            n_heads: self.n_heads,
            n_encoder_layers: self.n_encoder_layers,
            n_decoder_layers: self.n_decoder_layers,
            ffn_mult: self.ffn_mult,
            pool_kernel: self.pool_kernel,
            pool_stride: self.pool_stride,
            num_findings,
            causal_mode: self.causal_mode,
            ablation: Ablations {
                no_pool: self.no_pool,
                no_temporal: self.no_temporal,
                no_spatial: self.no_spatial,
                no_peripheral: self.no_peripheral,
                layout_embed: self.layout_embed,
            },
            backbone: BackboneConfig {
                height: self.image_height,
                width: self.image_width,
                channels: self.channels,
                trunk_widths: self.trunk_widths,
            },
            freeze_backbone: self.freeze_backbone,
            mlp_hidden: self.mlp_hidden,
            recurrent_hidden: self.recurrent_hidden,
            recurrent_dropout: self.recurrent_dropout,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn train_config(&self) -> Result<TrainConfig, Failure> {
        let t = TrainConfig {
            iterations: self.iterations,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            weight_decay: self.weight_decay,
            seed: self.seed,
            eval_every: self.eval_every,
            early_stop_patience: (self.early_stop_patience > 0).then_some(self.early_stop_patience),
            grad_clip: (self.grad_clip > 0.0).then_some(self.grad_clip),
            threshold: self.threshold,
        };
        t.validate()?;
        Ok(t)
    }
}
