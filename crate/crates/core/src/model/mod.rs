//! Fixation-intention network, baselines, and checkpoints.

pub mod checkpoint;
pub mod embed;
pub mod mask;
pub mod params;
pub mod transformer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use embed::{spatial_embed_2d, spatial_encoding, temporal_embed_1d, temporal_encoding};
pub use mask::{build_mask, CausalMode, PeripheralCausalMask};
pub use params::{Binding, ParamStore};

use crate::gaze::{Fixation, GazeSession};
use crate::tensor::{GradCheck, GradCheckReport, Graph, Tensor, TensorError, Var};
use crate::vision::{self, BackboneConfig, FOVEA_STRIDE, PERIPHERAL_STRIDE};
use params::{init_linear, linear, uniform};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("missing parameter {0}")]
    MissingParam(String),
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    RadGazeIntent,
    Mlp,
    Recurrent,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::RadGazeIntent => "radgazeintent",
            ModelKind::Mlp => "mlp",
            ModelKind::Recurrent => "recurrent",
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "radgazeintent" => Ok(ModelKind::RadGazeIntent),
            "mlp" => Ok(ModelKind::Mlp),
            "recurrent" | "lstm" => Ok(ModelKind::Recurrent),
            o => Err(format!("unknown model {o:?} (expected radgazeintent|mlp|recurrent)")),
        }
    }
}

/// Component toggles for ablation runs. All off is the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Cross-attend to the encoder output directly instead of pooled tokens.
    pub no_pool: bool,
    pub no_temporal: bool,
    pub no_spatial: bool,
    /// Drop the peripheral tokens; the encoder sees fixations only.
    pub no_peripheral: bool,
    /// Replace foveal features with learned row/column embeddings of the fixation block.
    pub layout_embed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_encoder_layers: usize,
    pub n_decoder_layers: usize,
    /// Feed-forward width as a multiple of `d_model`.
    pub ffn_mult: usize,
    pub pool_kernel: usize,
    pub pool_stride: usize,
    pub num_findings: usize,
    pub causal_mode: CausalMode,
    pub ablation: Ablations,
    pub backbone: BackboneConfig,
    /// Keep backbone weights at their initial values.
    pub freeze_backbone: bool,
    pub mlp_hidden: [usize; 2],
    pub recurrent_hidden: usize,
    pub recurrent_dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_encoder_layers: 2,
            n_decoder_layers: 2,
            ffn_mult: 4,
            pool_kernel: 5,
            pool_stride: 2,
            num_findings: 13,
            causal_mode: CausalMode::Strict,
            ablation: Ablations::default(),
            backbone: BackboneConfig::default(),
            freeze_backbone: false,
            mlp_hidden: [512, 256],
            recurrent_hidden: 256,
            recurrent_dropout: 0.2,
        }
    }
}

impl ModelConfig {
    /// Symmetric zero padding of the pooling windows.
    pub fn pool_pad(&self) -> usize {
        self.pool_kernel / 2
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.d_model == 0 || self.d_model % 4 != 0 {
            return bad(format!("d_model {} must be a positive multiple of 4", self.d_model));
        }
        if self.n_encoder_layers == 0 || self.n_decoder_layers == 0 || self.ffn_mult == 0 {
            return bad("layer counts and ffn_mult must be >= 1".into());
        }
        if self.pool_kernel == 0 || self.pool_stride == 0 {
            return bad("pool kernel and stride must be >= 1".into());
        }
        if self.num_findings == 0 {
            return bad("num_findings must be >= 1".into());
        }
        if self.mlp_hidden.contains(&0) || self.recurrent_hidden == 0 {
            return bad("baseline widths must be positive".into());
        }
        if !(0.0..1.0).contains(&self.recurrent_dropout) {
            return bad(format!("recurrent_dropout {} outside [0, 1)", self.recurrent_dropout));
        }
        self.backbone.validate()
    }
}

/// Precomputed backbone outputs for a frozen backbone.
#[derive(Debug, Clone, PartialEq)]
pub struct CachedFeatures {
    pub peripheral: Option<Tensor>,
    pub fovea: Option<Tensor>,
}

/// One session prepared for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    /// `[1, H, W]` in `[0, 1]`.
    pub image: Tensor,
    /// Fixations in model pixel coordinates.
    pub fixations: Vec<Fixation>,
    /// Row-major foveal block index per fixation.
    pub blocks: Vec<usize>,
    pub cached: Option<CachedFeatures>,
}

impl ModelInput {
    pub fn from_session(session: &GazeSession, cfg: &BackboneConfig) -> Result<ModelInput> {
        if session.fixations.is_empty() {
            return Err(ModelError::Input(format!("session {}: no fixations", session.session_id)));
        }
        let image = vision::prepare_image(session, cfg)?;
        let fixations = vision::scale_fixations(session, cfg);
        let blocks = vision::fovea_indices(&fixations, cfg.fovea_grid())?;
        Ok(ModelInput {
            image,
            fixations,
            blocks,
            cached: None,
        })
    }

    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }
}

/// Network weights together with the architecture they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Seeded initialization: weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn init(kind: ModelKind, config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let c = config.backbone.channels;
        let k = config.num_findings;
        vision::init_backbone(&config.backbone, &mut store, &mut rng);
        match kind {
            ModelKind::RadGazeIntent => {
                let d = config.d_model;
                init_linear(&mut store, &mut rng, "embed.proj", c, d);
                if config.ablation.layout_embed {
                    let (fh, fw) = config.backbone.fovea_grid();
                    store.insert("embed.layout_row", uniform(&mut rng, &[fh, d], 1.0));
                    store.insert("embed.layout_col", uniform(&mut rng, &[fw, d], 1.0));
                }
                transformer::init_encoder(&mut store, &mut rng, &config);
                if !config.ablation.no_pool {
                    init_linear(&mut store, &mut rng, "pool.score", d, 1);
                }
                transformer::init_decoder(&mut store, &mut rng, &config);
                init_linear(&mut store, &mut rng, "head", d, k);
            }
            ModelKind::Mlp => {
                let [h1, h2] = config.mlp_hidden;
                init_linear(&mut store, &mut rng, "mlp.fc1", c, h1);
                init_linear(&mut store, &mut rng, "mlp.fc2", h1, h2);
                init_linear(&mut store, &mut rng, "mlp.head", h2, k);
            }
            ModelKind::Recurrent => {
                let h = config.recurrent_hidden;
                let bound = 1.0 / (h as f64).sqrt();
                store.insert("lstm.wx", uniform(&mut rng, &[c, 4 * h], bound));
                store.insert("lstm.wh", uniform(&mut rng, &[h, 4 * h], bound));
                store.insert("lstm.b", uniform(&mut rng, &[4 * h], bound));
                init_linear(&mut store, &mut rng, "lstm.head", h, k);
            }
        }
        Ok(Model {
            kind,
            config,
            params: store,
        })
    }

    /// Whether a parameter receives gradient updates.
    pub fn is_trainable(&self, name: &str) -> bool {
        !(self.config.freeze_backbone && name.starts_with("backbone."))
    }

    pub fn bind(&self, g: &mut Graph) -> Binding {
        self.params.bind(g, |n| self.is_trainable(n))
    }

    /// Parameter count outside the backbone.
    pub fn head_param_count(&self) -> usize {
        self.params.count("") - self.params.count("backbone.")
    }

    pub fn input(&self, session: &GazeSession) -> Result<ModelInput> {
        ModelInput::from_session(session, &self.config.backbone)
    }

    /// Which backbone outputs this architecture consumes: `(peripheral, fovea)`.
    fn feature_needs(&self) -> (bool, bool) {
        match self.kind {
            ModelKind::RadGazeIntent => (!self.config.ablation.no_peripheral, !self.config.ablation.layout_embed),
            _ => (false, true),
        }
    }

    /// Stores backbone outputs on the input so later passes skip the convolutions.
    pub fn cache_features(&self, input: &mut ModelInput) -> Result<()> {
        input.cached = None;
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, |_| false);
        let (periph, fovea) = self.features(&mut g, &p, input)?;
        input.cached = Some(CachedFeatures {
            peripheral: periph.map(|v| g.value(v).clone()),
            fovea: fovea.map(|v| g.value(v).clone()),
        });
        Ok(())
    }

    fn features(&self, g: &mut Graph, p: &Binding, input: &ModelInput) -> Result<(Option<Var>, Option<Var>)> {
        let (need_p, need_f) = self.feature_needs();
        if let Some(c) = &input.cached {
            let take = |g: &mut Graph, t: &Option<Tensor>, need: bool, what: &str| -> Result<Option<Var>> {
                match (need, t) {
                    (false, _) => Ok(None),
                    (true, Some(t)) => Ok(Some(g.constant(t.clone()))),
                    (true, None) => Err(ModelError::Input(format!("cached features lack {what}"))),
                }
            };
            return Ok((take(g, &c.peripheral, need_p, "peripheral tokens")?, take(g, &c.fovea, need_f, "foveal features")?));
        }
        let img = g.constant(input.image.clone());
        vision::backbone_features(g, p, img, need_f.then_some(&input.blocks[..]), need_p)
    }

    /// Encoder input tokens and mask; returns `(tokens, mask, n_peripheral)`.
    fn encoder_tokens(&self, g: &mut Graph, p: &Binding, input: &ModelInput) -> Result<(Var, Tensor, usize)> {
        let cfg = &self.config;
        let ab = cfg.ablation;
        let d = cfg.d_model;
        let t = input.len();
        let (periph, fovea) = self.features(g, p, input)?;

        let blocks: Vec<(usize, usize)> = input.fixations.iter().map(vision::fovea_block).collect();
        let mut fix = match fovea {
            Some(f) => linear(g, p, "embed.proj", f)?,
            None => {
                let rows: Vec<usize> = blocks.iter().map(|b| b.0).collect();
                let cols: Vec<usize> = blocks.iter().map(|b| b.1).collect();
                let r = g.gather_rows(p.var("embed.layout_row")?, &rows)?;
                let c = g.gather_rows(p.var("embed.layout_col")?, &cols)?;
                g.add(r, c)?
            }
        };
        if !ab.no_spatial {
            let coords: Vec<(f64, f64)> = blocks.iter().map(|&(r, c)| (r as f64, c as f64)).collect();
            let e = g.constant(spatial_encoding(&coords, d));
            fix = g.add(fix, e)?;
        }
        if !ab.no_temporal {
            let e = g.constant(temporal_encoding(t, d));
            fix = g.add(fix, e)?;
        }

        let Some(periph) = periph else {
            return Ok((fix, build_mask(0, t, cfg.causal_mode).matrix, 0));
        };
        let n_p = g.shape(periph)[0];
        let mut per = linear(g, p, "embed.proj", periph)?;
        if !ab.no_spatial {
            // peripheral cell centres expressed in foveal-block units
            let ratio = (PERIPHERAL_STRIDE / FOVEA_STRIDE) as f64;
            let off = (ratio - 1.0) / 2.0;
            let (_, pw) = cfg.backbone.peripheral_grid();
            let coords: Vec<(f64, f64)> = (0..n_p)
                .map(|j| ((j / pw) as f64 * ratio + off, (j % pw) as f64 * ratio + off))
                .collect();
            let e = g.constant(spatial_encoding(&coords, d));
            per = g.add(per, e)?;
        }
        let tokens = g.concat_rows(&[per, fix])?;
        Ok((tokens, build_mask(n_p, t, cfg.causal_mode).matrix, n_p))
    }

    /// Encoder output at the fixation positions, `[T, d_model]`.
    pub fn encode_fixations(&self, g: &mut Graph, p: &Binding, input: &ModelInput) -> Result<Var> {
        self.require(ModelKind::RadGazeIntent)?;
        let (tokens, mask, n_p) = self.encoder_tokens(g, p, input)?;
        let enc = transformer::encode(g, p, &self.config, tokens, &mask)?;
        if n_p == 0 {
            Ok(enc)
        } else {
            Ok(g.slice_rows(enc, n_p, n_p + input.len())?)
        }
    }

    fn require(&self, kind: ModelKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(ModelError::Config(format!("operation needs a {} model, got {}", kind.as_str(), self.kind.as_str())))
        }
    }

    /// `[T, K]` confidences. `train_rng` enables dropout where the architecture has it.
    pub fn forward(
        &self,
        g: &mut Graph,
        p: &Binding,
        input: &ModelInput,
        train_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        if input.is_empty() {
            return Err(ModelError::Input("no fixations".into()));
        }
        let logits = match self.kind {
            ModelKind::RadGazeIntent => {
                let ef = self.encode_fixations(g, p, input)?;
                let memory = if self.config.ablation.no_pool {
                    ef
                } else {
                    transformer::pool_attention(g, p, &self.config, ef)?
                };
                let y = transformer::decode(g, p, &self.config, ef, memory)?;
                linear(g, p, "head", y)?
            }
            ModelKind::Mlp => {
                let (_, f) = self.features(g, p, input)?;
                let h = linear(g, p, "mlp.fc1", f.expect("fovea"))?;
                let h = g.relu(h);
                let h = linear(g, p, "mlp.fc2", h)?;
                let h = g.relu(h);
                linear(g, p, "mlp.head", h)?
            }
            ModelKind::Recurrent => {
                let (_, f) = self.features(g, p, input)?;
                let h = self.lstm(g, p, f.expect("fovea"))?;
                let h = match train_rng {
                    Some(rng) => g.dropout(h, self.config.recurrent_dropout, rng),
                    None => h,
                };
                linear(g, p, "lstm.head", h)?
            }
        };
        Ok(g.sigmoid(logits))
    }

    /// Unidirectional LSTM over `[T, C]`, returning all hidden states `[T, H]`.
    fn lstm(&self, g: &mut Graph, p: &Binding, x: Var) -> Result<Var> {
        let hdim = self.config.recurrent_hidden;
        let t = g.shape(x)[0];
        let wx = p.var("lstm.wx")?;
        let wh = p.var("lstm.wh")?;
        let b = p.var("lstm.b")?;
        let xw = g.matmul(x, wx)?;
        let xw = g.add_row(xw, b)?;
        let mut h = g.constant(Tensor::zeros(&[1, hdim]));
        let mut c = g.constant(Tensor::zeros(&[1, hdim]));
        let mut outs = Vec::with_capacity(t);
        for step in 0..t {
            let xt = g.slice_rows(xw, step, step + 1)?;
            let hw = g.matmul(h, wh)?;
            let z = g.add(xt, hw)?;
            let zi = g.slice_cols(z, 0, hdim)?;
            let zf = g.slice_cols(z, hdim, 2 * hdim)?;
            let zg = g.slice_cols(z, 2 * hdim, 3 * hdim)?;
            let zo = g.slice_cols(z, 3 * hdim, 4 * hdim)?;
            let i = g.sigmoid(zi);
            let f = g.sigmoid(zf);
            let cand = g.tanh(zg);
            let o = g.sigmoid(zo);
            let keep = g.mul(f, c)?;
            let write = g.mul(i, cand)?;
            c = g.add(keep, write)?;
            let ct = g.tanh(c);
            h = g.mul(o, ct)?;
            outs.push(h);
        }
        Ok(g.concat_rows(&outs)?)
    }

    /// Evaluation-mode confidences `[T, K]`.
    pub fn predict_input(&self, input: &ModelInput) -> Result<Tensor> {
        let mut g = Graph::new();
        let p = self.params.bind(&mut g, |_| false);
        let out = self.forward(&mut g, &p, input, None)?;
        Ok(g.value(out).clone())
    }

    pub fn predict(&self, session: &GazeSession) -> Result<Tensor> {
        self.predict_input(&self.input(session)?)
    }

    /// Central-difference check of the mean BCE loss against `target` with
    /// respect to every parameter, in evaluation mode.
    pub fn gradcheck(&self, input: &ModelInput, target: &Tensor, check: &GradCheck) -> Result<GradCheckReport> {
        let points: Vec<(String, Tensor)> = self.params.iter().map(|(n, t)| (n.clone(), t.clone())).collect();
        check.run(
            |g, vars| {
                let p = Binding::from_vars(points.iter().map(|(n, _)| n.as_str()), vars);
                let out = self.forward(g, &p, input, None)?;
                Ok(g.bce(out, target)?)
            },
            &points,
        )
    }
}
