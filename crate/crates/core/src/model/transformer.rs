//! Pre-norm attention blocks, the masked encoder, pool attention and the decoder.

use rand::Rng;

use super::params::{init_layer_norm, init_linear, layer_norm, linear, Binding, ParamStore};
use super::{ModelConfig, Result};
use crate::tensor::{Graph, Tensor, Var};

pub(crate) fn init_attention<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, d: usize) {
    for part in ["q", "k", "v", "o"] {
        init_linear(store, rng, &format!("{name}.{part}"), d, d);
    }
}

pub(crate) fn init_ffn<R: Rng>(store: &mut ParamStore, rng: &mut R, name: &str, d: usize, hidden: usize) {
    init_linear(store, rng, &format!("{name}.fc1"), d, hidden);
    init_linear(store, rng, &format!("{name}.fc2"), hidden, d);
}

pub(crate) fn init_encoder<R: Rng>(store: &mut ParamStore, rng: &mut R, cfg: &ModelConfig) {
    let d = cfg.d_model;
    for l in 0..cfg.n_encoder_layers {
        let n = format!("enc.{l}");
        init_layer_norm(store, &format!("{n}.ln1"), d);
        init_attention(store, rng, &format!("{n}.attn"), d);
        init_layer_norm(store, &format!("{n}.ln2"), d);
        init_ffn(store, rng, &format!("{n}.ffn"), d, d * cfg.ffn_mult);
    }
    init_layer_norm(store, "enc.ln_f", d);
}

pub(crate) fn init_decoder<R: Rng>(store: &mut ParamStore, rng: &mut R, cfg: &ModelConfig) {
    let d = cfg.d_model;
    for l in 0..cfg.n_decoder_layers {
        let n = format!("dec.{l}");
        init_layer_norm(store, &format!("{n}.ln1"), d);
        init_attention(store, rng, &format!("{n}.self"), d);
        init_layer_norm(store, &format!("{n}.ln2"), d);
        init_attention(store, rng, &format!("{n}.cross"), d);
        init_layer_norm(store, &format!("{n}.ln3"), d);
        init_ffn(store, rng, &format!("{n}.ffn"), d, d * cfg.ffn_mult);
    }
    init_layer_norm(store, "dec.ln_f", d);
}

/// Multi-head attention with queries from `q_in` and keys/values from `kv_in`.
/// `mask` is added to the scaled scores before the softmax.
pub(crate) fn attention(
    g: &mut Graph,
    p: &Binding,
    name: &str,
    q_in: Var,
    kv_in: Var,
    n_heads: usize,
    mask: Option<&Tensor>,
) -> Result<Var> {
    let q = linear(g, p, &format!("{name}.q"), q_in)?;
    let k = linear(g, p, &format!("{name}.k"), kv_in)?;
    let v = linear(g, p, &format!("{name}.v"), kv_in)?;
    let d = g.shape(q)[1];
    let dh = d / n_heads;
    let kt = g.transpose(k)?;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (lo, hi) = (h * dh, (h + 1) * dh);
        let qh = g.slice_cols(q, lo, hi)?;
        let kh = g.slice_rows(kt, lo, hi)?;
        let vh = g.slice_cols(v, lo, hi)?;
        let s = g.matmul(qh, kh)?;
        let s = g.scale(s, scale);
        let a = match mask {
            Some(m) => g.masked_softmax(s, m)?,
            None => g.softmax(s)?,
        };
        heads.push(g.matmul(a, vh)?);
    }
    let cat = if n_heads == 1 { heads[0] } else { g.concat_cols(&heads)? };
    linear(g, p, &format!("{name}.o"), cat)
}

fn ffn(g: &mut Graph, p: &Binding, name: &str, x: Var) -> Result<Var> {
    let h = linear(g, p, &format!("{name}.fc1"), x)?;
    let h = g.gelu(h);
    linear(g, p, &format!("{name}.fc2"), h)
}

/// Encoder blocks over the token sequence, without the final norm.
pub fn encoder_stack(g: &mut Graph, p: &Binding, cfg: &ModelConfig, tokens: Var, mask: &Tensor) -> Result<Var> {
    let mut x = tokens;
    for l in 0..cfg.n_encoder_layers {
        let n = format!("enc.{l}");
        let h = layer_norm(g, p, &format!("{n}.ln1"), x)?;
        let a = attention(g, p, &format!("{n}.attn"), h, h, cfg.n_heads, Some(mask))?;
        x = g.add(x, a)?;
        let h = layer_norm(g, p, &format!("{n}.ln2"), x)?;
        let f = ffn(g, p, &format!("{n}.ffn"), h)?;
        x = g.add(x, f)?;
    }
    Ok(x)
}

/// Encoder blocks followed by the final norm.
pub fn encode(g: &mut Graph, p: &Binding, cfg: &ModelConfig, tokens: Var, mask: &Tensor) -> Result<Var> {
    let x = encoder_stack(g, p, cfg, tokens, mask)?;
    layer_norm(g, p, "enc.ln_f", x)
}

/// Windowed attention pooling `[T, D] -> [T', D]`, scored by `pool.score`.
pub fn pool_attention(g: &mut Graph, p: &Binding, cfg: &ModelConfig, x: Var) -> Result<Var> {
    let scores = linear(g, p, "pool.score", x)?;
    Ok(g.window_pool(x, scores, cfg.pool_kernel, cfg.pool_stride, cfg.pool_pad())?)
}

/// Decoder blocks and the final norm; `memory` supplies cross-attention keys and values.
pub fn decode(g: &mut Graph, p: &Binding, cfg: &ModelConfig, stream: Var, memory: Var) -> Result<Var> {
    let mut y = stream;
    for l in 0..cfg.n_decoder_layers {
        let n = format!("dec.{l}");
        let h = layer_norm(g, p, &format!("{n}.ln1"), y)?;
        let a = attention(g, p, &format!("{n}.self"), h, h, cfg.n_heads, None)?;
        y = g.add(y, a)?;
        let h = layer_norm(g, p, &format!("{n}.ln2"), y)?;
        let c = attention(g, p, &format!("{n}.cross"), h, memory, cfg.n_heads, None)?;
        y = g.add(y, c)?;
        let h = layer_norm(g, p, &format!("{n}.ln3"), y)?;
        let f = ffn(g, p, &format!("{n}.ffn"), h)?;
        y = g.add(y, f)?;
    }
    layer_norm(g, p, "dec.ln_f", y)
}
