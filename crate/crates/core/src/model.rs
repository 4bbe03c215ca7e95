//! The long-sequence predictor: channel embedding with sinusoidal position
//! codes, a distilling encoder stack with sparse self-attention, and a
//! one-pass decoder that emits the whole horizon under a causal mask.
//!
//! Shapes follow the window layout: encoder input `[L_x, C]`, decoder input
//! `[L_token + L_y, C]`, prediction `[L_y, 3]`. All forward passes are
//! built on the autodiff tape so training and inference share one code
//! path; parameters are enumerated by name in a fixed schema order, which
//! is also the checkpoint body order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::{full_attention_graph, probsparse_attention_graph, AttentionError};
use crate::autodiff::{AutodiffError, ConvPadding, Graph, ValueId};
use crate::data::{
    normalize_windows, DataError, NetworkFeatures, NormStats, SequenceWindow, NET_CHANNELS,
    NUM_CHANNELS,
};
use crate::objective::ObjectiveError;
use crate::rng;
use crate::tensor::Tensor;

pub const OUTPUT_DIM: usize = 3;
/// Epsilon inside layer normalization.
pub const LN_EPS: f64 = 1e-5;
/// RNG stream id for weight initialization (distinct from channel
/// sampling and batch shuffling streams).
const INIT_STREAM: u64 = 11;

pub(crate) const CHECKPOINT_MAGIC: &[u8; 8] = b"TELEOPMD";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("bad model config: {reason}")]
    Config { reason: String },
    #[error("normalization stats missing: train the model or load a checkpoint that stores them")]
    MissingStats,
    #[error("shape mismatch in {context}: got {got:?}, want {want:?}")]
    Shape {
        context: &'static str,
        got: Vec<usize>,
        want: Vec<usize>,
    },
    #[error("no parameter named {name:?}")]
    UnknownParam { name: String },
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("checkpoint: {reason}")]
    Checkpoint { reason: String },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Architecture hyperparameters. The defaults are the toy scale used by
/// the end-to-end experiment: small enough to train on a laptop CPU in
/// minutes, large enough to beat the non-learned baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub encoder_layers: usize,
    /// Halve the sequence between encoder layers (Conv1d → ELU → MaxPool).
    pub distilling: bool,
    pub decoder_layers: usize,
    /// Sparse-attention selection factor: u = c·ln L queries get real rows.
    pub c: f64,
    pub input_channels: usize,
    pub l_x: usize,
    pub l_token: usize,
    pub l_y: usize,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            encoder_layers: 3,
            distilling: true,
            decoder_layers: 2,
            c: 5.0,
            input_channels: NUM_CHANNELS,
            l_x: 96,
            l_token: 48,
            l_y: 24,
            seed: 7,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: String| Err(ModelError::Config { reason });
        if self.d_model == 0 || self.n_heads == 0 {
            return fail("d_model and n_heads must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return fail(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.encoder_layers == 0 || self.decoder_layers == 0 {
            return fail("need at least one encoder and one decoder layer".into());
        }
        if self.input_channels == 0 {
            return fail("input_channels must be positive".into());
        }
        if self.l_x == 0 || self.l_token == 0 || self.l_y == 0 {
            return fail("window lengths must be positive".into());
        }
        if self.l_token > self.l_x {
            return fail(format!(
                "start token length {} exceeds encoder length {}",
                self.l_token, self.l_x
            ));
        }
        if !self.c.is_finite() || self.c <= 0.0 {
            return fail(format!("sparsity factor c must be positive, got {}", self.c));
        }
        for (i, &len) in self.encoder_lengths().iter().enumerate() {
            if len == 0 {
                return fail(format!(
                    "distilling underflow: encoder layer {i} would receive an empty sequence \
                     (l_x {} is too short for {} layers)",
                    self.l_x, self.encoder_layers
                ));
            }
        }
        Ok(())
    }

    /// Sequence length entering each encoder layer. With distilling on,
    /// every transition after a non-final layer halves the length (floor).
    pub fn encoder_lengths(&self) -> Vec<usize> {
        let mut lengths = Vec::with_capacity(self.encoder_layers);
        let mut len = self.l_x;
        for i in 0..self.encoder_layers {
            lengths.push(len);
            if self.distilling && i + 1 < self.encoder_layers {
                len /= 2;
            }
        }
        lengths
    }

    /// Length of the encoder output.
    pub fn latent_len(&self) -> usize {
        *self.encoder_lengths().last().expect("at least one layer")
    }

    pub fn decoder_len(&self) -> usize {
        self.l_token + self.l_y
    }

    /// Feed-forward width between the attention blocks.
    pub fn d_ff(&self) -> usize {
        2 * self.d_model
    }
}

pub(crate) enum Init {
    /// Uniform in ±1/√fan_in.
    FanIn(usize),
    Zeros,
    Ones,
}

pub(crate) struct TensorSpec {
    pub(crate) name: String,
    pub(crate) shape: Vec<usize>,
    pub(crate) init: Init,
}

impl TensorSpec {
    pub(crate) fn new(name: impl Into<String>, shape: Vec<usize>, init: Init) -> Self {
        Self {
            name: name.into(),
            shape,
            init,
        }
    }
}

fn attention_specs(out: &mut Vec<TensorSpec>, prefix: &str, d: usize) {
    for w in ["wq", "wk", "wv", "wo"] {
        out.push(TensorSpec {
            name: format!("{prefix}.{w}"),
            shape: vec![d, d],
            init: Init::FanIn(d),
        });
    }
}

fn layer_norm_specs(out: &mut Vec<TensorSpec>, prefix: &str, d: usize) {
    out.push(TensorSpec {
        name: format!("{prefix}.gamma"),
        shape: vec![d],
        init: Init::Ones,
    });
    out.push(TensorSpec {
        name: format!("{prefix}.beta"),
        shape: vec![d],
        init: Init::Zeros,
    });
}

fn ffn_specs(out: &mut Vec<TensorSpec>, prefix: &str, d: usize, d_ff: usize) {
    out.push(TensorSpec {
        name: format!("{prefix}.ffn.w1"),
        shape: vec![d, d_ff],
        init: Init::FanIn(d),
    });
    out.push(TensorSpec {
        name: format!("{prefix}.ffn.b1"),
        shape: vec![d_ff],
        init: Init::Zeros,
    });
    out.push(TensorSpec {
        name: format!("{prefix}.ffn.w2"),
        shape: vec![d_ff, d],
        init: Init::FanIn(d_ff),
    });
    out.push(TensorSpec {
        name: format!("{prefix}.ffn.b2"),
        shape: vec![d],
        init: Init::Zeros,
    });
}

/// The full parameter schema in storage order. Everything about the
/// parameter set — init, taping, optimizer state, checkpoints — walks
/// this list, so the order is part of the on-disk format.
fn tensor_specs(config: &ModelConfig) -> Vec<TensorSpec> {
    let d = config.d_model;
    let c = config.input_channels;
    let ff = config.d_ff();
    let mut out = Vec::new();
    out.push(TensorSpec {
        name: "enc_embed.w".into(),
        shape: vec![c, d],
        init: Init::FanIn(c),
    });
    out.push(TensorSpec {
        name: "dec_embed.w".into(),
        shape: vec![c, d],
        init: Init::FanIn(c),
    });
    for i in 0..config.encoder_layers {
        let pre = format!("enc{i}");
        attention_specs(&mut out, &format!("{pre}.attn"), d);
        layer_norm_specs(&mut out, &format!("{pre}.ln1"), d);
        ffn_specs(&mut out, &pre, d, ff);
        layer_norm_specs(&mut out, &format!("{pre}.ln2"), d);
        if config.distilling && i + 1 < config.encoder_layers {
            out.push(TensorSpec {
                name: format!("{pre}.distill.w"),
                shape: vec![3, d, d],
                init: Init::FanIn(3 * d),
            });
            out.push(TensorSpec {
                name: format!("{pre}.distill.b"),
                shape: vec![d],
                init: Init::Zeros,
            });
        }
    }
    for j in 0..config.decoder_layers {
        let pre = format!("dec{j}");
        attention_specs(&mut out, &format!("{pre}.self"), d);
        layer_norm_specs(&mut out, &format!("{pre}.ln1"), d);
        attention_specs(&mut out, &format!("{pre}.cross"), d);
        layer_norm_specs(&mut out, &format!("{pre}.ln2"), d);
        ffn_specs(&mut out, &pre, d, ff);
        layer_norm_specs(&mut out, &format!("{pre}.ln3"), d);
    }
    // Zero-init output heads: the untrained model predicts the normalized
    // mean instead of random noise, which stabilizes early training.
    out.push(TensorSpec {
        name: "head.w".into(),
        shape: vec![d, OUTPUT_DIM],
        init: Init::Zeros,
    });
    out.push(TensorSpec {
        name: "head.b".into(),
        shape: vec![OUTPUT_DIM],
        init: Init::Zeros,
    });
    out.push(TensorSpec {
        name: "aux_head.w".into(),
        shape: vec![d, OUTPUT_DIM],
        init: Init::Zeros,
    });
    out.push(TensorSpec {
        name: "aux_head.b".into(),
        shape: vec![OUTPUT_DIM],
        init: Init::Zeros,
    });
    out
}

/// All weights and biases, flat, in schema order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ModelParams {
    /// Seeded init. Weight matrices draw uniform ±1/√fan_in from a
    /// dedicated RNG stream; norms start at identity; heads start at zero.
    pub fn init(config: &ModelConfig) -> Self {
        let mut r = rng::stream(config.seed, INIT_STREAM);
        Self::from_specs(&tensor_specs(config), &mut r)
    }

    pub(crate) fn from_specs(specs: &[TensorSpec], r: &mut impl rand::Rng) -> Self {
        let mut names = Vec::with_capacity(specs.len());
        let mut tensors = Vec::with_capacity(specs.len());
        for spec in specs {
            let n: usize = spec.shape.iter().product();
            let data = match spec.init {
                Init::FanIn(fan) => {
                    let bound = 1.0 / (fan as f64).sqrt();
                    (0..n).map(|_| bound * (2.0 * r.random::<f64>() - 1.0)).collect()
                }
                Init::Zeros => vec![0.0; n],
                Init::Ones => vec![1.0; n],
            };
            names.push(spec.name.clone());
            tensors.push(Tensor::new(spec.shape.clone(), data).expect("counted"));
        }
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, tensors, index }
    }

    pub(crate) fn from_parts(names: Vec<String>, tensors: Vec<Tensor>) -> Self {
        let index = names.iter().enumerate().map(|(i, n)| (n.clone(), i)).collect();
        Self { names, tensors, index }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    /// Replace one tensor; the shape must match the schema.
    pub fn set_tensor(&mut self, name: &str, value: Tensor) -> Result<(), ModelError> {
        let &i = self
            .index
            .get(name)
            .ok_or_else(|| ModelError::UnknownParam { name: name.into() })?;
        if value.shape() != self.tensors[i].shape() {
            return Err(ModelError::Shape {
                context: "set_tensor",
                got: value.shape().to_vec(),
                want: self.tensors[i].shape().to_vec(),
            });
        }
        self.tensors[i] = value;
        Ok(())
    }

    pub(crate) fn position(&self, name: &str) -> usize {
        self.index[name]
    }

    /// Total scalar count — a pure function of the config.
    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Tensor::all_finite)
    }
}

/// A model: architecture, weights, and (after training or checkpoint
/// load) the normalization statistics needed to map in and out of
/// physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub stats: Option<NormStats>,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, ModelError> {
        config.validate()?;
        let params = ModelParams::init(&config);
        Ok(Self {
            config,
            params,
            stats: None,
        })
    }
}

/// Fixed sinusoidal position code: `PE[t, 2i] = sin(t·ω_i)`,
/// `PE[t, 2i+1] = cos(t·ω_i)` with `ω_i = 10000^(−2i/d)`.
pub fn sinusoidal_encoding(l: usize, d: usize) -> Tensor {
    let mut out = Tensor::zeros(&[l, d]);
    for t in 0..l {
        for j in 0..d {
            let pair = (j / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * pair / d as f64);
            out.data_mut()[t * d + j] = if j % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    out
}

/// Put every parameter on the tape as a leaf, in schema order.
pub(crate) fn tape_params(g: &mut Graph, params: &ModelParams) -> Vec<ValueId> {
    params.tensors.iter().map(|t| g.input(t.clone())).collect()
}

struct ParamIds<'a> {
    params: &'a ModelParams,
    ids: &'a [ValueId],
}

impl ParamIds<'_> {
    fn get(&self, name: &str) -> ValueId {
        self.ids[self.params.position(name)]
    }
}

/// Bias-free channel projection plus the fixed position code.
fn embed_graph(g: &mut Graph, x: ValueId, w: ValueId) -> Result<ValueId, ModelError> {
    let proj = g.matmul(x, w)?;
    let shape = g.value(proj).shape().to_vec();
    let pe = g.input(sinusoidal_encoding(shape[0], shape[1]));
    Ok(g.add(proj, pe)?)
}

enum AttnKind {
    /// Sparse self-attention, no mask (encoder).
    SparseSelf { c: f64 },
    /// Full self-attention under a causal mask (decoder).
    CausalSelf,
    /// Full attention from decoder rows onto the encoder latent.
    Cross,
}

fn multi_head_graph(
    g: &mut Graph,
    p: &ParamIds,
    prefix: &str,
    x_q: ValueId,
    x_kv: ValueId,
    heads: usize,
    kind: &AttnKind,
) -> Result<ValueId, ModelError> {
    let q = g.matmul(x_q, p.get(&format!("{prefix}.wq")))?;
    let k = g.matmul(x_kv, p.get(&format!("{prefix}.wk")))?;
    let v = g.matmul(x_kv, p.get(&format!("{prefix}.wv")))?;
    let d = g.value(q).shape()[1];
    let dh = d / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dh, (h + 1) * dh)?;
        let kh = g.slice_cols(k, h * dh, (h + 1) * dh)?;
        let vh = g.slice_cols(v, h * dh, (h + 1) * dh)?;
        let oh = match kind {
            AttnKind::SparseSelf { c } => probsparse_attention_graph(g, qh, kh, vh, *c, false)?,
            // The decoder keeps full attention under the causal mask: the
            // top-u ranking couples queries across rows, so a sparse
            // selection could let a perturbation at a later row reshuffle
            // the rows computed for an earlier one.
            AttnKind::CausalSelf => full_attention_graph(g, qh, kh, vh, true)?,
            AttnKind::Cross => full_attention_graph(g, qh, kh, vh, false)?,
        };
        outs.push(oh);
    }
    let cat = g.concat_cols(&outs)?;
    Ok(g.matmul(cat, p.get(&format!("{prefix}.wo")))?)
}

fn layer_norm_graph(
    g: &mut Graph,
    p: &ParamIds,
    prefix: &str,
    x: ValueId,
) -> Result<ValueId, ModelError> {
    let normed = g.layer_norm_rows(x, LN_EPS)?;
    let scaled = g.mul_row_broadcast(normed, p.get(&format!("{prefix}.gamma")))?;
    Ok(g.add_row_broadcast(scaled, p.get(&format!("{prefix}.beta")))?)
}

fn ffn_graph(g: &mut Graph, p: &ParamIds, prefix: &str, x: ValueId) -> Result<ValueId, ModelError> {
    let h = g.matmul(x, p.get(&format!("{prefix}.ffn.w1")))?;
    let h = g.add_row_broadcast(h, p.get(&format!("{prefix}.ffn.b1")))?;
    let h = g.relu(h);
    let h = g.matmul(h, p.get(&format!("{prefix}.ffn.w2")))?;
    Ok(g.add_row_broadcast(h, p.get(&format!("{prefix}.ffn.b2")))?)
}

/// Conv1d (same padding) → ELU → stride-2 max pool.
fn distill_graph(
    g: &mut Graph,
    p: &ParamIds,
    prefix: &str,
    x: ValueId,
) -> Result<ValueId, ModelError> {
    let conv = g.conv1d(x, p.get(&format!("{prefix}.distill.w")), ConvPadding::Same)?;
    let conv = g.add_row_broadcast(conv, p.get(&format!("{prefix}.distill.b")))?;
    let act = g.elu(conv);
    Ok(g.maxpool1d(act)?)
}

fn encoder_graph(
    g: &mut Graph,
    config: &ModelConfig,
    p: &ParamIds,
    enc_in: ValueId,
) -> Result<ValueId, ModelError> {
    let mut x = embed_graph(g, enc_in, p.get("enc_embed.w"))?;
    for i in 0..config.encoder_layers {
        let pre = format!("enc{i}");
        let attn = multi_head_graph(
            g,
            p,
            &format!("{pre}.attn"),
            x,
            x,
            config.n_heads,
            &AttnKind::SparseSelf { c: config.c },
        )?;
        let res = g.add(x, attn)?;
        x = layer_norm_graph(g, p, &format!("{pre}.ln1"), res)?;
        let ffn = ffn_graph(g, p, &pre, x)?;
        let res = g.add(x, ffn)?;
        x = layer_norm_graph(g, p, &format!("{pre}.ln2"), res)?;
        if config.distilling && i + 1 < config.encoder_layers {
            x = distill_graph(g, p, &pre, x)?;
        }
    }
    Ok(x)
}

fn decoder_graph(
    g: &mut Graph,
    config: &ModelConfig,
    p: &ParamIds,
    latent: ValueId,
    dec_in: ValueId,
) -> Result<ValueId, ModelError> {
    let mut y = embed_graph(g, dec_in, p.get("dec_embed.w"))?;
    for j in 0..config.decoder_layers {
        let pre = format!("dec{j}");
        let self_attn =
            multi_head_graph(g, p, &format!("{pre}.self"), y, y, config.n_heads, &AttnKind::CausalSelf)?;
        let res = g.add(y, self_attn)?;
        y = layer_norm_graph(g, p, &format!("{pre}.ln1"), res)?;
        let cross =
            multi_head_graph(g, p, &format!("{pre}.cross"), y, latent, config.n_heads, &AttnKind::Cross)?;
        let res = g.add(y, cross)?;
        y = layer_norm_graph(g, p, &format!("{pre}.ln2"), res)?;
        let ffn = ffn_graph(g, p, &pre, y)?;
        let res = g.add(y, ffn)?;
        y = layer_norm_graph(g, p, &format!("{pre}.ln3"), res)?;
    }
    let proj = g.matmul(y, p.get("head.w"))?;
    Ok(g.add_row_broadcast(proj, p.get("head.b"))?)
}

/// Handles into the taped forward pass.
pub struct ForwardPass {
    /// Encoder output, `[latent_len, d_model]`.
    pub latent: ValueId,
    /// Projected decoder rows, `[L_token + L_y, 3]`, normalized space.
    pub decoder_rows: ValueId,
    /// The last `L_y` decoder rows: the prediction, normalized space.
    pub prediction_norm: ValueId,
}

/// One forward pass on the tape. `ids` must come from [`tape_params`] (or
/// any leaves in schema order). The whole horizon is produced by this
/// single pass — there is no per-step loop anywhere downstream.
pub fn forward(
    g: &mut Graph,
    config: &ModelConfig,
    params: &ModelParams,
    ids: &[ValueId],
    enc_in: ValueId,
    dec_in: ValueId,
) -> Result<ForwardPass, ModelError> {
    let want_enc = vec![config.l_x, config.input_channels];
    let got_enc = g.value(enc_in).shape().to_vec();
    if got_enc != want_enc {
        return Err(ModelError::Shape {
            context: "encoder input",
            got: got_enc,
            want: want_enc,
        });
    }
    let want_dec = vec![config.decoder_len(), config.input_channels];
    let got_dec = g.value(dec_in).shape().to_vec();
    if got_dec != want_dec {
        return Err(ModelError::Shape {
            context: "decoder input",
            got: got_dec,
            want: want_dec,
        });
    }
    let p = ParamIds { params, ids };
    let latent = encoder_graph(g, config, &p, enc_in)?;
    let decoder_rows = decoder_graph(g, config, &p, latent, dec_in)?;
    let prediction_norm = g.slice_rows(decoder_rows, config.l_token, config.decoder_len())?;
    Ok(ForwardPass {
        latent,
        decoder_rows,
        prediction_norm,
    })
}

/// Model output in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// `[L_y, 3]` tool-tip positions, meters.
    pub positions: Tensor,
    /// Seconds from the window start, one per horizon step.
    pub timestamps: Vec<f64>,
}

/// Predict from a raw (meter-space) window. Normalizes with the stored
/// training statistics, runs the forward pass, and denormalizes the
/// output. `net` optionally overrides the horizon's network-feature
/// channels (predicted loss/latency/jitter); `None` keeps the values
/// recorded in the window.
pub fn predict(
    model: &Model,
    window: &SequenceWindow,
    net: Option<&NetworkFeatures>,
) -> Result<Prediction, ModelError> {
    predict_inner(model, window, net, false)
}

/// Same as [`predict`] for a window that is already in normalized space
/// (a training/evaluation split). The override, if any, is given in
/// physical units and z-scored internally.
pub fn predict_normalized(
    model: &Model,
    window: &SequenceWindow,
    net: Option<&NetworkFeatures>,
) -> Result<Prediction, ModelError> {
    predict_inner(model, window, net, true)
}

fn predict_inner(
    model: &Model,
    window: &SequenceWindow,
    net: Option<&NetworkFeatures>,
    normalized: bool,
) -> Result<Prediction, ModelError> {
    let stats = model.stats.as_ref().ok_or(ModelError::MissingStats)?;
    let config = &model.config;
    let mut w = window.clone();
    if let Some(net) = net {
        if net.len() != config.l_y {
            return Err(ModelError::Shape {
                context: "network override",
                got: vec![net.len()],
                want: vec![config.l_y],
            });
        }
        let cols = w.decoder_input.shape()[1];
        for (i, base) in (config.l_token..config.decoder_len()).enumerate() {
            let raw = [net.loss_rate[i], net.latency_ms[i], net.jitter_ms[i]];
            for (k, ch) in NET_CHANNELS.enumerate() {
                let v = if normalized {
                    (raw[k] - stats.net_mean[k]) / stats.net_std[k]
                } else {
                    raw[k]
                };
                w.decoder_input.data_mut()[base * cols + ch] = v;
            }
        }
    }
    let w = if normalized {
        w
    } else {
        normalize_windows(std::slice::from_ref(&w), stats)
            .pop()
            .expect("one window in, one out")
    };

    let mut g = Graph::new();
    let ids = tape_params(&mut g, &model.params);
    let enc = g.input(w.encoder_input.clone());
    let dec = g.input(w.decoder_input.clone());
    let fwd = forward(&mut g, config, &model.params, &ids, enc, dec)?;

    let p_norm = g.value(fwd.prediction_norm);
    let mut positions = Tensor::zeros(&[config.l_y, OUTPUT_DIM]);
    for t in 0..config.l_y {
        for a in 0..OUTPUT_DIM {
            positions.data_mut()[t * OUTPUT_DIM + a] =
                p_norm.at2(t, a) * stats.pos_std[a] + stats.pos_mean[a];
        }
    }
    let timestamps = (0..config.l_y)
        .map(|i| (config.l_x + i) as f64 * w.dt)
        .collect();
    Ok(Prediction {
        positions,
        timestamps,
    })
}

#[derive(Serialize, Deserialize)]
pub(crate) struct TensorEntry {
    pub(crate) name: String,
    pub(crate) shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    stats: Option<NormStats>,
    tensors: Vec<TensorEntry>,
}

/// Byte layout shared by every checkpoint in the crate: 8-byte magic,
/// u32 version, u64 header length, a structured-text (TOML) header,
/// then every tensor body as little-endian f64 in index order.
pub(crate) fn write_blob(
    path: &Path,
    magic: &[u8; 8],
    header_text: &str,
    tensors: &[Tensor],
) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(magic)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header_text.len() as u64).to_le_bytes())?;
    w.write_all(header_text.as_bytes())?;
    for t in tensors {
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) struct BlobBody {
    r: BufReader<File>,
}

impl BlobBody {
    pub(crate) fn read_tensor(&mut self, name: &str, shape: &[usize]) -> Result<Tensor, ModelError> {
        let n: usize = shape.iter().product();
        let mut data = Vec::with_capacity(n);
        let mut buf = [0u8; 8];
        for _ in 0..n {
            self.r.read_exact(&mut buf).map_err(|e| ModelError::Checkpoint {
                reason: format!("truncated body for tensor {name:?}: {e}"),
            })?;
            data.push(f64::from_le_bytes(buf));
        }
        Ok(Tensor::new(shape.to_vec(), data).expect("counted"))
    }

    pub(crate) fn finish(mut self) -> Result<(), ModelError> {
        let mut rest = [0u8; 1];
        if self.r.read(&mut rest)? != 0 {
            return Err(ModelError::Checkpoint {
                reason: "trailing bytes after the last tensor body".into(),
            });
        }
        Ok(())
    }
}

/// Check magic and version, return the header text and a reader
/// positioned at the first tensor body.
pub(crate) fn open_blob(
    path: &Path,
    magic: &[u8; 8],
    what: &str,
) -> Result<(String, BlobBody), ModelError> {
    let bad = |reason: String| ModelError::Checkpoint { reason };
    let mut r = BufReader::new(File::open(path)?);
    let mut got = [0u8; 8];
    r.read_exact(&mut got)?;
    if &got != magic {
        return Err(bad(format!("bad magic {got:?}, not a {what} checkpoint")));
    }
    let mut v4 = [0u8; 4];
    r.read_exact(&mut v4)?;
    let version = u32::from_le_bytes(v4);
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!(
            "unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let mut v8 = [0u8; 8];
    r.read_exact(&mut v8)?;
    let header_len = u64::from_le_bytes(v8) as usize;
    let mut text = vec![0u8; header_len];
    r.read_exact(&mut text)?;
    let text = String::from_utf8(text).map_err(|e| bad(format!("header not UTF-8: {e}")))?;
    Ok((text, BlobBody { r }))
}

pub fn save_model(model: &Model, path: &Path) -> Result<(), ModelError> {
    let header = CheckpointHeader {
        config: model.config.clone(),
        stats: model.stats.clone(),
        tensors: model
            .params
            .names()
            .iter()
            .zip(model.params.tensors())
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let text = toml::to_string(&header).map_err(|e| ModelError::Checkpoint {
        reason: format!("header encode: {e}"),
    })?;
    write_blob(path, CHECKPOINT_MAGIC, &text, model.params.tensors())
}

pub fn load_model(path: &Path) -> Result<Model, ModelError> {
    let bad = |reason: String| ModelError::Checkpoint { reason };
    let (text, mut body) = open_blob(path, CHECKPOINT_MAGIC, "model")?;
    let header: CheckpointHeader =
        toml::from_str(&text).map_err(|e| bad(format!("header parse: {e}")))?;
    header.config.validate()?;

    let expected = tensor_specs(&header.config);
    if expected.len() != header.tensors.len() {
        return Err(bad(format!(
            "tensor count {} does not match the config's schema ({})",
            header.tensors.len(),
            expected.len()
        )));
    }
    for (spec, entry) in expected.iter().zip(&header.tensors) {
        if spec.name != entry.name || spec.shape != entry.shape {
            return Err(bad(format!(
                "tensor {:?} {:?} does not match the schema entry {:?} {:?}",
                entry.name, entry.shape, spec.name, spec.shape
            )));
        }
    }

    let mut names = Vec::with_capacity(expected.len());
    let mut tensors = Vec::with_capacity(expected.len());
    for spec in &expected {
        names.push(spec.name.clone());
        tensors.push(body.read_tensor(&spec.name, &spec.shape)?);
    }
    body.finish()?;
    Ok(Model {
        config: header.config,
        params: ModelParams::from_parts(names, tensors),
        stats: header.stats,
    })
}

/// One-line architecture summary for logs and manifests.
pub fn describe(model: &Model) -> String {
    let c = &model.config;
    let mut s = String::new();
    let _ = write!(
        s,
        "d_model={} heads={} enc={}{} dec={} c={} windows {}/{}/{} params={}",
        c.d_model,
        c.n_heads,
        c.encoder_layers,
        if c.distilling { "+distill" } else { "" },
        c.decoder_layers,
        c.c,
        c.l_x,
        c.l_token,
        c.l_y,
        model.params.param_count()
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::FLAG_CHANNEL;
    use rand::Rng as _;
    use std::collections::HashSet;

    fn toy_config() -> ModelConfig {
        ModelConfig {
            d_model: 16,
            n_heads: 2,
            encoder_layers: 2,
            distilling: true,
            decoder_layers: 1,
            c: 3.0,
            input_channels: NUM_CHANNELS,
            l_x: 32,
            l_token: 16,
            l_y: 8,
            seed: 5,
        }
    }

    fn random_window_tensors(config: &ModelConfig, seed: u64) -> (Tensor, Tensor) {
        let mut r = rng::seeded(seed);
        let enc = crate::autodiff::random_tensor(&[config.l_x, config.input_channels], &mut r);
        let dec =
            crate::autodiff::random_tensor(&[config.decoder_len(), config.input_channels], &mut r);
        (enc, dec)
    }

    fn run_forward(model: &Model, enc: &Tensor, dec: &Tensor) -> (Graph, ForwardPass) {
        let mut g = Graph::new();
        let ids = tape_params(&mut g, &model.params);
        let e = g.input(enc.clone());
        let d = g.input(dec.clone());
        let fwd = forward(&mut g, &model.config, &model.params, &ids, e, d).unwrap();
        (g, fwd)
    }

    /// Head weights are zero-initialized; give them signal so perturbation
    /// probes can see through to the outputs.
    fn randomize_heads(model: &mut Model) {
        let mut r = rng::seeded(99);
        let d = model.config.d_model;
        let w = crate::autodiff::random_tensor(&[d, OUTPUT_DIM], &mut r);
        model.params.set_tensor("head.w", w).unwrap();
        let b = crate::autodiff::random_tensor(&[OUTPUT_DIM], &mut r);
        model.params.set_tensor("head.b", b).unwrap();
    }

    #[test]
    fn default_config_is_valid() {
        let config = ModelConfig::default();
        config.validate().unwrap();
        assert_eq!(config.encoder_lengths(), vec![96, 48, 24]);
        assert_eq!(config.latent_len(), 24);
        assert_eq!(config.decoder_len(), 72);
    }

    #[test]
    fn config_validation_rejects_bad_combinations() {
        let mut c = ModelConfig::default();
        c.n_heads = 5;
        assert!(matches!(c.validate(), Err(ModelError::Config { .. })));

        let mut c = ModelConfig::default();
        c.l_token = 97;
        assert!(matches!(c.validate(), Err(ModelError::Config { .. })));

        let mut c = ModelConfig::default();
        c.c = 0.0;
        assert!(matches!(c.validate(), Err(ModelError::Config { .. })));

        // 8 → 4 → 2 → 1 → 0: the fifth layer would see an empty sequence.
        let mut c = ModelConfig::default();
        c.l_x = 8;
        c.l_token = 4;
        c.encoder_layers = 5;
        assert!(matches!(c.validate(), Err(ModelError::Config { .. })));
        c.encoder_layers = 4;
        c.validate().unwrap();
        assert_eq!(c.encoder_lengths(), vec![8, 4, 2, 1]);
    }

    #[test]
    fn encoder_lengths_without_distilling_stay_flat() {
        let mut c = ModelConfig::default();
        c.distilling = false;
        assert_eq!(c.encoder_lengths(), vec![96, 96, 96]);
        assert_eq!(c.latent_len(), 96);

        let mut c = ModelConfig::default();
        c.l_x = 10;
        c.l_token = 5;
        assert_eq!(c.encoder_lengths(), vec![10, 5, 2]);
    }

    #[test]
    fn parameter_enumeration_is_deterministic() {
        let a = Model::new(ModelConfig::default()).unwrap();
        let b = Model::new(ModelConfig::default()).unwrap();
        assert_eq!(a.params.names(), b.params.names());
        assert_eq!(a.params.param_count(), b.params.param_count());
        assert!(a.params.param_count() > 0);
        for (x, y) in a.params.tensors().iter().zip(b.params.tensors()) {
            assert_eq!(x.data(), y.data());
        }
        let unique: HashSet<&String> = a.params.names().iter().collect();
        assert_eq!(unique.len(), a.params.names().len());
        assert!(a.params.all_finite());
        // Zero-init heads, identity layer norms.
        assert!(a.params.tensor("head.w").unwrap().data().iter().all(|&v| v == 0.0));
        assert!(a.params.tensor("enc0.ln1.gamma").unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn zero_input_embeds_to_positional_code() {
        let config = toy_config();
        let model = Model::new(config.clone()).unwrap();
        let mut g = Graph::new();
        let ids = tape_params(&mut g, &model.params);
        let p = ParamIds {
            params: &model.params,
            ids: &ids,
        };
        let zero = g.input(Tensor::zeros(&[config.l_x, config.input_channels]));
        let emb = embed_graph(&mut g, zero, p.get("enc_embed.w")).unwrap();
        let pe = sinusoidal_encoding(config.l_x, config.d_model);
        assert_eq!(g.value(emb).data(), pe.data());
    }

    #[test]
    fn constant_rows_differ_only_by_position_code() {
        let config = toy_config();
        let model = Model::new(config.clone()).unwrap();
        let mut g = Graph::new();
        let ids = tape_params(&mut g, &model.params);
        let p = ParamIds {
            params: &model.params,
            ids: &ids,
        };
        // Every row carries the same content, so any difference between
        // embedded rows is the position code alone.
        let row: Vec<f64> = (0..config.input_channels).map(|k| 0.3 * k as f64 - 0.5).collect();
        let l = 12usize;
        let x = Tensor::new(
            vec![l, config.input_channels],
            row.iter().cycle().take(l * config.input_channels).copied().collect(),
        )
        .unwrap();
        let xid = g.input(x);
        let emb = embed_graph(&mut g, xid, p.get("enc_embed.w")).unwrap();
        let emb = g.value(emb);
        let pe = sinusoidal_encoding(l, config.d_model);
        let d = config.d_model;
        // (content + PE[t]) − PE[t] re-rounds, so compare to addition
        // round-off rather than bitwise.
        for t in 1..l {
            for j in 0..d {
                let content_t = emb.at2(t, j) - pe.at2(t, j);
                let content_0 = emb.at2(0, j) - pe.at2(0, j);
                assert!((content_t - content_0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_shapes_match_config() {
        let config = toy_config();
        let model = Model::new(config.clone()).unwrap();
        let (enc, dec) = random_window_tensors(&config, 1);
        let (g, fwd) = run_forward(&model, &enc, &dec);
        assert_eq!(g.value(fwd.latent).shape(), &[config.latent_len(), config.d_model]);
        assert_eq!(
            g.value(fwd.decoder_rows).shape(),
            &[config.decoder_len(), OUTPUT_DIM]
        );
        assert_eq!(g.value(fwd.prediction_norm).shape(), &[config.l_y, OUTPUT_DIM]);
        assert!(g.value(fwd.latent).all_finite());
    }

    #[test]
    fn forward_is_bit_deterministic_across_fresh_models() {
        let config = toy_config();
        let a = Model::new(config.clone()).unwrap();
        let b = Model::new(config.clone()).unwrap();
        let (enc, dec) = random_window_tensors(&config, 2);
        let (ga, fa) = run_forward(&a, &enc, &dec);
        let (gb, fb) = run_forward(&b, &enc, &dec);
        assert_eq!(ga.value(fa.latent).data(), gb.value(fb.latent).data());
        assert_eq!(
            ga.value(fa.decoder_rows).data(),
            gb.value(fb.decoder_rows).data()
        );
    }

    #[test]
    fn decoder_outputs_are_causal_in_decoder_inputs() {
        let config = toy_config();
        let mut model = Model::new(config.clone()).unwrap();
        randomize_heads(&mut model);
        let (enc, dec) = random_window_tensors(&config, 3);
        let (g0, f0) = run_forward(&model, &enc, &dec);
        let base = g0.value(f0.decoder_rows).clone();

        let cols = config.input_channels;
        for &j in &[config.l_token, config.decoder_len() - 2, config.decoder_len() - 1] {
            let mut bumped = dec.clone();
            for ch in 0..cols {
                bumped.data_mut()[j * cols + ch] += 0.7 + ch as f64;
            }
            let (g1, f1) = run_forward(&model, &enc, &bumped);
            let after = g1.value(f1.decoder_rows);
            for i in 0..j {
                for a in 0..OUTPUT_DIM {
                    let delta = (after.at2(i, a) - base.at2(i, a)).abs();
                    assert!(
                        delta <= 1e-12,
                        "row {i} moved by {delta:e} after perturbing row {j}"
                    );
                }
            }
            // Sanity: the perturbed row itself must move.
            let moved = (0..OUTPUT_DIM).any(|a| (after.at2(j, a) - base.at2(j, a)).abs() > 1e-9);
            assert!(moved, "perturbing row {j} had no effect at all");
        }
    }

    #[test]
    fn encoder_changes_reach_every_decoder_row() {
        let config = toy_config();
        let mut model = Model::new(config.clone()).unwrap();
        randomize_heads(&mut model);
        let (enc, dec) = random_window_tensors(&config, 4);
        let (g0, f0) = run_forward(&model, &enc, &dec);
        let base = g0.value(f0.decoder_rows).clone();

        // Cross-attention is unmasked, so a change anywhere in the encoder
        // span should propagate to every decoder row.
        let mut bumped = enc.clone();
        for ch in 0..config.input_channels {
            bumped.data_mut()[ch] += 1.3;
        }
        let (g1, f1) = run_forward(&model, &bumped, &dec);
        let after = g1.value(f1.decoder_rows);
        for i in 0..config.decoder_len() {
            let moved = (0..OUTPUT_DIM).any(|a| (after.at2(i, a) - base.at2(i, a)).abs() > 1e-12);
            assert!(moved, "decoder row {i} ignored the encoder change");
        }
    }

    #[test]
    fn graph_size_is_independent_of_horizon() {
        // One pass decodes the whole horizon: the number of taped
        // operations must not grow with L_y (an autoregressive decoder
        // would re-run the stack L_y times).
        let counts: Vec<usize> = [8usize, 16, 32]
            .iter()
            .map(|&l_y| {
                let mut config = toy_config();
                config.l_y = l_y;
                let model = Model::new(config.clone()).unwrap();
                let (enc, dec) = random_window_tensors(&config, 5);
                let (g, _) = run_forward(&model, &enc, &dec);
                g.node_count()
            })
            .collect();
        assert_eq!(counts[0], counts[1]);
        assert_eq!(counts[1], counts[2]);
    }

    fn raw_window(config: &ModelConfig, seed: u64) -> SequenceWindow {
        let mut r = rng::seeded(seed);
        let l_dec = config.decoder_len();
        let mut enc = Tensor::zeros(&[config.l_x, NUM_CHANNELS]);
        for t in 0..config.l_x {
            for ch in 0..NUM_CHANNELS {
                enc.data_mut()[t * NUM_CHANNELS + ch] = match ch {
                    0..=2 => 0.05 * (0.1 * t as f64 + ch as f64).sin(),
                    FLAG_CHANNEL => 0.0,
                    4 => 0.1,
                    5 => 20.0 + r.random::<f64>(),
                    _ => 2.0,
                };
            }
        }
        let mut dec = Tensor::zeros(&[l_dec, NUM_CHANNELS]);
        for t in 0..l_dec {
            for ch in 0..NUM_CHANNELS {
                let future = t >= config.l_token;
                dec.data_mut()[t * NUM_CHANNELS + ch] = match ch {
                    0..=2 if !future => 0.05 * (0.1 * t as f64 + ch as f64).sin(),
                    0..=2 => 0.0,
                    FLAG_CHANNEL => 0.0,
                    4 => 0.1,
                    5 => 20.0,
                    _ => 2.0,
                };
            }
        }
        let target = Tensor::zeros(&[config.l_y, OUTPUT_DIM]);
        let clean = Tensor::zeros(&[config.l_x, OUTPUT_DIM]);
        SequenceWindow {
            encoder_input: enc,
            decoder_input: dec,
            target,
            encoder_clean: clean,
            dt: 1.0 / 30.0,
        }
    }

    fn toy_stats() -> NormStats {
        NormStats {
            pos_mean: [0.01, -0.02, 0.03],
            pos_std: [0.04, 0.05, 0.06],
            net_mean: [0.1, 20.0, 2.0],
            net_std: [0.05, 4.0, 0.8],
        }
    }

    #[test]
    fn untrained_prediction_is_the_denormalized_zero() {
        let config = toy_config();
        let mut model = Model::new(config.clone()).unwrap();
        model.stats = Some(toy_stats());
        let window = raw_window(&config, 6);
        let out = predict(&model, &window, None).unwrap();
        // Zero output head ⇒ normalized prediction is exactly zero ⇒
        // meters prediction is exactly the position mean.
        let stats = toy_stats();
        for t in 0..config.l_y {
            for a in 0..OUTPUT_DIM {
                assert_eq!(out.positions.at2(t, a), stats.pos_mean[a]);
            }
        }
        let dt = window.dt;
        for (i, &ts) in out.timestamps.iter().enumerate() {
            assert_eq!(ts, (config.l_x + i) as f64 * dt);
        }
    }

    #[test]
    fn predict_without_stats_is_an_error() {
        let config = toy_config();
        let model = Model::new(config.clone()).unwrap();
        let window = raw_window(&config, 7);
        assert!(matches!(
            predict(&model, &window, None),
            Err(ModelError::MissingStats)
        ));
    }

    #[test]
    fn all_lost_window_predicts_finite_positions() {
        let config = toy_config();
        let mut model = Model::new(config.clone()).unwrap();
        randomize_heads(&mut model);
        model.stats = Some(toy_stats());
        let mut window = raw_window(&config, 8);
        // Nothing received: zero positions, loss flag high everywhere.
        for t in 0..config.l_x {
            for ch in 0..NUM_CHANNELS {
                let v = match ch {
                    0..=2 => 0.0,
                    FLAG_CHANNEL => 1.0,
                    4 => 1.0,
                    5 => 80.0,
                    _ => 10.0,
                };
                window.encoder_input.data_mut()[t * NUM_CHANNELS + ch] = v;
            }
        }
        let out = predict(&model, &window, None).unwrap();
        assert!(out.positions.all_finite());
    }

    #[test]
    fn latency_override_changes_the_prediction() {
        let config = toy_config();
        let mut model = Model::new(config.clone()).unwrap();
        randomize_heads(&mut model);
        model.stats = Some(toy_stats());
        let window = raw_window(&config, 9);
        let calm = NetworkFeatures {
            loss_rate: vec![0.05; config.l_y],
            latency_ms: vec![10.0; config.l_y],
            jitter_ms: vec![1.0; config.l_y],
        };
        let stormy = NetworkFeatures {
            loss_rate: vec![0.05; config.l_y],
            latency_ms: vec![60.0; config.l_y],
            jitter_ms: vec![1.0; config.l_y],
        };
        let a = predict(&model, &window, Some(&calm)).unwrap();
        let b = predict(&model, &window, Some(&stormy)).unwrap();
        assert_ne!(a.positions.data(), b.positions.data());

        let short = NetworkFeatures {
            loss_rate: vec![0.0; 2],
            latency_ms: vec![0.0; 2],
            jitter_ms: vec![0.0; 2],
        };
        assert!(matches!(
            predict(&model, &window, Some(&short)),
            Err(ModelError::Shape { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trips_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let config = toy_config();
        let mut model = Model::new(config.clone()).unwrap();
        randomize_heads(&mut model);
        model.stats = Some(toy_stats());
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.stats, model.stats);
        assert_eq!(loaded.params.names(), model.params.names());
        for (a, b) in loaded.params.tensors().iter().zip(model.params.tensors()) {
            assert_eq!(a.shape(), b.shape());
            let same = a
                .data()
                .iter()
                .zip(b.data())
                .all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same);
        }
        let window = raw_window(&config, 10);
        let before = predict(&model, &window, None).unwrap();
        let after = predict(&loaded, &window, None).unwrap();
        assert_eq!(before.positions.data(), after.positions.data());
    }

    #[test]
    fn checkpoint_rejects_garbage() {
        let dir = tempfile::tempdir().unwrap();

        let bad_magic = dir.path().join("bad.ckpt");
        std::fs::write(&bad_magic, b"NOTAMODELxxxxxxxxxxxx").unwrap();
        assert!(matches!(
            load_model(&bad_magic),
            Err(ModelError::Checkpoint { .. })
        ));

        let config = toy_config();
        let mut model = Model::new(config).unwrap();
        model.stats = Some(toy_stats());
        let full = dir.path().join("full.ckpt");
        save_model(&model, &full).unwrap();
        let bytes = std::fs::read(&full).unwrap();

        let truncated = dir.path().join("short.ckpt");
        std::fs::write(&truncated, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            load_model(&truncated),
            Err(ModelError::Checkpoint { .. })
        ));

        let mut wrong = bytes.clone();
        wrong[8] = 9; // version field
        let wrong_version = dir.path().join("version.ckpt");
        std::fs::write(&wrong_version, &wrong).unwrap();
        assert!(matches!(
            load_model(&wrong_version),
            Err(ModelError::Checkpoint { .. })
        ));

        let mut padded = bytes;
        padded.push(0);
        let trailing = dir.path().join("trailing.ckpt");
        std::fs::write(&trailing, &padded).unwrap();
        assert!(matches!(
            load_model(&trailing),
            Err(ModelError::Checkpoint { .. })
        ));
    }

    #[test]
    fn describe_mentions_size_and_windows() {
        let model = Model::new(ModelConfig::default()).unwrap();
        let s = describe(&model);
        assert!(s.contains("d_model=64"));
        assert!(s.contains("96/48/24"));
    }
}
