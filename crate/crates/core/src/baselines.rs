//! Reference predictors the transformer is benchmarked against: two
//! closed-form extrapolators (zero-order hold, linear) and three small
//! trainable sequence models (Elman RNN, LSTM, dilated-causal TCN).
//!
//! The trainable baselines read the same window channels as the main
//! model, emit the horizon through a linear head, and train on the plain
//! position loss under the exact optimizer protocol from [`crate::train`]
//! — same defaults, same seeded shuffling, same early stopping — so the
//! comparison isolates the architecture. Their hidden sizes are chosen to
//! match the main model's parameter count, so it is not a capacity
//! comparison either.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autodiff::{
    grad_check_at, random_tensor, AutodiffError, ConvPadding, Graph, ValueId,
};
use crate::data::{
    NormStats, SequenceWindow, WindowDataset, FLAG_CHANNEL, NUM_CHANNELS, POS_CHANNELS,
};
use crate::model::{
    open_blob, tape_params, write_blob, Init, ModelConfig, ModelError, ModelParams, Prediction,
    TensorEntry, TensorSpec, OUTPUT_DIM,
};
use crate::objective::{position_loss, LossBreakdown, ObjectiveError};
use crate::rng;
use crate::tensor::Tensor;
use crate::train::{train_core, OptimizerConfig, TrainReport};

pub(crate) const BASELINE_MAGIC: &[u8; 8] = b"TELEOPBL";
const INIT_STREAM: u64 = 12;

/// TCN dilation schedule; each block holds two convolutions at the same
/// dilation plus a residual connection.
const TCN_DILATIONS: [usize; 3] = [1, 2, 4];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineKind {
    ZeroOrderHold,
    LinearExtrapolation,
    ElmanRnn,
    Lstm,
    Tcn,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 5] = [
        BaselineKind::ZeroOrderHold,
        BaselineKind::LinearExtrapolation,
        BaselineKind::ElmanRnn,
        BaselineKind::Lstm,
        BaselineKind::Tcn,
    ];

    pub const TRAINABLE: [BaselineKind; 3] =
        [BaselineKind::ElmanRnn, BaselineKind::Lstm, BaselineKind::Tcn];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::ZeroOrderHold => "zero-order-hold",
            BaselineKind::LinearExtrapolation => "linear-extrapolation",
            BaselineKind::ElmanRnn => "elman-rnn",
            BaselineKind::Lstm => "lstm",
            BaselineKind::Tcn => "tcn",
        }
    }

    pub fn parse(s: &str) -> Option<BaselineKind> {
        match s {
            "zero-order-hold" | "hold" | "zoh" => Some(BaselineKind::ZeroOrderHold),
            "linear-extrapolation" | "linear" => Some(BaselineKind::LinearExtrapolation),
            "elman-rnn" | "rnn" | "elman" => Some(BaselineKind::ElmanRnn),
            "lstm" => Some(BaselineKind::Lstm),
            "tcn" => Some(BaselineKind::Tcn),
            _ => None,
        }
    }

    pub fn trainable(self) -> bool {
        matches!(
            self,
            BaselineKind::ElmanRnn | BaselineKind::Lstm | BaselineKind::Tcn
        )
    }
}

/// Lengths mirror [`ModelConfig`] so a baseline consumes the same
/// windows; `hidden` is the RNN/LSTM state width or the TCN channel
/// count (0 for the closed-form kinds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub kind: BaselineKind,
    pub hidden: usize,
    pub input_channels: usize,
    pub l_x: usize,
    pub l_token: usize,
    pub l_y: usize,
    pub seed: u64,
}

impl BaselineConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: String| Err(ModelError::Config { reason });
        if self.kind.trainable() && self.hidden == 0 {
            return fail(format!("{} needs hidden > 0", self.kind.name()));
        }
        if self.input_channels != NUM_CHANNELS {
            return fail(format!(
                "baselines read the standard {NUM_CHANNELS}-channel windows, got {}",
                self.input_channels
            ));
        }
        if self.l_x == 0 || self.l_y == 0 {
            return fail("l_x and l_y must be positive".into());
        }
        if self.l_token > self.l_x {
            return fail(format!(
                "start token length {} exceeds the encoder span {}",
                self.l_token, self.l_x
            ));
        }
        Ok(())
    }

    /// Baseline sized to the same parameter budget as `model` (nearest
    /// hidden width), with matching window lengths and seed.
    pub fn matched(kind: BaselineKind, model: &ModelConfig) -> Result<BaselineConfig, ModelError> {
        model.validate()?;
        let mut config = BaselineConfig {
            kind,
            hidden: 0,
            input_channels: model.input_channels,
            l_x: model.l_x,
            l_token: model.l_token,
            l_y: model.l_y,
            seed: model.seed,
        };
        if !kind.trainable() {
            return Ok(config);
        }
        let target = ModelParams::init(model).param_count() as i64;
        let mut best = (i64::MAX, 1usize);
        for h in 1..=4096 {
            config.hidden = h;
            let count = config.param_count() as i64;
            let gap = (count - target).abs();
            if gap < best.0 {
                best = (gap, h);
            }
            if count > target {
                break;
            }
        }
        config.hidden = best.1;
        Ok(config)
    }

    pub fn param_count(&self) -> usize {
        tensor_specs(self)
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }

    /// Total sequence length seen by a trainable baseline: the encoder
    /// span followed by the horizon's placeholder rows.
    fn seq_len(&self) -> usize {
        self.l_x + self.l_y
    }
}

/// Parameter schema per kind, in storage order (the checkpoint walks
/// this list). Output heads start at zero so the untrained prediction is
/// the normalized mean, matching the main model's convention.
fn tensor_specs(config: &BaselineConfig) -> Vec<TensorSpec> {
    let c = config.input_channels;
    let h = config.hidden;
    let mut out = Vec::new();
    match config.kind {
        BaselineKind::ZeroOrderHold | BaselineKind::LinearExtrapolation => return out,
        BaselineKind::ElmanRnn => {
            out.push(TensorSpec::new("rnn.wx", vec![c, h], Init::FanIn(c)));
            out.push(TensorSpec::new("rnn.wh", vec![h, h], Init::FanIn(h)));
            out.push(TensorSpec::new("rnn.b", vec![h], Init::Zeros));
        }
        BaselineKind::Lstm => {
            for gate in ["i", "f", "g", "o"] {
                out.push(TensorSpec::new(format!("lstm.wx_{gate}"), vec![c, h], Init::FanIn(c)));
                out.push(TensorSpec::new(format!("lstm.wh_{gate}"), vec![h, h], Init::FanIn(h)));
                // Forget bias starts at one, the usual trick to keep the
                // cell remembering early in training.
                let init = if gate == "f" { Init::Ones } else { Init::Zeros };
                out.push(TensorSpec::new(format!("lstm.b_{gate}"), vec![h], init));
            }
        }
        BaselineKind::Tcn => {
            for (i, _) in TCN_DILATIONS.iter().enumerate() {
                let c_in = if i == 0 { c } else { h };
                let pre = format!("tcn{i}");
                out.push(TensorSpec::new(format!("{pre}.w1"), vec![3, c_in, h], Init::FanIn(3 * c_in)));
                out.push(TensorSpec::new(format!("{pre}.b1"), vec![h], Init::Zeros));
                out.push(TensorSpec::new(format!("{pre}.w2"), vec![3, h, h], Init::FanIn(3 * h)));
                out.push(TensorSpec::new(format!("{pre}.b2"), vec![h], Init::Zeros));
                if i == 0 {
                    // 1×1 projection so the residual can cross the
                    // channel-count change.
                    out.push(TensorSpec::new(format!("{pre}.res"), vec![1, c, h], Init::FanIn(c)));
                }
            }
        }
    }
    out.push(TensorSpec::new("head.w", vec![h, OUTPUT_DIM], Init::Zeros));
    out.push(TensorSpec::new("head.b", vec![OUTPUT_DIM], Init::Zeros));
    out
}

/// A trainable baseline: parameters plus the normalization statistics it
/// was trained with.
#[derive(Debug, Clone)]
pub struct Baseline {
    pub config: BaselineConfig,
    pub params: ModelParams,
    pub stats: Option<NormStats>,
}

impl Baseline {
    pub fn new(config: BaselineConfig) -> Result<Baseline, ModelError> {
        config.validate()?;
        if !config.kind.trainable() {
            return Err(ModelError::Config {
                reason: format!("{} has no parameters to initialize", config.kind.name()),
            });
        }
        let mut r = rng::stream(config.seed, INIT_STREAM);
        let params = ModelParams::from_specs(&tensor_specs(&config), &mut r);
        Ok(Baseline {
            config,
            params,
            stats: None,
        })
    }

    pub fn describe(&self) -> String {
        format!(
            "{} hidden={} windows {}/{}/{} params={}",
            self.config.kind.name(),
            self.config.hidden,
            self.config.l_x,
            self.config.l_token,
            self.config.l_y,
            self.params.param_count()
        )
    }
}

/// Output of the closed-form extrapolators. `fallback` marks the
/// degenerate windows: for hold, nothing was received and the output is
/// zero; for linear, fewer than two samples were received and the output
/// degrades to hold.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePrediction {
    /// `[L_y, 3]`, in whatever space the window is in.
    pub positions: Tensor,
    pub fallback: bool,
}

fn received_indices(w: &SequenceWindow) -> Vec<usize> {
    let cols = w.encoder_input.shape()[1];
    let rows = w.encoder_input.shape()[0];
    (0..rows)
        .filter(|&t| w.encoder_input.data()[t * cols + FLAG_CHANNEL] == 0.0)
        .collect()
}

fn encoder_position(w: &SequenceWindow, t: usize) -> [f64; 3] {
    let cols = w.encoder_input.shape()[1];
    let row = &w.encoder_input.data()[t * cols..(t + 1) * cols];
    [row[POS_CHANNELS.start], row[POS_CHANNELS.start + 1], row[POS_CHANNELS.start + 2]]
}

fn horizon_len(w: &SequenceWindow) -> usize {
    w.target.shape()[0]
}

/// Zero-order hold: repeat the last received encoder sample across the
/// horizon. With nothing received it predicts the origin and says so.
pub fn hold_predict(w: &SequenceWindow) -> BaselinePrediction {
    let l_y = horizon_len(w);
    match received_indices(w).last() {
        Some(&t) => {
            let p = encoder_position(w, t);
            let data = (0..l_y).flat_map(|_| p).collect();
            BaselinePrediction {
                positions: Tensor::new(vec![l_y, 3], data).expect("counted"),
                fallback: false,
            }
        }
        None => BaselinePrediction {
            positions: Tensor::zeros(&[l_y, 3]),
            fallback: true,
        },
    }
}

/// First-order extrapolation: the line through the last two received
/// encoder samples, evaluated at the horizon steps. Exact whenever the
/// trajectory is affine in time, regardless of which samples were lost.
/// Fewer than two received samples degrade to [`hold_predict`].
pub fn linear_predict(w: &SequenceWindow, dt: f64) -> BaselinePrediction {
    let received = received_indices(w);
    if received.len() < 2 {
        return BaselinePrediction {
            fallback: true,
            ..hold_predict(w)
        };
    }
    let l_x = w.encoder_input.shape()[0];
    let l_y = horizon_len(w);
    let (ta, tb) = (received[received.len() - 2], received[received.len() - 1]);
    let pa = encoder_position(w, ta);
    let pb = encoder_position(w, tb);
    let span = (tb - ta) as f64 * dt;
    let mut data = Vec::with_capacity(l_y * 3);
    for k in 0..l_y {
        let ahead = (l_x + k - tb) as f64 * dt;
        for a in 0..3 {
            data.push(pb[a] + (pb[a] - pa[a]) * ahead / span);
        }
    }
    BaselinePrediction {
        positions: Tensor::new(vec![l_y, 3], data).expect("counted"),
        fallback: false,
    }
}

/// Encoder rows then horizon placeholder rows, `[l_x + l_y, channels]`
/// — the input sequence every trainable baseline consumes.
fn stacked_input(config: &BaselineConfig, w: &SequenceWindow) -> Result<Tensor, ModelError> {
    let c = config.input_channels;
    if w.encoder_input.shape() != [config.l_x, c] {
        return Err(ModelError::Shape {
            context: "baseline encoder input",
            got: w.encoder_input.shape().to_vec(),
            want: vec![config.l_x, c],
        });
    }
    let dec_rows = config.l_token + config.l_y;
    if w.decoder_input.shape() != [dec_rows, c] {
        return Err(ModelError::Shape {
            context: "baseline decoder input",
            got: w.decoder_input.shape().to_vec(),
            want: vec![dec_rows, c],
        });
    }
    let mut data = Vec::with_capacity(config.seq_len() * c);
    data.extend_from_slice(w.encoder_input.data());
    data.extend_from_slice(&w.decoder_input.data()[config.l_token * c..]);
    Ok(Tensor::new(vec![config.seq_len(), c], data).expect("counted"))
}

fn apply_head(
    g: &mut Graph,
    params: &ModelParams,
    ids: &[ValueId],
    x: ValueId,
) -> Result<ValueId, ModelError> {
    let w = ids[params.position("head.w")];
    let b = ids[params.position("head.b")];
    let y = g.matmul(x, w)?;
    Ok(g.add_row_broadcast(y, b)?)
}

fn rnn_forward(
    g: &mut Graph,
    config: &BaselineConfig,
    params: &ModelParams,
    ids: &[ValueId],
    x: ValueId,
) -> Result<ValueId, ModelError> {
    let wx = ids[params.position("rnn.wx")];
    let wh = ids[params.position("rnn.wh")];
    let b = ids[params.position("rnn.b")];
    let total = config.seq_len();
    let mut h = g.input(Tensor::zeros(&[1, config.hidden]));
    let mut outs = Vec::with_capacity(config.l_y);
    for t in 0..total {
        let xt = g.slice_rows(x, t, t + 1)?;
        let from_x = g.matmul(xt, wx)?;
        let from_h = g.matmul(h, wh)?;
        let s = g.add(from_x, from_h)?;
        let s = g.add_row_broadcast(s, b)?;
        h = g.tanh(s);
        if t + config.l_y >= total {
            outs.push(h);
        }
    }
    let hs = g.concat_rows(&outs)?;
    apply_head(g, params, ids, hs)
}

fn lstm_forward(
    g: &mut Graph,
    config: &BaselineConfig,
    params: &ModelParams,
    ids: &[ValueId],
    x: ValueId,
) -> Result<ValueId, ModelError> {
    let gate = |name: &str| -> (ValueId, ValueId, ValueId) {
        (
            ids[params.position(&format!("lstm.wx_{name}"))],
            ids[params.position(&format!("lstm.wh_{name}"))],
            ids[params.position(&format!("lstm.b_{name}"))],
        )
    };
    let (wx_i, wh_i, b_i) = gate("i");
    let (wx_f, wh_f, b_f) = gate("f");
    let (wx_g, wh_g, b_g) = gate("g");
    let (wx_o, wh_o, b_o) = gate("o");

    let total = config.seq_len();
    let mut h = g.input(Tensor::zeros(&[1, config.hidden]));
    let mut cell = g.input(Tensor::zeros(&[1, config.hidden]));
    let mut outs = Vec::with_capacity(config.l_y);
    for t in 0..total {
        let xt = g.slice_rows(x, t, t + 1)?;
        let mut pre = |wx: ValueId, wh: ValueId, b: ValueId| -> Result<ValueId, AutodiffError> {
            let a = g.matmul(xt, wx)?;
            let c = g.matmul(h, wh)?;
            let s = g.add(a, c)?;
            g.add_row_broadcast(s, b)
        };
        let zi = pre(wx_i, wh_i, b_i)?;
        let zf = pre(wx_f, wh_f, b_f)?;
        let zg = pre(wx_g, wh_g, b_g)?;
        let zo = pre(wx_o, wh_o, b_o)?;
        let i_gate = g.sigmoid(zi);
        let f_gate = g.sigmoid(zf);
        let g_gate = g.tanh(zg);
        let o_gate = g.sigmoid(zo);
        let keep = g.mul(f_gate, cell)?;
        let write = g.mul(i_gate, g_gate)?;
        cell = g.add(keep, write)?;
        let squashed = g.tanh(cell);
        h = g.mul(o_gate, squashed)?;
        if t + config.l_y >= total {
            outs.push(h);
        }
    }
    let hs = g.concat_rows(&outs)?;
    apply_head(g, params, ids, hs)
}

fn tcn_forward(
    g: &mut Graph,
    config: &BaselineConfig,
    params: &ModelParams,
    ids: &[ValueId],
    x: ValueId,
) -> Result<ValueId, ModelError> {
    let mut cur = x;
    for (i, &dilation) in TCN_DILATIONS.iter().enumerate() {
        let pre = format!("tcn{i}");
        let w1 = ids[params.position(&format!("{pre}.w1"))];
        let b1 = ids[params.position(&format!("{pre}.b1"))];
        let w2 = ids[params.position(&format!("{pre}.w2"))];
        let b2 = ids[params.position(&format!("{pre}.b2"))];
        let c1 = g.conv1d(cur, w1, ConvPadding::Causal { dilation })?;
        let c1 = g.add_row_broadcast(c1, b1)?;
        let a1 = g.relu(c1);
        let c2 = g.conv1d(a1, w2, ConvPadding::Causal { dilation })?;
        let c2 = g.add_row_broadcast(c2, b2)?;
        let a2 = g.relu(c2);
        let res = if i == 0 {
            let rw = ids[params.position(&format!("{pre}.res"))];
            g.conv1d(cur, rw, ConvPadding::Causal { dilation: 1 })?
        } else {
            cur
        };
        cur = g.add(a2, res)?;
    }
    let total = config.seq_len();
    let tail = g.slice_rows(cur, total - config.l_y, total)?;
    apply_head(g, params, ids, tail)
}

/// Normalized-space horizon `[l_y, 3]` for a trainable baseline.
pub(crate) fn forward_baseline(
    g: &mut Graph,
    config: &BaselineConfig,
    params: &ModelParams,
    ids: &[ValueId],
    x: ValueId,
) -> Result<ValueId, ModelError> {
    match config.kind {
        BaselineKind::ElmanRnn => rnn_forward(g, config, params, ids, x),
        BaselineKind::Lstm => lstm_forward(g, config, params, ids, x),
        BaselineKind::Tcn => tcn_forward(g, config, params, ids, x),
        other => Err(ModelError::Config {
            reason: format!("{} is closed-form, not a network", other.name()),
        }),
    }
}

fn check_split(
    which: &'static str,
    ds: &WindowDataset,
    config: &BaselineConfig,
) -> Result<(), ModelError> {
    if ds.windows.is_empty() {
        return Err(ModelError::Config {
            reason: format!("{which} split is empty"),
        });
    }
    let s = &ds.spec;
    if s.l_x != config.l_x || s.l_token != config.l_token || s.l_y != config.l_y {
        return Err(ModelError::Config {
            reason: format!(
                "{which} split windows {}/{}/{} do not match the baseline's {}/{}/{}",
                s.l_x, s.l_token, s.l_y, config.l_x, config.l_token, config.l_y
            ),
        });
    }
    Ok(())
}

/// Denormalize a normalized-space horizon on the tape so the loss is in
/// meters, mirroring the main model's training convention.
fn denorm_on_tape(
    g: &mut Graph,
    stats: &NormStats,
    y_norm: ValueId,
) -> Result<ValueId, ModelError> {
    let sigma = g.input(Tensor::new(vec![3], stats.pos_std.to_vec()).expect("three"));
    let mu = g.input(Tensor::new(vec![3], stats.pos_mean.to_vec()).expect("three"));
    let scaled = g.mul_row_broadcast(y_norm, sigma)?;
    Ok(g.add_row_broadcast(scaled, mu)?)
}

fn mse_breakdown(g: &Graph, loss: ValueId) -> Result<LossBreakdown, ModelError> {
    let v = g
        .value(loss)
        .scalar_value()
        .expect("position_loss is scalar");
    if !v.is_finite() {
        return Err(ModelError::Objective(ObjectiveError::NonFiniteTerm {
            term: "position",
        }));
    }
    Ok(LossBreakdown {
        position: v,
        total: v,
        ..LossBreakdown::default()
    })
}

/// Train on plain position MSE under the shared optimizer protocol.
/// Splits must be normalized with the training statistics; the baseline
/// keeps them for inference, as the main model does.
pub fn train_baseline(
    baseline: &mut Baseline,
    train_ds: &WindowDataset,
    val_ds: &WindowDataset,
    opt: &OptimizerConfig,
) -> Result<TrainReport, ModelError> {
    baseline.config.validate()?;
    opt.validate()?;
    check_split("train", train_ds, &baseline.config)?;
    check_split("validation", val_ds, &baseline.config)?;
    let stats = train_ds.stats.clone().ok_or_else(|| ModelError::Config {
        reason: "training split must be normalized (run the normalization step first)".into(),
    })?;
    if val_ds.stats.as_ref() != Some(&stats) {
        return Err(ModelError::Config {
            reason: "validation split must be normalized with the training statistics".into(),
        });
    }
    baseline.stats = Some(stats.clone());

    let config = baseline.config;
    let stack = |ds: &WindowDataset| -> Result<Vec<Tensor>, ModelError> {
        ds.windows.iter().map(|w| stacked_input(&config, w)).collect()
    };
    let train_in = stack(train_ds)?;
    let val_in = stack(val_ds)?;

    train_core(
        &mut baseline.params,
        train_ds.windows.len(),
        val_ds.windows.len(),
        opt,
        &mut |g, params, ids, is_val, wi| {
            let (ds, input) = if is_val {
                (val_ds, &val_in[wi])
            } else {
                (train_ds, &train_in[wi])
            };
            let x = g.input(input.clone());
            let y_norm = forward_baseline(g, &config, params, ids, x)?;
            let p_hat = denorm_on_tape(g, &stats, y_norm)?;
            let target = g.input(ds.windows[wi].target.clone());
            let loss = position_loss(g, p_hat, target)?;
            let bd = mse_breakdown(g, loss)?;
            Ok((loss, bd))
        },
    )
}

fn baseline_predict_inner(
    b: &Baseline,
    window: &SequenceWindow,
    normalized: bool,
) -> Result<Prediction, ModelError> {
    let stats = b.stats.as_ref().ok_or(ModelError::MissingStats)?;
    let w = if normalized {
        window.clone()
    } else {
        crate::data::normalize_windows(std::slice::from_ref(window), stats)
            .pop()
            .expect("one window in, one out")
    };
    let mut g = Graph::new();
    let ids = tape_params(&mut g, &b.params);
    let xin = stacked_input(&b.config, &w)?;
    let x = g.input(xin);
    let y = forward_baseline(&mut g, &b.config, &b.params, &ids, x)?;
    let y_norm = g.value(y);

    let mut positions = Tensor::zeros(&[b.config.l_y, OUTPUT_DIM]);
    for t in 0..b.config.l_y {
        for a in 0..OUTPUT_DIM {
            positions.data_mut()[t * OUTPUT_DIM + a] =
                y_norm.at2(t, a) * stats.pos_std[a] + stats.pos_mean[a];
        }
    }
    let timestamps = (0..b.config.l_y)
        .map(|i| (b.config.l_x + i) as f64 * w.dt)
        .collect();
    Ok(Prediction {
        positions,
        timestamps,
    })
}

/// Predict from a raw (meter-space) window with a trained baseline.
pub fn predict_baseline(b: &Baseline, window: &SequenceWindow) -> Result<Prediction, ModelError> {
    baseline_predict_inner(b, window, false)
}

/// Same for a window already in normalized space.
pub fn predict_baseline_normalized(
    b: &Baseline,
    window: &SequenceWindow,
) -> Result<Prediction, ModelError> {
    baseline_predict_inner(b, window, true)
}

#[derive(Serialize, Deserialize)]
struct BaselineHeader {
    config: BaselineConfig,
    stats: Option<NormStats>,
    tensors: Vec<TensorEntry>,
}

/// Same byte layout as the main model's checkpoint, under its own magic.
pub fn save_baseline(b: &Baseline, path: &Path) -> Result<(), ModelError> {
    let header = BaselineHeader {
        config: b.config,
        stats: b.stats.clone(),
        tensors: b
            .params
            .names()
            .iter()
            .zip(b.params.tensors())
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let text = toml::to_string(&header).map_err(|e| ModelError::Checkpoint {
        reason: format!("header encode: {e}"),
    })?;
    write_blob(path, BASELINE_MAGIC, &text, b.params.tensors())
}

pub fn load_baseline(path: &Path) -> Result<Baseline, ModelError> {
    let bad = |reason: String| ModelError::Checkpoint { reason };
    let (text, mut body) = open_blob(path, BASELINE_MAGIC, "baseline")?;
    let header: BaselineHeader =
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
    Ok(Baseline {
        config: header.config,
        params: ModelParams::from_parts(names, tensors),
        stats: header.stats,
    })
}

/// Central-difference check of the full baseline loss (forward, on-tape
/// denormalization, position MSE) on a tiny config. Returns the max
/// relative error over all parameter elements.
pub fn baseline_grad_check(kind: BaselineKind, seed: u64) -> Result<f64, ModelError> {
    if !kind.trainable() {
        return Err(ModelError::Config {
            reason: format!("{} has no gradients to check", kind.name()),
        });
    }
    let config = BaselineConfig {
        kind,
        hidden: 6,
        input_channels: NUM_CHANNELS,
        l_x: 12,
        l_token: 4,
        l_y: 3,
        seed,
    };
    let mut b = Baseline::new(config)?;
    // The head is zero at init; without signal there the loss is flat in
    // every upstream parameter and the check would be vacuous.
    let mut r = rng::stream(seed, 78);
    b.params.set_tensor(
        "head.w",
        random_tensor(&[config.hidden, OUTPUT_DIM], &mut r).map(|v| 0.3 * v),
    )?;
    b.params.set_tensor(
        "head.b",
        random_tensor(&[OUTPUT_DIM], &mut r).map(|v| 0.1 * v),
    )?;

    let stats = NormStats {
        pos_mean: [0.01, -0.02, 0.005],
        pos_std: [0.04, 0.05, 0.03],
        net_mean: [0.15, 22.0, 2.0],
        net_std: [0.08, 5.0, 0.7],
    };
    let x = random_tensor(&[config.seq_len(), NUM_CHANNELS], &mut r);
    let target = random_tensor(&[config.l_y, OUTPUT_DIM], &mut r).map(|v| 0.05 * v);

    let params = b.params.clone();
    let f = |g: &mut Graph, ids: &[ValueId]| -> Result<ValueId, AutodiffError> {
        let to_auto = |e: ModelError| AutodiffError::Invalid {
            op: "baseline_grad_check",
            reason: e.to_string(),
        };
        let xid = g.input(x.clone());
        let y = forward_baseline(g, &config, &params, ids, xid).map_err(to_auto)?;
        let p_hat = denorm_on_tape(g, &stats, y).map_err(to_auto)?;
        let t = g.input(target.clone());
        position_loss(g, p_hat, t).map_err(|e| AutodiffError::Invalid {
            op: "baseline_grad_check",
            reason: e.to_string(),
        })
    };
    Ok(grad_check_at(&f, params.tensors())?)
}

/// Append the baseline history in the same CSV layout as the main
/// trainer's (only the position column is live).
pub fn write_baseline_history_csv(
    history: &[crate::train::EpochRecord],
    path: &Path,
) -> std::io::Result<()> {
    crate::train::write_history_csv(history, path)
}

/// One-line summary used by run manifests.
pub fn describe_kind(kind: BaselineKind, config: Option<&BaselineConfig>) -> String {
    match config {
        Some(c) if kind.trainable() => format!(
            "{} hidden={} params={}",
            kind.name(),
            c.hidden,
            c.param_count()
        ),
        _ => format!("{} closed-form", kind.name()),
    }
}
