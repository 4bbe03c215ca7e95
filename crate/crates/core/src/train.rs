//! Mini-batch training of the predictor under the constrained objective:
//! adaptive-moment updates with global gradient clipping, per-epoch
//! reshuffling from a dedicated RNG stream, early stopping on validation
//! MSE with best-weights restore, and a per-term loss history.
//!
//! Everything is sequential and seeded, so a (config, data, seed) triple
//! reproduces the loss history bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::Path;

use rand::Rng as _;

use crate::autodiff::{grad_check_at, random_tensor, AutodiffError, Graph, ValueId};
use crate::data::{
    NetworkFeatures, NormStats, SequenceWindow, WindowDataset, NET_CHANNELS, NUM_CHANNELS,
};
use crate::model::{
    forward, tape_params, Model, ModelConfig, ModelError, ModelParams, OUTPUT_DIM,
};
use crate::objective::{
    encoder_aux_loss, total_loss, ConstraintLimits, LossBreakdown, ObjectiveError, ObjectiveWeights,
    PenaltyWeights, TotalLossTerms,
};
use crate::rng;
use crate::tensor::Tensor;

/// RNG stream id for batch shuffling; epoch `e` uses sub-stream
/// `SHUFFLE_STREAM + e`.
const SHUFFLE_STREAM: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm ceiling; gradients above it are rescaled.
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    /// Validation MSE must drop by more than this to count as improvement.
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: 1.0,
            batch_size: 16,
            epochs: 50,
            patience: 8,
            min_delta: 0.0,
            seed: 7,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |reason: String| Err(ModelError::Config { reason });
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                return fail(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return fail(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if !(self.clip_norm > 0.0) {
            return fail(format!("clip_norm must be positive, got {}", self.clip_norm));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return fail("batch_size and epochs must be positive".into());
        }
        if !(self.min_delta.is_finite() && self.min_delta >= 0.0) {
            return fail(format!("min_delta must be nonnegative, got {}", self.min_delta));
        }
        Ok(())
    }
}

/// One epoch of history: the mean per-window training breakdown plus the
/// validation totals used for early stopping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val_total: f64,
    /// Plain meter-space position MSE on the validation split — the early
    /// stopping signal.
    pub val_mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub stopped_early: bool,
}

/// Per-window quantities that live outside the tape: physical-unit
/// network features for the robustness term, the encoder-span mean
/// latency, and the clean positions subsampled to the latent length for
/// the auxiliary reconstruction.
struct WindowPrep {
    net: NetworkFeatures,
    mean_latency_ms: f64,
    clean_sub: Tensor,
}

fn denorm_net(stats: &NormStats, k: usize, z: f64) -> f64 {
    let raw = z * stats.net_std[k] + stats.net_mean[k];
    // Round-trip error can push the physical features a hair outside
    // their domains; clamp rather than trip downstream range checks.
    if k == 0 {
        raw.clamp(0.0, 1.0)
    } else {
        raw.max(0.0)
    }
}

fn prepare_window(w: &SequenceWindow, stats: &NormStats, config: &ModelConfig) -> WindowPrep {
    let cols = w.decoder_input.shape()[1];
    let mut net = NetworkFeatures {
        loss_rate: Vec::with_capacity(config.l_y),
        latency_ms: Vec::with_capacity(config.l_y),
        jitter_ms: Vec::with_capacity(config.l_y),
    };
    for t in config.l_token..config.decoder_len() {
        let row = &w.decoder_input.data()[t * cols..(t + 1) * cols];
        net.loss_rate.push(denorm_net(stats, 0, row[NET_CHANNELS.start]));
        net.latency_ms.push(denorm_net(stats, 1, row[NET_CHANNELS.start + 1]));
        net.jitter_ms.push(denorm_net(stats, 2, row[NET_CHANNELS.start + 2]));
    }

    let ecols = w.encoder_input.shape()[1];
    let mut lat_sum = 0.0;
    for t in 0..config.l_x {
        lat_sum += denorm_net(stats, 1, w.encoder_input.data()[t * ecols + NET_CHANNELS.start + 1]);
    }
    let mean_latency_ms = lat_sum / config.l_x as f64;

    let latent = config.latent_len();
    let stride = config.l_x / latent;
    let mut clean = Vec::with_capacity(latent * OUTPUT_DIM);
    for j in 0..latent {
        let t = j * stride;
        clean.extend_from_slice(&w.encoder_clean.data()[t * 3..(t + 1) * 3]);
    }
    WindowPrep {
        net,
        mean_latency_ms,
        clean_sub: Tensor::new(vec![latent, OUTPUT_DIM], clean).expect("counted"),
    }
}

/// Build one window's complete objective on the tape. `ids` are the
/// parameter leaves in schema order. The prediction is denormalized on
/// the tape so every term sees meters, matching the (meter-space)
/// targets.
#[allow(clippy::too_many_arguments)]
fn build_loss(
    g: &mut Graph,
    config: &ModelConfig,
    params: &ModelParams,
    ids: &[ValueId],
    stats: &NormStats,
    window: &SequenceWindow,
    prep: &WindowPrep,
    weights: &ObjectiveWeights,
    penalties: Option<(&ConstraintLimits, &PenaltyWeights)>,
) -> Result<(ValueId, LossBreakdown), ModelError> {
    let enc = g.input(window.encoder_input.clone());
    let dec = g.input(window.decoder_input.clone());
    let fwd = forward(g, config, params, ids, enc, dec)?;

    let sigma = g.input(Tensor::new(vec![3], stats.pos_std.to_vec()).expect("three"));
    let mu = g.input(Tensor::new(vec![3], stats.pos_mean.to_vec()).expect("three"));
    let scaled = g.mul_row_broadcast(fwd.prediction_norm, sigma)?;
    let p_hat = g.add_row_broadcast(scaled, mu)?;
    let target = g.input(window.target.clone());

    let aux = if weights.gamma1 > 0.0 || weights.gamma2 > 0.0 {
        let clean = g.input(prep.clean_sub.clone());
        let head_w = ids[params.position("aux_head.w")];
        let head_b = ids[params.position("aux_head.b")];
        Some(encoder_aux_loss(
            g,
            fwd.latent,
            head_w,
            head_b,
            clean,
            weights.gamma1,
            weights.gamma2,
            prep.mean_latency_ms,
            window.dt,
        )?)
    } else {
        None
    };

    let terms = TotalLossTerms {
        p_hat,
        p_true: target,
        dt: window.dt,
        net: Some(&prep.net),
        encoder_aux: aux,
        gripper: None,
        omega: None,
    };
    Ok(total_loss(g, &terms, weights, penalties)?)
}

fn add_breakdown(acc: &mut LossBreakdown, b: &LossBreakdown) {
    acc.position += b.position;
    acc.energy += b.energy;
    acc.smoothness += b.smoothness;
    acc.robustness += b.robustness;
    acc.decoder_energy += b.decoder_energy;
    acc.encoder_aux += b.encoder_aux;
    acc.penalties += b.penalties;
    acc.total += b.total;
}

fn scale_breakdown(acc: &mut LossBreakdown, factor: f64) {
    acc.position *= factor;
    acc.energy *= factor;
    acc.smoothness *= factor;
    acc.robustness *= factor;
    acc.decoder_energy *= factor;
    acc.encoder_aux *= factor;
    acc.penalties *= factor;
    acc.total *= factor;
}

fn check_dataset(
    which: &'static str,
    ds: &WindowDataset,
    config: &ModelConfig,
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
                "{which} split windows {}/{}/{} do not match the model's {}/{}/{}",
                s.l_x, s.l_token, s.l_y, config.l_x, config.l_token, config.l_y
            ),
        });
    }
    if config.input_channels != NUM_CHANNELS {
        return Err(ModelError::Config {
            reason: format!(
                "model expects {} input channels but windows carry {NUM_CHANNELS}",
                config.input_channels
            ),
        });
    }
    Ok(())
}

/// The optimizer protocol shared by the predictor and the trainable
/// baselines: adaptive-moment updates with bias correction, global-norm
/// clipping, seeded per-epoch shuffling, early stopping on validation
/// MSE, best-weights restore. `build` lays one window's loss on the tape
/// — it is handed the parameter set and its leaf ids and the window's
/// split and index, and must return the scalar loss node plus its
/// breakdown.
pub(crate) fn train_core(
    params: &mut ModelParams,
    n_train: usize,
    n_val: usize,
    opt: &OptimizerConfig,
    build: &mut dyn FnMut(
        &mut Graph,
        &ModelParams,
        &[ValueId],
        bool, // validation split?
        usize,
    ) -> Result<(ValueId, LossBreakdown), ModelError>,
) -> Result<TrainReport, ModelError> {
    opt.validate()?;
    let n_tensors = params.tensors().len();
    let zeros: Vec<Tensor> = params
        .tensors()
        .iter()
        .map(|t| Tensor::zeros(t.shape()))
        .collect();
    let mut m_state = zeros.clone();
    let mut v_state = zeros.clone();
    let mut step = 0u64;

    let mut history = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params = params.clone();
    let mut bad_epochs = 0usize;
    let mut stopped_early = false;

    for epoch in 0..opt.epochs {
        let mut order: Vec<usize> = (0..n_train).collect();
        let mut shuffle_rng = rng::stream(opt.seed, SHUFFLE_STREAM + epoch as u64);
        // Fisher-Yates.
        for i in (1..n_train).rev() {
            let j = shuffle_rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_terms = LossBreakdown::default();
        for (batch_no, chunk) in order.chunks(opt.batch_size).enumerate() {
            let diverged = |detail: String| ModelError::Diverged {
                epoch,
                batch: batch_no,
                detail,
            };
            let mut grad_acc = zeros.clone();
            let inv = 1.0 / chunk.len() as f64;
            for &wi in chunk {
                let mut g = Graph::new();
                let ids = tape_params(&mut g, params);
                let (total_id, bd) =
                    build(&mut g, params, &ids, false, wi).map_err(|e| match e {
                        ModelError::Objective(ObjectiveError::NonFiniteTerm { term }) => {
                            diverged(format!("window {wi}: the {term} term became non-finite"))
                        }
                        other => other,
                    })?;
                let grads = g
                    .backward(total_id)
                    .map_err(|e| diverged(format!("window {wi}: backward failed: {e}")))?;
                for (slot, &id) in grad_acc.iter_mut().zip(&ids) {
                    slot.axpy(inv, &grads.wrt(id)).expect("schema shapes agree");
                }
                add_breakdown(&mut epoch_terms, &bd);
            }

            let norm_sq: f64 = grad_acc
                .iter()
                .flat_map(|t| t.data().iter())
                .map(|v| v * v)
                .sum();
            let norm = norm_sq.sqrt();
            if !norm.is_finite() {
                return Err(diverged(format!("gradient norm became {norm}")));
            }
            let clip = if norm > opt.clip_norm {
                opt.clip_norm / norm
            } else {
                1.0
            };

            step += 1;
            let bc1 = 1.0 - opt.beta1.powi(step as i32);
            let bc2 = 1.0 - opt.beta2.powi(step as i32);
            for i in 0..n_tensors {
                let gd = grad_acc[i].data();
                let md = m_state[i].data_mut();
                let vd = v_state[i].data_mut();
                let pd = params.tensors_mut()[i].data_mut();
                for j in 0..pd.len() {
                    let gv = gd[j] * clip;
                    md[j] = opt.beta1 * md[j] + (1.0 - opt.beta1) * gv;
                    vd[j] = opt.beta2 * vd[j] + (1.0 - opt.beta2) * gv * gv;
                    let m_hat = md[j] / bc1;
                    let v_hat = vd[j] / bc2;
                    pd[j] -= opt.learning_rate * m_hat / (v_hat.sqrt() + opt.epsilon);
                }
            }
            if !params.all_finite() {
                return Err(diverged("a parameter became non-finite after the update".into()));
            }
        }
        scale_breakdown(&mut epoch_terms, 1.0 / n_train as f64);

        let mut val_total = 0.0;
        let mut val_mse = 0.0;
        for wi in 0..n_val {
            let mut g = Graph::new();
            let ids = tape_params(&mut g, params);
            let (_, bd) =
                build(&mut g, params, &ids, true, wi).map_err(|e| ModelError::Diverged {
                    epoch,
                    batch: 0,
                    detail: format!("validation: {e}"),
                })?;
            val_total += bd.total;
            val_mse += bd.position;
        }
        val_total /= n_val as f64;
        val_mse /= n_val as f64;

        history.push(EpochRecord {
            epoch,
            train: epoch_terms,
            val_total,
            val_mse,
        });

        if val_mse + opt.min_delta < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best_params = params.clone();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= opt.patience.max(1) {
                stopped_early = true;
                break;
            }
        }
    }

    *params = best_params;
    Ok(TrainReport {
        history,
        best_epoch,
        best_val_mse: best_val,
        stopped_early,
    })
}

/// Train in place. Both splits must be normalized with the *training*
/// statistics (the stats objects must be identical); the model keeps a
/// copy for inference. Returns the per-epoch history; the model ends at
/// the best-validation weights, not the last-epoch weights.
pub fn train(
    model: &mut Model,
    train_ds: &WindowDataset,
    val_ds: &WindowDataset,
    weights: &ObjectiveWeights,
    penalties: Option<(&ConstraintLimits, &PenaltyWeights)>,
    opt: &OptimizerConfig,
) -> Result<TrainReport, ModelError> {
    model.config.validate()?;
    opt.validate()?;
    weights.validate()?;
    check_dataset("train", train_ds, &model.config)?;
    check_dataset("validation", val_ds, &model.config)?;
    let stats = train_ds.stats.clone().ok_or_else(|| ModelError::Config {
        reason: "training split must be normalized (run the normalization step first)".into(),
    })?;
    if val_ds.stats.as_ref() != Some(&stats) {
        return Err(ModelError::Config {
            reason: "validation split must be normalized with the training statistics".into(),
        });
    }
    model.stats = Some(stats.clone());

    let config = model.config.clone();
    let train_prep: Vec<WindowPrep> = train_ds
        .windows
        .iter()
        .map(|w| prepare_window(w, &stats, &config))
        .collect();
    let val_prep: Vec<WindowPrep> = val_ds
        .windows
        .iter()
        .map(|w| prepare_window(w, &stats, &config))
        .collect();

    train_core(
        &mut model.params,
        train_ds.windows.len(),
        val_ds.windows.len(),
        opt,
        &mut |g, params, ids, is_val, wi| {
            let (ds, prep) = if is_val {
                (val_ds, &val_prep[wi])
            } else {
                (train_ds, &train_prep[wi])
            };
            build_loss(
                g,
                &config,
                params,
                ids,
                &stats,
                &ds.windows[wi],
                prep,
                weights,
                penalties,
            )
        },
    )
}

/// Write the loss history CSV: epoch, totals, then the per-term training
/// breakdown.
pub fn write_history_csv(history: &[EpochRecord], path: &Path) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "epoch,train_total,val_total,val_mse,position,energy,smoothness,robustness,decoder_energy,encoder_aux,penalties"
    )?;
    for r in history {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.train.total,
            r.val_total,
            r.val_mse,
            r.train.position,
            r.train.energy,
            r.train.smoothness,
            r.train.robustness,
            r.train.decoder_energy,
            r.train.encoder_aux,
            r.train.penalties
        )?;
    }
    w.flush()
}

/// Central-difference check of the entire training objective with every
/// parameter treated as an input, on a deliberately tiny architecture.
/// Returns the max relative error across all parameter elements.
///
/// The sparsity factor is set high enough that every query is selected:
/// the sparse code path (metric, gather, scatter) still runs, but the
/// finite difference cannot step across a top-u selection boundary, which
/// is a genuine discontinuity rather than a gradient bug.
pub fn full_loss_grad_check(seed: u64) -> Result<f64, ModelError> {
    let config = ModelConfig {
        d_model: 8,
        n_heads: 2,
        encoder_layers: 1,
        distilling: true,
        decoder_layers: 1,
        c: 50.0,
        input_channels: NUM_CHANNELS,
        l_x: 16,
        l_token: 8,
        l_y: 4,
        seed,
    };
    config.validate()?;
    let mut params = ModelParams::init(&config);
    // The output heads are zero at init; without signal there the loss is
    // flat in every upstream parameter and the check would be vacuous.
    let mut r = rng::stream(seed, 77);
    for name in ["head.w", "aux_head.w"] {
        let t = random_tensor(&[config.d_model, OUTPUT_DIM], &mut r).map(|v| 0.3 * v);
        params.set_tensor(name, t)?;
    }
    for name in ["head.b", "aux_head.b"] {
        let t = random_tensor(&[OUTPUT_DIM], &mut r).map(|v| 0.1 * v);
        params.set_tensor(name, t)?;
    }

    let stats = NormStats {
        pos_mean: [0.01, -0.02, 0.005],
        pos_std: [0.04, 0.05, 0.03],
        net_mean: [0.15, 22.0, 2.0],
        net_std: [0.08, 5.0, 0.7],
    };
    // dt = 1 s keeps the difference-quotient curvature mild so the h=1e-5
    // central difference stays inside its accuracy budget.
    let dt = 1.0;
    let mut window = SequenceWindow {
        encoder_input: random_tensor(&[config.l_x, NUM_CHANNELS], &mut r),
        decoder_input: random_tensor(&[config.decoder_len(), NUM_CHANNELS], &mut r),
        target: random_tensor(&[config.l_y, OUTPUT_DIM], &mut r).map(|v| 0.05 * v),
        encoder_clean: random_tensor(&[config.l_x, OUTPUT_DIM], &mut r).map(|v| 0.05 * v),
        dt,
    };
    // Placeholder rows: zero positions/flag like the real layout.
    for t in config.l_token..config.decoder_len() {
        for ch in 0..4 {
            window.decoder_input.data_mut()[t * NUM_CHANNELS + ch] = 0.0;
        }
    }
    let prep = prepare_window(&window, &stats, &config);

    let weights = ObjectiveWeights {
        alpha: 1e-3,
        beta: 1e-2,
        gamma1: 1e-3,
        delta1: 1e-3,
        gamma2: 1e-3,
        ..ObjectiveWeights::default()
    };
    // Tiny limits force every hinge active so the penalty path carries
    // gradient (squared hinges stay C¹ at the boundary either way).
    let limits = ConstraintLimits {
        epsilon_sync: 1e-4,
        p_min: [-1e-3; 3],
        p_max: [1e-3; 3],
        v_max: 1e-3,
        omega_max: 1e-3,
        a_max: 1e-2,
        gamma_min: 0.1,
        gamma_max: 1.2,
        e_max: 1e-6,
        dt,
    };
    let pw = PenaltyWeights::default();

    let f = |g: &mut Graph, ids: &[ValueId]| -> Result<ValueId, AutodiffError> {
        build_loss(
            g,
            &config,
            &params,
            ids,
            &stats,
            &window,
            &prep,
            &weights,
            Some((&limits, &pw)),
        )
        .map(|(total, _)| total)
        .map_err(|e| AutodiffError::Invalid {
            op: "full_loss_grad_check",
            reason: e.to_string(),
        })
    };
    Ok(grad_check_at(&f, params.tensors())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{
        build_transition_matrix, sample_states, ChannelParams, ChannelState, ExtendedChannelParams,
        LossMask,
    };
    use crate::data::{
        compute_stats, generate_synthetic_trial, make_windows, normalize_windows,
        synthesize_network_features, NetworkConfig, SyntheticConfig, WindowSpec,
    };

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

    /// Corrupted, windowed, normalized splits from one synthetic trial.
    fn toy_splits(duration_s: f64, seed: u64) -> (WindowDataset, WindowDataset) {
        let spec = WindowSpec {
            l_x: 32,
            l_token: 16,
            l_y: 8,
            stride: 8,
        };
        let synth = SyntheticConfig {
            duration_s,
            ..SyntheticConfig::default()
        };
        let trial = generate_synthetic_trial(&synth, seed).unwrap();
        let params = ChannelParams::Extended(ExtendedChannelParams {
            burst_density: 0.3,
            gap_density: 0.95,
            mean_burst_length: 4.0,
            mean_gap_length: 8.0,
        });
        let matrix = build_transition_matrix(&params).unwrap();
        let mut ch_rng = rng::stream(seed, 2);
        let states = sample_states(&matrix, trial.len(), ChannelState::S1, &mut ch_rng);
        let mask = LossMask::from_states(&states);
        let mut net_rng = rng::stream(seed, 3);
        let net =
            synthesize_network_features(&mask, &NetworkConfig::default(), &mut net_rng).unwrap();
        let windows = make_windows(&trial, &spec, &mask, &net).unwrap();
        assert!(windows.len() >= 10, "trial too short: {} windows", windows.len());

        let n_train = windows.len() * 4 / 5;
        let train_raw = &windows[..n_train];
        let val_raw = &windows[n_train..];
        let stats = compute_stats(train_raw);
        let dt = trial.dt();
        let mk = |wins: Vec<SequenceWindow>| WindowDataset {
            spec,
            dt,
            stats: Some(stats.clone()),
            windows: wins,
        };
        (
            mk(normalize_windows(train_raw, &stats)),
            mk(normalize_windows(val_raw, &stats)),
        )
    }

    #[test]
    fn optimizer_config_rejects_nonsense() {
        let mut o = OptimizerConfig::default();
        o.validate().unwrap();
        o.learning_rate = 0.0;
        assert!(o.validate().is_err());
        let mut o = OptimizerConfig::default();
        o.beta1 = 1.0;
        assert!(o.validate().is_err());
        let mut o = OptimizerConfig::default();
        o.batch_size = 0;
        assert!(o.validate().is_err());
    }

    #[test]
    fn train_requires_normalized_matching_splits() {
        let (train_ds, mut val_ds) = toy_splits(16.0, 40);
        let mut model = Model::new(toy_config()).unwrap();
        let opt = OptimizerConfig {
            epochs: 1,
            ..OptimizerConfig::default()
        };

        let mut raw = train_ds.clone();
        raw.stats = None;
        let err = train(
            &mut model,
            &raw,
            &val_ds,
            &ObjectiveWeights::zero(),
            None,
            &opt,
        );
        assert!(matches!(err, Err(ModelError::Config { .. })));

        val_ds.stats.as_mut().unwrap().pos_mean[0] += 0.5;
        let err = train(
            &mut model,
            &train_ds,
            &val_ds,
            &ObjectiveWeights::zero(),
            None,
            &opt,
        );
        assert!(matches!(err, Err(ModelError::Config { .. })));
    }

    #[test]
    fn training_smoke_shrinks_mse_tenfold() {
        let (train_ds, val_ds) = toy_splits(16.0, 41);
        let mut model = Model::new(toy_config()).unwrap();
        let opt = OptimizerConfig {
            learning_rate: 2e-3,
            batch_size: 8,
            epochs: 60,
            patience: 60,
            seed: 1,
            ..OptimizerConfig::default()
        };
        let report = train(
            &mut model,
            &train_ds,
            &val_ds,
            &ObjectiveWeights::default(),
            None,
            &opt,
        )
        .unwrap();
        let first = report.history.first().unwrap().train.position;
        let last = report.history.last().unwrap().train.position;
        assert!(
            last < first / 10.0,
            "train MSE only moved {first:.3e} -> {last:.3e}"
        );
        assert!(model.stats.is_some());
        assert!(model.params.all_finite());
    }

    #[test]
    fn zero_weights_train_total_is_the_position_loss() {
        let (train_ds, val_ds) = toy_splits(12.0, 42);
        let mut model = Model::new(toy_config()).unwrap();
        let opt = OptimizerConfig {
            epochs: 3,
            batch_size: 8,
            patience: 10,
            ..OptimizerConfig::default()
        };
        let report = train(
            &mut model,
            &train_ds,
            &val_ds,
            &ObjectiveWeights::zero(),
            None,
            &opt,
        )
        .unwrap();
        for r in &report.history {
            assert_eq!(r.train.total, r.train.position);
            assert_eq!(r.train.energy, 0.0);
            assert_eq!(r.train.robustness, 0.0);
            assert_eq!(r.train.encoder_aux, 0.0);
            assert_eq!(r.train.penalties, 0.0);
            assert_eq!(r.val_total, r.val_mse);
        }
        // And it still learns.
        let first = report.history.first().unwrap().train.position;
        let last = report.history.last().unwrap().train.position;
        assert!(last < first);
    }

    #[test]
    fn fixed_seed_reproduces_history_bitwise() {
        let run = || {
            let (train_ds, val_ds) = toy_splits(12.0, 43);
            let mut model = Model::new(toy_config()).unwrap();
            let opt = OptimizerConfig {
                epochs: 3,
                batch_size: 8,
                patience: 10,
                seed: 9,
                ..OptimizerConfig::default()
            };
            train(
                &mut model,
                &train_ds,
                &val_ds,
                &ObjectiveWeights::default(),
                None,
                &opt,
            )
            .unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a.history.len(), b.history.len());
        for (x, y) in a.history.iter().zip(&b.history) {
            assert_eq!(x.train.total.to_bits(), y.train.total.to_bits());
            assert_eq!(x.train.position.to_bits(), y.train.position.to_bits());
            assert_eq!(x.val_total.to_bits(), y.val_total.to_bits());
            assert_eq!(x.val_mse.to_bits(), y.val_mse.to_bits());
        }
        assert_eq!(a.best_epoch, b.best_epoch);
    }

    #[test]
    fn early_stopping_keeps_the_best_epoch() {
        let (train_ds, val_ds) = toy_splits(12.0, 44);
        let mut model = Model::new(toy_config()).unwrap();
        // A learning rate this small cannot clear min_delta, so epoch 0 is
        // the best and patience runs out right after.
        let opt = OptimizerConfig {
            learning_rate: 1e-12,
            min_delta: 1e-9,
            epochs: 20,
            patience: 2,
            batch_size: 8,
            ..OptimizerConfig::default()
        };
        let report = train(
            &mut model,
            &train_ds,
            &val_ds,
            &ObjectiveWeights::zero(),
            None,
            &opt,
        )
        .unwrap();
        assert!(report.stopped_early);
        assert_eq!(report.history.len(), 3);
        assert_eq!(report.best_epoch, 0);
        let min = report
            .history
            .iter()
            .map(|r| r.val_mse)
            .fold(f64::INFINITY, f64::min);
        assert!(report.best_val_mse <= min + 1e-9);
    }

    #[test]
    fn history_csv_has_one_row_per_epoch() {
        let history = vec![
            EpochRecord {
                epoch: 0,
                train: LossBreakdown {
                    position: 1.0,
                    energy: 0.1,
                    smoothness: 0.01,
                    robustness: 0.4,
                    decoder_energy: 0.1,
                    encoder_aux: 0.2,
                    penalties: 0.0,
                    total: 1.81,
                },
                val_total: 1.9,
                val_mse: 1.1,
            },
            EpochRecord {
                epoch: 1,
                train: LossBreakdown::default(),
                val_total: 0.5,
                val_mse: 0.4,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        write_history_csv(&history, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("epoch,train_total,val_total,val_mse,position"));
        assert_eq!(lines[0].split(',').count(), 11);
        assert!(lines[1].starts_with("0,1.81,1.9,1.1,1,"));
    }

    #[test]
    fn full_training_loss_gradient_check() {
        let err = full_loss_grad_check(12).unwrap();
        assert!(err < 1e-3, "full-loss gradient error {err:.3e}");
    }

    #[test]
    fn absurd_learning_rate_reports_divergence_location() {
        let (train_ds, val_ds) = toy_splits(12.0, 45);
        let mut model = Model::new(toy_config()).unwrap();
        let opt = OptimizerConfig {
            learning_rate: 1e200,
            epochs: 2,
            batch_size: 4,
            patience: 10,
            ..OptimizerConfig::default()
        };
        let err = train(
            &mut model,
            &train_ds,
            &val_ds,
            &ObjectiveWeights::default(),
            None,
            &opt,
        );
        match err {
            Err(ModelError::Diverged { detail, .. }) => {
                assert!(!detail.is_empty());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
