//! Assembly of encoder/decoder training windows from a trial, a loss mask,
//! and network features.
//!
//! Channel layout (all inputs share it):
//! 0-2 corrupted tool-tip position (lost steps zeroed), 3 loss flag
//! (1 = lost), 4-6 network features (trailing loss rate, latency ms,
//! jitter ms).
//!
//! A window starting at `s` has the encoder read steps `s .. s+L_x`, the
//! decoder read the last `L_token` encoder steps followed by `L_y`
//! placeholder rows (zero positions, zero flag, future network values),
//! and the target hold the clean positions of steps `s+L_x .. s+L_x+L_y`.

use super::{DataError, NetworkFeatures, Trial};
use crate::channel::{corrupt, LossMask};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::ops::Range;

pub const POS_CHANNELS: Range<usize> = 0..3;
pub const FLAG_CHANNEL: usize = 3;
pub const NET_CHANNELS: Range<usize> = 4..7;
pub const NUM_CHANNELS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    /// Encoder window length.
    pub l_x: usize,
    /// Start-token rows replayed to the decoder.
    pub l_token: usize,
    /// Prediction horizon.
    pub l_y: usize,
    /// Start-to-start step between windows.
    pub stride: usize,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            l_x: 96,
            l_token: 48,
            l_y: 24,
            stride: 24,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.l_x == 0 || self.l_token == 0 || self.l_y == 0 || self.stride == 0 {
            return Err(DataError::InvalidSpec {
                reason: format!("all lengths must be >= 1, got {self:?}"),
            });
        }
        if self.l_token > self.l_x {
            return Err(DataError::InvalidSpec {
                reason: format!("l_token {} exceeds l_x {}", self.l_token, self.l_x),
            });
        }
        Ok(())
    }
}

/// One training/inference instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    /// `[L_x, 7]`.
    pub encoder_input: Tensor,
    /// `[L_token + L_y, 7]`; rows `L_token..` are placeholders with zero
    /// position and flag channels.
    pub decoder_input: Tensor,
    /// `[L_y, 3]` clean positions, meters.
    pub target: Tensor,
    /// `[L_x, 3]` clean encoder-span positions, meters — reference for the
    /// encoder's auxiliary reconstruction loss; never fed to the model as
    /// input.
    pub encoder_clean: Tensor,
    /// Seconds per step.
    pub dt: f64,
}

/// Number of windows a trial of `n` steps yields; zero when too short.
pub fn window_count(n: usize, spec: &WindowSpec) -> usize {
    let need = spec.l_x + spec.l_y;
    if n < need {
        0
    } else {
        (n - need) / spec.stride + 1
    }
}

/// Cut a trial into corrupted windows. The mask and features must cover
/// every trial step. A trial shorter than `L_x + L_y` yields an empty
/// dataset (the caller decides whether that warrants a warning).
pub fn make_windows(
    trial: &Trial,
    spec: &WindowSpec,
    mask: &LossMask,
    net: &NetworkFeatures,
) -> Result<Vec<SequenceWindow>, DataError> {
    spec.validate()?;
    let n = trial.len();
    if mask.len() != n {
        return Err(DataError::LengthMismatch {
            context: "trial vs mask",
            left: n,
            right: mask.len(),
        });
    }
    if net.len() != n {
        return Err(DataError::LengthMismatch {
            context: "trial vs network features",
            left: n,
            right: net.len(),
        });
    }
    net.validate()?;

    let clean = trial.positions();
    let corrupted = corrupt(&clean, mask).map_err(|e| DataError::InvalidSpec {
        reason: e.to_string(),
    })?;

    // Full-trial channel matrix; windows slice rows out of it.
    let mut stream = Tensor::zeros(&[n, NUM_CHANNELS]);
    for t in 0..n {
        let row = &mut stream.data_mut()[t * NUM_CHANNELS..(t + 1) * NUM_CHANNELS];
        row[POS_CHANNELS].copy_from_slice(&corrupted.data()[t * 3..(t + 1) * 3]);
        row[FLAG_CHANNEL] = if mask.is_received(t) { 0.0 } else { 1.0 };
        row[4] = net.loss_rate[t];
        row[5] = net.latency_ms[t];
        row[6] = net.jitter_ms[t];
    }

    let count = window_count(n, spec);
    let mut windows = Vec::with_capacity(count);
    let dt = trial.dt();
    for w in 0..count {
        let start = w * spec.stride;
        let enc_end = start + spec.l_x;
        let encoder_input = slice_stream(&stream, start, enc_end);

        let dec_rows = spec.l_token + spec.l_y;
        let mut decoder_input = Tensor::zeros(&[dec_rows, NUM_CHANNELS]);
        // Token block: replay of the encoder tail.
        let token_start = enc_end - spec.l_token;
        decoder_input.data_mut()[..spec.l_token * NUM_CHANNELS]
            .copy_from_slice(&stream.data()[token_start * NUM_CHANNELS..enc_end * NUM_CHANNELS]);
        // Placeholder rows: zero positions and flag; network channels carry
        // the simulation's ground-truth future values (the stand-in for
        // predicted latency/jitter).
        for (r, t) in (enc_end..enc_end + spec.l_y).enumerate() {
            let row =
                &mut decoder_input.data_mut()[(spec.l_token + r) * NUM_CHANNELS..(spec.l_token + r + 1) * NUM_CHANNELS];
            row[4] = net.loss_rate[t];
            row[5] = net.latency_ms[t];
            row[6] = net.jitter_ms[t];
        }

        let target_data = clean.data()[enc_end * 3..(enc_end + spec.l_y) * 3].to_vec();
        let target = Tensor::new(vec![spec.l_y, 3], target_data).expect("counted");
        let clean_data = clean.data()[start * 3..enc_end * 3].to_vec();
        let encoder_clean = Tensor::new(vec![spec.l_x, 3], clean_data).expect("counted");

        windows.push(SequenceWindow {
            encoder_input,
            decoder_input,
            target,
            encoder_clean,
            dt,
        });
    }
    Ok(windows)
}

fn slice_stream(stream: &Tensor, start: usize, end: usize) -> Tensor {
    let c = stream.shape()[1];
    let data = stream.data()[start * c..end * c].to_vec();
    Tensor::new(vec![end - start, c], data).expect("counted")
}

/// Split a trial into contiguous train/validation/test ranges by time.
/// `train_frac + val_frac` must be < 1; the remainder is the test split.
pub fn split_trial(trial: &Trial, train_frac: f64, val_frac: f64) -> Result<(Trial, Trial, Trial), DataError> {
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(DataError::InvalidConfig {
            reason: format!("bad split fractions ({train_frac}, {val_frac})"),
        });
    }
    let n = trial.len();
    let train_end = (n as f64 * train_frac).floor() as usize;
    let val_end = (n as f64 * (train_frac + val_frac)).floor() as usize;
    let part = |range: Range<usize>| Trial {
        frames: trial.frames[range].to_vec(),
        sample_rate: trial.sample_rate,
        source: trial.source,
        arm: trial.arm,
    };
    Ok((part(0..train_end), part(train_end..val_end), part(val_end..n)))
}
