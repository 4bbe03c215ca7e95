//! Channel normalization. Position statistics come from the *clean* targets
//! of the training split (corrupted zeros would bias them); network-channel
//! statistics come from the training encoder inputs. The loss-flag channel
//! is already a {0,1} indicator and is never touched. Targets stay in
//! meters — training and metrics denormalize predictions instead.

use super::windows::{SequenceWindow, NET_CHANNELS, NUM_CHANNELS, POS_CHANNELS};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};

pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel affine normalization parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub pos_mean: [f64; 3],
    pub pos_std: [f64; 3],
    pub net_mean: [f64; 3],
    pub net_std: [f64; 3],
}

impl NormStats {
    /// Identity transform (zero mean, unit scale).
    pub fn identity() -> Self {
        Self {
            pos_mean: [0.0; 3],
            pos_std: [1.0; 3],
            net_mean: [0.0; 3],
            net_std: [1.0; 3],
        }
    }
}

/// Compute stats from a training split.
pub fn compute_stats(train: &[SequenceWindow]) -> NormStats {
    let mut stats = NormStats::identity();
    if train.is_empty() {
        return stats;
    }

    // Position: over all clean target entries.
    let mut pos_acc = Accumulator::new();
    for w in train {
        for t in 0..w.target.shape()[0] {
            let row = &w.target.data()[t * 3..(t + 1) * 3];
            pos_acc.push(row);
        }
    }
    (stats.pos_mean, stats.pos_std) = pos_acc.finish();

    // Network channels: over all encoder rows.
    let mut net_acc = Accumulator::new();
    for w in train {
        for t in 0..w.encoder_input.shape()[0] {
            let row = &w.encoder_input.data()[t * NUM_CHANNELS..(t + 1) * NUM_CHANNELS];
            net_acc.push(&row[NET_CHANNELS]);
        }
    }
    (stats.net_mean, stats.net_std) = net_acc.finish();
    stats
}

struct Accumulator {
    n: usize,
    sum: [f64; 3],
    sum_sq: [f64; 3],
}

impl Accumulator {
    fn new() -> Self {
        Self {
            n: 0,
            sum: [0.0; 3],
            sum_sq: [0.0; 3],
        }
    }

    fn push(&mut self, row: &[f64]) {
        self.n += 1;
        for c in 0..3 {
            self.sum[c] += row[c];
            self.sum_sq[c] += row[c] * row[c];
        }
    }

    fn finish(&self) -> ([f64; 3], [f64; 3]) {
        let n = self.n.max(1) as f64;
        let mut mean = [0.0; 3];
        let mut std = [1.0; 3];
        for c in 0..3 {
            mean[c] = self.sum[c] / n;
            let var = (self.sum_sq[c] / n - mean[c] * mean[c]).max(0.0);
            std[c] = var.sqrt().max(STD_FLOOR);
        }
        (mean, std)
    }
}

/// Z-score the input tensors of each window in place (targets stay in
/// meters). Decoder placeholder rows keep their zero position channels so
/// the placeholder convention survives normalization.
pub fn normalize_windows(windows: &[SequenceWindow], stats: &NormStats) -> Vec<SequenceWindow> {
    windows
        .iter()
        .map(|w| {
            let l_dec = w.decoder_input.shape()[0];
            let l_y = w.target.shape()[0];
            let l_token = l_dec - l_y;
            SequenceWindow {
                encoder_input: normalize_stream(&w.encoder_input, stats, usize::MAX),
                decoder_input: normalize_stream(&w.decoder_input, stats, l_token),
                target: w.target.clone(),
                encoder_clean: w.encoder_clean.clone(),
                dt: w.dt,
            }
        })
        .collect()
}

/// Z-score one channel stream; position channels in rows >= `pos_row_limit`
/// are left untouched (placeholder rows).
fn normalize_stream(stream: &Tensor, stats: &NormStats, pos_row_limit: usize) -> Tensor {
    let mut out = stream.clone();
    let rows = out.shape()[0];
    for t in 0..rows {
        let row = &mut out.data_mut()[t * NUM_CHANNELS..(t + 1) * NUM_CHANNELS];
        if t < pos_row_limit {
            for (c, p) in POS_CHANNELS.enumerate() {
                row[p] = (row[p] - stats.pos_mean[c]) / stats.pos_std[c];
            }
        }
        for (c, nch) in NET_CHANNELS.enumerate() {
            row[nch] = (row[nch] - stats.net_mean[c]) / stats.net_std[c];
        }
        // FLAG_CHANNEL deliberately untouched.
    }
    out
}

/// Inverse of [`normalize_windows`].
pub fn denormalize_windows(windows: &[SequenceWindow], stats: &NormStats) -> Vec<SequenceWindow> {
    windows
        .iter()
        .map(|w| {
            let l_dec = w.decoder_input.shape()[0];
            let l_y = w.target.shape()[0];
            let l_token = l_dec - l_y;
            SequenceWindow {
                encoder_input: denormalize_stream(&w.encoder_input, stats, usize::MAX),
                decoder_input: denormalize_stream(&w.decoder_input, stats, l_token),
                target: w.target.clone(),
                encoder_clean: w.encoder_clean.clone(),
                dt: w.dt,
            }
        })
        .collect()
}

fn denormalize_stream(stream: &Tensor, stats: &NormStats, pos_row_limit: usize) -> Tensor {
    let mut out = stream.clone();
    let rows = out.shape()[0];
    for t in 0..rows {
        let row = &mut out.data_mut()[t * NUM_CHANNELS..(t + 1) * NUM_CHANNELS];
        if t < pos_row_limit {
            for (c, p) in POS_CHANNELS.enumerate() {
                row[p] = row[p] * stats.pos_std[c] + stats.pos_mean[c];
            }
        }
        for (c, nch) in NET_CHANNELS.enumerate() {
            row[nch] = row[nch] * stats.net_std[c] + stats.net_mean[c];
        }
    }
    out
}

/// Map an `[n, 3]` meter-space position block into normalized space.
pub fn normalize_positions(positions: &Tensor, stats: &NormStats) -> Tensor {
    let mut out = positions.clone();
    for t in 0..out.shape()[0] {
        let row = &mut out.data_mut()[t * 3..(t + 1) * 3];
        for c in 0..3 {
            row[c] = (row[c] - stats.pos_mean[c]) / stats.pos_std[c];
        }
    }
    out
}

/// Inverse of [`normalize_positions`].
pub fn denormalize_positions(positions: &Tensor, stats: &NormStats) -> Tensor {
    let mut out = positions.clone();
    for t in 0..out.shape()[0] {
        let row = &mut out.data_mut()[t * 3..(t + 1) * 3];
        for c in 0..3 {
            row[c] = row[c] * stats.pos_std[c] + stats.pos_mean[c];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LossMask;
    use crate::data::{
        generate_synthetic_trial, make_windows, synthesize_network_features, NetworkConfig, SyntheticConfig,
        Trial, WindowSpec, FLAG_CHANNEL,
    };
    use crate::rng;

    fn windows_fixture(seed: u64, steps: usize) -> (Trial, Vec<SequenceWindow>) {
        let cfg = SyntheticConfig {
            duration_s: steps as f64 / 30.0,
            ..SyntheticConfig::default()
        };
        let trial = generate_synthetic_trial(&cfg, seed).unwrap();
        let mask = LossMask::new((0..steps).map(|i| i % 6 != 2).collect());
        let net = synthesize_network_features(&mask, &NetworkConfig::default(), &mut rng::seeded(seed)).unwrap();
        let ws = make_windows(&trial, &WindowSpec::default(), &mask, &net).unwrap();
        (trial, ws)
    }

    #[test]
    fn round_trip_is_identity_within_1e12() {
        let (_, windows) = windows_fixture(14, 400);
        let stats = compute_stats(&windows);
        let normalized = normalize_windows(&windows, &stats);
        let back = denormalize_windows(&normalized, &stats);
        for (orig, rt) in windows.iter().zip(&back) {
            for (a, b) in orig.encoder_input.data().iter().zip(rt.encoder_input.data()) {
                assert!((a - b).abs() < 1e-12);
            }
            for (a, b) in orig.decoder_input.data().iter().zip(rt.decoder_input.data()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let p = Tensor::from_rows(&[vec![0.01, -0.02, 0.005]]).unwrap();
        let rt = denormalize_positions(&normalize_positions(&p, &stats), &stats);
        for (a, b) in p.data().iter().zip(rt.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn flag_channel_is_never_touched() {
        let (_, windows) = windows_fixture(15, 400);
        let stats = compute_stats(&windows);
        let normalized = normalize_windows(&windows, &stats);
        for (orig, norm) in windows.iter().zip(&normalized) {
            for t in 0..orig.encoder_input.shape()[0] {
                assert_eq!(
                    orig.encoder_input.data()[t * NUM_CHANNELS + FLAG_CHANNEL],
                    norm.encoder_input.data()[t * NUM_CHANNELS + FLAG_CHANNEL],
                );
            }
        }
    }

    #[test]
    fn placeholder_positions_stay_zero_after_normalization() {
        let (_, windows) = windows_fixture(16, 400);
        let stats = compute_stats(&windows);
        let normalized = normalize_windows(&windows, &stats);
        for w in &normalized {
            let l_dec = w.decoder_input.shape()[0];
            let l_token = l_dec - w.target.shape()[0];
            for r in l_token..l_dec {
                let row = &w.decoder_input.data()[r * NUM_CHANNELS..(r + 1) * NUM_CHANNELS];
                assert_eq!(&row[POS_CHANNELS], &[0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn constant_channel_normalizes_to_zero_with_floored_std() {
        // A constant trajectory gives zero-variance position channels.
        let cfg = SyntheticConfig {
            duration_s: 10.0,
            amplitude_m: 0.0,
            ..SyntheticConfig::default()
        };
        let trial = generate_synthetic_trial(&cfg, 2).unwrap();
        let n = trial.len();
        let mask = LossMask::new(vec![true; n]);
        let net = synthesize_network_features(&mask, &NetworkConfig::default(), &mut rng::seeded(2)).unwrap();
        let windows = make_windows(&trial, &WindowSpec::default(), &mask, &net).unwrap();
        let stats = compute_stats(&windows);
        assert_eq!(stats.pos_std, [STD_FLOOR; 3]);
        let normalized = normalize_windows(&windows, &stats);
        for w in &normalized {
            for t in 0..w.encoder_input.shape()[0] {
                let row = &w.encoder_input.data()[t * NUM_CHANNELS..(t + 1) * NUM_CHANNELS];
                assert_eq!(&row[POS_CHANNELS], &[0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn foreign_split_does_not_center_at_zero() {
        // Stats from one split applied to a different split: the normalized
        // mean is generally nonzero.
        let (_, a) = windows_fixture(30, 600);
        let (_, b) = windows_fixture(31, 600);
        let stats = compute_stats(&a);
        let normalized = normalize_windows(&b, &stats);
        let mut mean = 0.0;
        let mut count = 0usize;
        for w in &normalized {
            for t in 0..w.encoder_input.shape()[0] {
                mean += w.encoder_input.data()[t * NUM_CHANNELS];
                count += 1;
            }
        }
        mean /= count as f64;
        assert!(mean.abs() > 1e-3, "foreign-split mean unexpectedly centered: {mean}");
    }
}
