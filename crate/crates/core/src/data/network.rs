//! Per-step network condition series fed to the model as auxiliary input
//! channels: trailing packet-loss rate, latency, and jitter.
//!
//! No latency predictor exists at desk scale, so latency is synthesized
//! from the channel configuration itself — a base value, a component
//! coupled to the observed loss rate (congestion and loss co-occur), and
//! seeded first-order autoregressive noise. Jitter is the RFC 3550-style
//! running mean of absolute latency deltas.

use super::DataError;
use crate::channel::LossMask;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    /// Steps of trailing window for the loss-rate estimate.
    pub loss_window: usize,
    /// Baseline one-way latency, milliseconds.
    pub base_latency_ms: f64,
    /// Extra latency per unit trailing loss rate, milliseconds.
    pub latency_loss_coupling_ms: f64,
    /// Standard scale of the AR(1) latency noise, milliseconds.
    pub latency_noise_ms: f64,
    /// AR(1) coefficient of the latency noise, in [0, 1).
    pub latency_noise_persistence: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            loss_window: 30,
            base_latency_ms: 20.0,
            latency_loss_coupling_ms: 40.0,
            latency_noise_ms: 2.0,
            latency_noise_persistence: 0.9,
        }
    }
}

impl NetworkConfig {
    fn validate(&self) -> Result<(), DataError> {
        if self.loss_window == 0 {
            return Err(DataError::InvalidConfig {
                reason: "loss_window must be >= 1".into(),
            });
        }
        for (name, v) in [
            ("base_latency_ms", self.base_latency_ms),
            ("latency_loss_coupling_ms", self.latency_loss_coupling_ms),
            ("latency_noise_ms", self.latency_noise_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DataError::InvalidConfig {
                    reason: format!("{name} must be nonnegative, got {v}"),
                });
            }
        }
        if !(self.latency_noise_persistence.is_finite()
            && (0.0..1.0).contains(&self.latency_noise_persistence))
        {
            return Err(DataError::InvalidConfig {
                reason: format!(
                    "latency_noise_persistence must lie in [0, 1), got {}",
                    self.latency_noise_persistence
                ),
            });
        }
        Ok(())
    }
}

/// Per-step network observations, all the same length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFeatures {
    /// Fraction of packets lost over the trailing window, in [0, 1].
    pub loss_rate: Vec<f64>,
    /// Milliseconds, >= 0.
    pub latency_ms: Vec<f64>,
    /// Milliseconds, >= 0.
    pub jitter_ms: Vec<f64>,
}

impl NetworkFeatures {
    pub fn len(&self) -> usize {
        self.loss_rate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loss_rate.is_empty()
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.latency_ms.len() != self.loss_rate.len() || self.jitter_ms.len() != self.loss_rate.len() {
            return Err(DataError::LengthMismatch {
                context: "network features",
                left: self.loss_rate.len(),
                right: self.latency_ms.len().max(self.jitter_ms.len()),
            });
        }
        let in_range = self.loss_rate.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v))
            && self.latency_ms.iter().all(|v| v.is_finite() && *v >= 0.0)
            && self.jitter_ms.iter().all(|v| v.is_finite() && *v >= 0.0);
        if !in_range {
            return Err(DataError::InvalidConfig {
                reason: "network features must be finite, nonnegative, loss rate <= 1".into(),
            });
        }
        Ok(())
    }

    pub fn means(&self) -> (f64, f64, f64) {
        let n = self.len().max(1) as f64;
        (
            self.loss_rate.iter().sum::<f64>() / n,
            self.latency_ms.iter().sum::<f64>() / n,
            self.jitter_ms.iter().sum::<f64>() / n,
        )
    }
}

/// Derive the three feature series from a loss mask.
pub fn synthesize_network_features(
    mask: &LossMask,
    config: &NetworkConfig,
    rng: &mut ChaCha8Rng,
) -> Result<NetworkFeatures, DataError> {
    config.validate()?;
    let n = mask.len();
    let loss_rate = mask.trailing_loss_rate(config.loss_window);

    let mut latency_ms = Vec::with_capacity(n);
    let mut jitter_ms = Vec::with_capacity(n);
    let mut noise = 0.0f64;
    let mut prev_latency = config.base_latency_ms;
    let mut jitter = 0.0f64;
    for (i, &rate) in loss_rate.iter().enumerate() {
        let shock: f64 = rng.random_range(-1.0..1.0) * config.latency_noise_ms;
        noise = config.latency_noise_persistence * noise + shock;
        let latency = (config.base_latency_ms + config.latency_loss_coupling_ms * rate + noise).max(0.0);
        if i > 0 {
            // Running jitter estimate: j += (|Δlatency| - j) / 16.
            jitter += ((latency - prev_latency).abs() - jitter) / 16.0;
        }
        latency_ms.push(latency);
        jitter_ms.push(jitter);
        prev_latency = latency;
    }

    let out = NetworkFeatures {
        loss_rate,
        latency_ms,
        jitter_ms,
    };
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::LossMask;
    use crate::rng;

    #[test]
    fn trailing_loss_rate_uses_partial_windows_at_start() {
        let mask = LossMask::new(vec![false, true, true, false]);
        let rates = mask.trailing_loss_rate(3);
        assert_eq!(rates, vec![1.0, 0.5, 1.0 / 3.0, 1.0 / 3.0]);
    }

    #[test]
    fn features_are_valid_and_deterministic() {
        let mask = LossMask::new((0..500).map(|i| i % 7 != 0).collect());
        let cfg = NetworkConfig::default();
        let a = synthesize_network_features(&mask, &cfg, &mut rng::seeded(2)).unwrap();
        let b = synthesize_network_features(&mask, &cfg, &mut rng::seeded(2)).unwrap();
        assert_eq!(a, b);
        a.validate().unwrap();
        assert_eq!(a.len(), 500);
    }

    #[test]
    fn lossless_quiet_channel_has_base_latency() {
        let mask = LossMask::new(vec![true; 100]);
        let cfg = NetworkConfig {
            latency_noise_ms: 0.0,
            ..NetworkConfig::default()
        };
        let f = synthesize_network_features(&mask, &cfg, &mut rng::seeded(1)).unwrap();
        assert!(f.loss_rate.iter().all(|&r| r == 0.0));
        assert!(f.latency_ms.iter().all(|&l| l == cfg.base_latency_ms));
        assert!(f.jitter_ms.iter().all(|&j| j == 0.0));
    }

    #[test]
    fn heavier_loss_raises_latency() {
        let clean = LossMask::new(vec![true; 400]);
        let lossy = LossMask::new((0..400).map(|i| i % 2 == 0).collect());
        let cfg = NetworkConfig::default();
        let a = synthesize_network_features(&clean, &cfg, &mut rng::seeded(7)).unwrap();
        let b = synthesize_network_features(&lossy, &cfg, &mut rng::seeded(7)).unwrap();
        assert!(b.means().1 > a.means().1 + 10.0);
    }
}
