//! Seeded synthetic stand-ins for desk-scale tool-tip recordings: smooth
//! multi-sine positions with analytic derivatives, a slowly oscillating
//! rotation about a fixed axis, and a sinusoidal gripper angle. Amplitudes
//! are rescaled so the configured velocity/acceleration caps hold by
//! construction.

use super::{DataError, KinematicFrame, Trial, TrialSource};
use crate::rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub duration_s: f64,
    pub sample_rate: f64,
    /// Per-axis position amplitude bound, meters.
    pub amplitude_m: f64,
    /// Speed cap, m/s; sinusoid amplitudes shrink to respect it.
    pub v_max: f64,
    /// Acceleration cap, m/s².
    pub a_max: f64,
    /// Peak angular speed of the tool rotation, rad/s.
    pub rotation_rate: f64,
    /// Gripper oscillates in [mid − amplitude, mid + amplitude], radians.
    pub gripper_mid: f64,
    pub gripper_amplitude: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            duration_s: 60.0,
            sample_rate: 30.0,
            amplitude_m: 0.05,
            v_max: 0.25,
            a_max: 1.5,
            rotation_rate: 0.2,
            gripper_mid: 0.5,
            gripper_amplitude: 0.3,
        }
    }
}

impl SyntheticConfig {
    fn validate(&self) -> Result<(), DataError> {
        let positive = [
            ("duration_s", self.duration_s),
            ("sample_rate", self.sample_rate),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(DataError::InvalidConfig {
                    reason: format!("{name} must be positive, got {v}"),
                });
            }
        }
        let nonneg = [
            ("amplitude_m", self.amplitude_m),
            ("rotation_rate", self.rotation_rate),
            ("gripper_amplitude", self.gripper_amplitude),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DataError::InvalidConfig {
                    reason: format!("{name} must be nonnegative, got {v}"),
                });
            }
        }
        Ok(())
    }
}

struct Sinusoid {
    amplitude: f64,
    /// Angular frequency, rad/s.
    omega: f64,
    phase: f64,
}

/// Generate a seeded trial. Identical `(config, seed)` pairs produce
/// bit-identical trials.
pub fn generate_synthetic_trial(config: &SyntheticConfig, seed: u64) -> Result<Trial, DataError> {
    config.validate()?;
    let mut r = rng::seeded(seed);

    // Draw 3-5 sinusoids per axis in the 0.05-0.5 Hz band, then normalize
    // each axis's total amplitude to the position bound.
    let mut axes: Vec<Vec<Sinusoid>> = Vec::with_capacity(3);
    for _ in 0..3 {
        let n = r.random_range(3..=5usize);
        let mut sins = Vec::with_capacity(n);
        let mut amp_total = 0.0;
        for _ in 0..n {
            let amplitude = r.random_range(0.2..1.0);
            let freq = r.random_range(0.05..0.5);
            let phase = r.random_range(0.0..2.0 * PI);
            amp_total += amplitude;
            sins.push(Sinusoid {
                amplitude,
                omega: 2.0 * PI * freq,
                phase,
            });
        }
        for s in &mut sins {
            s.amplitude *= config.amplitude_m / amp_total;
        }
        axes.push(sins);
    }

    // |v_axis| <= sum A*omega and |a_axis| <= sum A*omega^2; shrink all
    // amplitudes together until the caps hold with 10% headroom.
    let mut v_bound_sq = 0.0;
    let mut a_bound_sq = 0.0;
    for sins in &axes {
        let v: f64 = sins.iter().map(|s| s.amplitude * s.omega).sum();
        let a: f64 = sins.iter().map(|s| s.amplitude * s.omega * s.omega).sum();
        v_bound_sq += v * v;
        a_bound_sq += a * a;
    }
    let mut scale: f64 = 1.0;
    if v_bound_sq > 0.0 {
        scale = scale.min(0.9 * config.v_max / v_bound_sq.sqrt());
    }
    if a_bound_sq > 0.0 {
        scale = scale.min(0.9 * config.a_max / a_bound_sq.sqrt());
    }
    if scale < 1.0 {
        for sins in &mut axes {
            for s in sins {
                s.amplitude *= scale;
            }
        }
    }

    let rot_axis = random_unit_vector(&mut r);
    let rot_omega = 2.0 * PI * r.random_range(0.02..0.1);
    let grip_omega = 2.0 * PI * r.random_range(0.05..0.2);
    let grip_phase = r.random_range(0.0..2.0 * PI);

    let dt = 1.0 / config.sample_rate;
    let n = (config.duration_s * config.sample_rate).round() as usize;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let mut position = [0.0f64; 3];
        let mut velocity = [0.0f64; 3];
        for (a, sins) in axes.iter().enumerate() {
            for s in sins {
                position[a] += s.amplitude * (s.omega * t + s.phase).sin();
                velocity[a] += s.amplitude * s.omega * (s.omega * t + s.phase).cos();
            }
        }
        // Rotation angle integrates to a bounded oscillation so the angular
        // speed never exceeds rotation_rate.
        let theta = if rot_omega > 0.0 {
            config.rotation_rate / rot_omega * (rot_omega * t).sin()
        } else {
            0.0
        };
        let theta_dot = config.rotation_rate * (rot_omega * t).cos();
        let rotation = rodrigues(&rot_axis, theta);
        let angular_velocity = [
            rot_axis[0] * theta_dot,
            rot_axis[1] * theta_dot,
            rot_axis[2] * theta_dot,
        ];
        let gripper_angle = config.gripper_mid + config.gripper_amplitude * (grip_omega * t + grip_phase).sin();
        frames.push(KinematicFrame {
            index: i,
            position,
            rotation,
            linear_velocity: velocity,
            angular_velocity,
            gripper_angle,
        });
    }

    Ok(Trial {
        frames,
        sample_rate: config.sample_rate,
        source: TrialSource::Synthetic,
        arm: None,
    })
}

fn random_unit_vector(r: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
            r.random_range(-1.0..1.0),
        ];
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if norm > 0.1 {
            return [v[0] / norm, v[1] / norm, v[2] / norm];
        }
    }
}

/// Rotation by `theta` about unit axis `u`: R = I + sinθ·[u]ₓ + (1−cosθ)·[u]ₓ².
fn rodrigues(u: &[f64; 3], theta: f64) -> [[f64; 3]; 3] {
    let (s, c) = theta.sin_cos();
    let k = [
        [0.0, -u[2], u[1]],
        [u[2], 0.0, -u[0]],
        [-u[1], u[0], 0.0],
    ];
    let mut r = [[0.0f64; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut k2 = 0.0;
            for l in 0..3 {
                k2 += k[i][l] * k[l][j];
            }
            r[i][j] = if i == j { 1.0 } else { 0.0 } + s * k[i][j] + (1.0 - c) * k2;
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_amplitude_gives_constant_trajectory() {
        let cfg = SyntheticConfig {
            duration_s: 1.0,
            amplitude_m: 0.0,
            ..SyntheticConfig::default()
        };
        let trial = generate_synthetic_trial(&cfg, 5).unwrap();
        for f in &trial.frames {
            assert_eq!(f.position, [0.0; 3]);
            assert_eq!(f.linear_velocity, [0.0; 3]);
        }
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let cfg = SyntheticConfig {
            duration_s: 2.0,
            ..SyntheticConfig::default()
        };
        let a = generate_synthetic_trial(&cfg, 11).unwrap();
        let b = generate_synthetic_trial(&cfg, 11).unwrap();
        let c = generate_synthetic_trial(&cfg, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn analytic_velocity_matches_central_difference() {
        let cfg = SyntheticConfig {
            duration_s: 5.0,
            ..SyntheticConfig::default()
        };
        let trial = generate_synthetic_trial(&cfg, 21).unwrap();
        let dt = trial.dt();
        // Central differences are exact to O(dt^2); with sub-0.5 Hz content
        // and centimeter amplitudes the truncation term is well under 1e-3.
        for i in 1..trial.len() - 1 {
            for a in 0..3 {
                let fd = (trial.frames[i + 1].position[a] - trial.frames[i - 1].position[a]) / (2.0 * dt);
                let diff = (fd - trial.frames[i].linear_velocity[a]).abs();
                assert!(diff < 1e-3, "step {i} axis {a}: {diff}");
            }
        }
    }

    #[test]
    fn velocity_and_acceleration_caps_hold() {
        let cfg = SyntheticConfig {
            duration_s: 10.0,
            v_max: 0.1,
            a_max: 0.5,
            ..SyntheticConfig::default()
        };
        let trial = generate_synthetic_trial(&cfg, 33).unwrap();
        let dt = trial.dt();
        let mut prev_v: Option<[f64; 3]> = None;
        for f in &trial.frames {
            let speed = (f.linear_velocity.iter().map(|v| v * v).sum::<f64>()).sqrt();
            assert!(speed <= cfg.v_max, "speed {speed}");
            if let Some(pv) = prev_v {
                let acc = (0..3)
                    .map(|a| ((f.linear_velocity[a] - pv[a]) / dt).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!(acc <= cfg.a_max, "acceleration {acc}");
            }
            prev_v = Some(f.linear_velocity);
        }
    }

    #[test]
    fn rotations_are_orthonormal_and_angular_rate_bounded() {
        let cfg = SyntheticConfig {
            duration_s: 3.0,
            ..SyntheticConfig::default()
        };
        let trial = generate_synthetic_trial(&cfg, 44).unwrap();
        for f in &trial.frames {
            let r = &f.rotation;
            for i in 0..3 {
                for j in 0..3 {
                    let mut dot = 0.0;
                    for k in 0..3 {
                        dot += r[k][i] * r[k][j];
                    }
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot - want).abs() < 1e-9);
                }
            }
            let w = (f.angular_velocity.iter().map(|v| v * v).sum::<f64>()).sqrt();
            assert!(w <= cfg.rotation_rate + 1e-12);
        }
    }

    #[test]
    fn frame_indices_increase_by_one() {
        let trial = generate_synthetic_trial(
            &SyntheticConfig {
                duration_s: 1.0,
                ..SyntheticConfig::default()
            },
            1,
        )
        .unwrap();
        trial.validate().unwrap();
        assert_eq!(trial.len(), 30);
    }
}
