//! Kinematics ingestion, synthetic trajectory generation, network-feature
//! synthesis, and assembly of corrupted training windows.

mod io;
mod jigsaws;
mod network;
mod normalize;
mod synthetic;
mod windows;

pub use io::{read_dataset, write_dataset, write_dataset_csv, WindowDataset};
pub use jigsaws::{parse_jigsaws, serialize_jigsaws, ParseOutcome, RotationWarning};
pub use network::{synthesize_network_features, NetworkConfig, NetworkFeatures};
pub use normalize::{
    compute_stats, denormalize_positions, denormalize_windows, normalize_positions, normalize_windows,
    NormStats, STD_FLOOR,
};
pub use synthetic::{generate_synthetic_trial, SyntheticConfig};
pub use windows::{
    make_windows, split_trial, window_count, SequenceWindow, WindowSpec, FLAG_CHANNEL, NET_CHANNELS,
    NUM_CHANNELS, POS_CHANNELS,
};

use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: expected 76 columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("{context}: length mismatch, {left} vs {right}")]
    LengthMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },
    #[error("invalid window spec: {reason}")]
    InvalidSpec { reason: String },
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },
    #[error("dataset file: {reason}")]
    Format { reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which 19-column manipulator block of a JIGSAWS kinematics row to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    MasterLeft,
    MasterRight,
    SlaveLeft,
    SlaveRight,
}

impl Arm {
    /// Column offset of this arm's block in the 76-column layout.
    pub fn column_offset(self) -> usize {
        match self {
            Arm::MasterLeft => 0,
            Arm::MasterRight => 19,
            Arm::SlaveLeft => 38,
            Arm::SlaveRight => 57,
        }
    }

    pub fn parse_name(name: &str) -> Option<Arm> {
        match name {
            "master-left" => Some(Arm::MasterLeft),
            "master-right" => Some(Arm::MasterRight),
            "slave-left" => Some(Arm::SlaveLeft),
            "slave-right" => Some(Arm::SlaveRight),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arm::MasterLeft => "master-left",
            Arm::MasterRight => "master-right",
            Arm::SlaveLeft => "slave-left",
            Arm::SlaveRight => "slave-right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrialSource {
    JigsawsFile,
    Synthetic,
}

/// One manipulator sample: tool-tip pose, twist, and gripper angle.
#[derive(Debug, Clone, PartialEq)]
pub struct KinematicFrame {
    /// Sample count at the trial's rate, strictly increasing by 1.
    pub index: usize,
    /// Tool-tip position, meters.
    pub position: [f64; 3],
    /// Rotation matrix, row-major.
    pub rotation: [[f64; 3]; 3],
    /// Linear velocity, m/s.
    pub linear_velocity: [f64; 3],
    /// Angular velocity, rad/s.
    pub angular_velocity: [f64; 3],
    /// Gripper angle, radians.
    pub gripper_angle: f64,
}

/// An ordered recording of one manipulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub frames: Vec<KinematicFrame>,
    /// Samples per second.
    pub sample_rate: f64,
    pub source: TrialSource,
    pub arm: Option<Arm>,
}

impl Trial {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Seconds per sample.
    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// All positions as an `[n, 3]` tensor.
    pub fn positions(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.frames.len() * 3);
        for f in &self.frames {
            data.extend_from_slice(&f.position);
        }
        Tensor::new(vec![self.frames.len(), 3], data).expect("counted")
    }

    /// All linear velocities as an `[n, 3]` tensor.
    pub fn linear_velocities(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.frames.len() * 3);
        for f in &self.frames {
            data.extend_from_slice(&f.linear_velocity);
        }
        Tensor::new(vec![self.frames.len(), 3], data).expect("counted")
    }

    /// All angular velocities as an `[n, 3]` tensor.
    pub fn angular_velocities(&self) -> Tensor {
        let mut data = Vec::with_capacity(self.frames.len() * 3);
        for f in &self.frames {
            data.extend_from_slice(&f.angular_velocity);
        }
        Tensor::new(vec![self.frames.len(), 3], data).expect("counted")
    }

    pub fn gripper_angles(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.gripper_angle).collect()
    }

    /// Check the strictly-increasing-by-1 index invariant.
    pub fn validate(&self) -> Result<(), DataError> {
        for pair in self.frames.windows(2) {
            if pair[1].index != pair[0].index + 1 {
                return Err(DataError::Parse {
                    line: pair[1].index,
                    reason: format!(
                        "frame indices must increase by 1, got {} after {}",
                        pair[1].index, pair[0].index
                    ),
                });
            }
        }
        Ok(())
    }
}
