//! Teleoperation packet-loss simulation and trajectory reconstruction.
//!
//! The crate simulates bursty packet loss on a teleoperation link with a
//! four-state Markov channel, corrupts recorded or synthetic tool-tip
//! trajectories accordingly, and reconstructs the missing motion with a
//! sparse-attention sequence model trained under physical-constraint
//! penalties, alongside hold/linear/RNN/LSTM/TCN baselines.

pub mod attention;
pub mod autodiff;
pub mod baselines;
pub mod channel;
pub mod cli;
pub mod data;
pub mod manifest;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod rng;
pub mod sweep;
pub mod tensor;
pub mod train;
