//! Four-state Markov model of bursty packet loss on a teleoperation link.
//!
//! Link time alternates between *gap* periods (mostly quiet) and *burst*
//! periods (mostly lossy). Each step lands in one of four states:
//!
//! | state | period | packet   |
//! |-------|--------|----------|
//! | `S1`  | gap    | received |
//! | `S2`  | burst  | received |
//! | `S3`  | burst  | lost     |
//! | `S4`  | gap    | lost     |
//!
//! Two parameterizations build the transition matrix: a minimal cyclic one
//! driven by two switch probabilities, and an extended one that separately
//! controls mean period lengths and the loss density inside each period.

use crate::tensor::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("parameter {name} = {value} out of range: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("transition row {row} sums to {sum}, expected 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("transition entry [{row}][{col}] = {value} outside [0, 1]")]
    EntryOutOfRange { row: usize, col: usize, value: f64 },
    #[error("chain is reducible: state {unreachable} unreachable from state {from}")]
    Reducible { from: usize, unreachable: usize },
    #[error("stationary solve left residual {residual}, tolerance {tolerance}")]
    SolveResidual { residual: f64, tolerance: f64 },
    #[error("positions have {positions} rows but mask has {mask} steps")]
    LengthMismatch { positions: usize, mask: usize },
    #[error("mask trace byte {index} is {found:?}, expected '0' or '1'")]
    BadTrace { index: usize, found: char },
    #[error("positions must be [n, 3], got shape {shape:?}")]
    BadPositions { shape: Vec<usize> },
}

/// Channel state for one packet slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelState {
    /// Gap period, packet received.
    S1,
    /// Burst period, packet received.
    S2,
    /// Burst period, packet lost.
    S3,
    /// Gap period, packet lost.
    S4,
}

pub const NUM_STATES: usize = 4;

impl ChannelState {
    pub const ALL: [ChannelState; NUM_STATES] =
        [ChannelState::S1, ChannelState::S2, ChannelState::S3, ChannelState::S4];

    pub fn index(self) -> usize {
        match self {
            ChannelState::S1 => 0,
            ChannelState::S2 => 1,
            ChannelState::S3 => 2,
            ChannelState::S4 => 3,
        }
    }

    pub fn from_index(i: usize) -> Option<ChannelState> {
        ChannelState::ALL.get(i).copied()
    }

    /// Whether the packet in this slot arrives.
    pub fn is_received(self) -> bool {
        matches!(self, ChannelState::S1 | ChannelState::S2)
    }

    /// Whether this slot belongs to a burst period.
    pub fn in_burst_period(self) -> bool {
        matches!(self, ChannelState::S2 | ChannelState::S3)
    }
}

/// Parameters of the minimal cyclic construction: `p_b` switches gap states
/// toward the burst side, `p_g` advances through it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasicChannelParams {
    pub p_b: f64,
    pub p_g: f64,
}

/// Parameters of the extended construction.
///
/// Mean period lengths are in packet slots; densities give the per-slot loss
/// probability inside a burst (`burst_density`) and the per-slot reception
/// probability inside a gap (`gap_density`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedChannelParams {
    pub burst_density: f64,
    pub gap_density: f64,
    pub mean_burst_length: f64,
    pub mean_gap_length: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ChannelParams {
    Basic(BasicChannelParams),
    Extended(ExtendedChannelParams),
}

fn check_probability(name: &'static str, value: f64) -> Result<(), ChannelError> {
    if !(value.is_finite() && (0.0..=1.0).contains(&value)) {
        return Err(ChannelError::InvalidParameter {
            name,
            value,
            reason: "must lie in [0, 1]",
        });
    }
    Ok(())
}

fn check_mean_length(name: &'static str, value: f64) -> Result<(), ChannelError> {
    if !(value.is_finite() && value >= 1.0) {
        return Err(ChannelError::InvalidParameter {
            name,
            value,
            reason: "must be a finite length >= 1",
        });
    }
    Ok(())
}

impl BasicChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        check_probability("p_b", self.p_b)?;
        check_probability("p_g", self.p_g)
    }
}

impl ExtendedChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        check_probability("burst_density", self.burst_density)?;
        check_probability("gap_density", self.gap_density)?;
        check_mean_length("mean_burst_length", self.mean_burst_length)?;
        check_mean_length("mean_gap_length", self.mean_gap_length)
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), ChannelError> {
        match self {
            ChannelParams::Basic(p) => p.validate(),
            ChannelParams::Extended(p) => p.validate(),
        }
    }
}

const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Row-stochastic 4x4 transition matrix over [`ChannelState`].
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    rows: [[f64; NUM_STATES]; NUM_STATES],
}

impl TransitionMatrix {
    pub fn new(rows: [[f64; NUM_STATES]; NUM_STATES]) -> Result<Self, ChannelError> {
        for (i, row) in rows.iter().enumerate() {
            let mut sum = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if !(v.is_finite() && (0.0..=1.0).contains(&v)) {
                    return Err(ChannelError::EntryOutOfRange { row: i, col: j, value: v });
                }
                sum += v;
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(ChannelError::NotStochastic { row: i, sum });
            }
        }
        Ok(Self { rows })
    }

    pub fn prob(&self, from: ChannelState, to: ChannelState) -> f64 {
        self.rows[from.index()][to.index()]
    }

    pub fn rows(&self) -> &[[f64; NUM_STATES]; NUM_STATES] {
        &self.rows
    }
}

/// Minimal construction: states cycle S1 -> S2 -> S3 -> S4 -> S1, where the
/// gap-side states advance with probability `p_b` and the burst-side states
/// with `p_g`, otherwise holding. Its stationary loss rate is always 1/2
/// because the received pair (S1, S2) and the lost pair (S4, S3) have
/// identical dwell times.
pub fn build_basic_matrix(params: &BasicChannelParams) -> Result<TransitionMatrix, ChannelError> {
    params.validate()?;
    let BasicChannelParams { p_b, p_g } = *params;
    TransitionMatrix::new([
        [1.0 - p_b, p_b, 0.0, 0.0],
        [0.0, 1.0 - p_g, p_g, 0.0],
        [0.0, 0.0, 1.0 - p_g, p_g],
        [p_b, 0.0, 0.0, 1.0 - p_b],
    ])
}

/// Extended construction. The burst/gap period alternation is a two-state
/// chain with geometric dwell (leave probability = 1 / mean length); the
/// received/lost split inside the destination period is an independent draw
/// from that period's density.
pub fn build_extended_matrix(params: &ExtendedChannelParams) -> Result<TransitionMatrix, ChannelError> {
    params.validate()?;
    let d_b = params.burst_density;
    let d_g = params.gap_density;
    let leave_burst = 1.0 / params.mean_burst_length;
    let leave_gap = 1.0 / params.mean_gap_length;

    let from_gap = [
        (1.0 - leave_gap) * d_g,         // S1: stay in gap, received
        leave_gap * (1.0 - d_b),         // S2: enter burst, received
        leave_gap * d_b,                 // S3: enter burst, lost
        (1.0 - leave_gap) * (1.0 - d_g), // S4: stay in gap, lost
    ];
    let from_burst = [
        leave_burst * d_g,                 // S1: enter gap, received
        (1.0 - leave_burst) * (1.0 - d_b), // S2: stay in burst, received
        (1.0 - leave_burst) * d_b,         // S3: stay in burst, lost
        leave_burst * (1.0 - d_g),         // S4: enter gap, lost
    ];
    TransitionMatrix::new([from_gap, from_burst, from_burst, from_gap])
}

pub fn build_transition_matrix(params: &ChannelParams) -> Result<TransitionMatrix, ChannelError> {
    match params {
        ChannelParams::Basic(p) => build_basic_matrix(p),
        ChannelParams::Extended(p) => build_extended_matrix(p),
    }
}

/// Stationary loss rate implied by the parameters, in closed form.
///
/// The extended chain spends `L_B / (L_B + L_G)` of its time in burst
/// periods losing a `burst_density` fraction, and the rest in gap periods
/// losing `1 - gap_density`.
pub fn expected_loss_rate(params: &ChannelParams) -> Result<f64, ChannelError> {
    params.validate()?;
    Ok(match params {
        ChannelParams::Basic(_) => 0.5,
        ChannelParams::Extended(p) => {
            let total = p.mean_burst_length + p.mean_gap_length;
            (p.mean_burst_length * p.burst_density + p.mean_gap_length * (1.0 - p.gap_density)) / total
        }
    })
}

/// Walk the chain for `steps` transitions starting from `initial`; the first
/// element is the state *after* one transition, so `initial` itself is not
/// part of the returned trace.
pub fn sample_states(
    matrix: &TransitionMatrix,
    steps: usize,
    initial: ChannelState,
    rng: &mut ChaCha8Rng,
) -> Vec<ChannelState> {
    let mut out = Vec::with_capacity(steps);
    let mut current = initial;
    for _ in 0..steps {
        let row = &matrix.rows[current.index()];
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut next = ChannelState::S4;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                next = ChannelState::from_index(j).expect("j < 4");
                break;
            }
        }
        current = next;
        out.push(current);
    }
    out
}

const STATIONARY_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// Stationary distribution of an irreducible chain, by direct linear solve
/// of `pi T = pi` with the normalization `sum(pi) = 1` replacing one
/// redundant balance equation.
pub fn stationary_distribution(matrix: &TransitionMatrix) -> Result<[f64; NUM_STATES], ChannelError> {
    check_irreducible(matrix)?;

    // (T^t - I) pi = 0 with the last equation swapped for sum(pi) = 1.
    let n = NUM_STATES;
    let mut a = [[0.0f64; NUM_STATES]; NUM_STATES];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = matrix.rows[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    a[n - 1] = [1.0; NUM_STATES];
    let mut b = [0.0f64; NUM_STATES];
    b[n - 1] = 1.0;

    // Gaussian elimination with partial pivoting.
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&r, &s| a[r][col].abs().partial_cmp(&a[s][col].abs()).expect("finite"))
            .expect("non-empty range");
        a.swap(col, pivot);
        b.swap(col, pivot);
        let diag = a[col][col];
        if diag.abs() < 1e-14 {
            return Err(ChannelError::SolveResidual {
                residual: f64::INFINITY,
                tolerance: STATIONARY_RESIDUAL_TOLERANCE,
            });
        }
        for row in col + 1..n {
            let factor = a[row][col] / diag;
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut pi = [0.0f64; NUM_STATES];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * pi[k];
        }
        pi[row] = acc / a[row][row];
    }

    let residual = stationary_residual(matrix, &pi);
    if residual > STATIONARY_RESIDUAL_TOLERANCE || pi.iter().any(|&p| p < -1e-12) {
        return Err(ChannelError::SolveResidual {
            residual,
            tolerance: STATIONARY_RESIDUAL_TOLERANCE,
        });
    }
    for p in &mut pi {
        *p = p.max(0.0);
    }
    Ok(pi)
}

/// `max_i |(pi T)_i - pi_i|`.
pub fn stationary_residual(matrix: &TransitionMatrix, pi: &[f64; NUM_STATES]) -> f64 {
    let mut worst: f64 = 0.0;
    for j in 0..NUM_STATES {
        let mut acc = 0.0;
        for i in 0..NUM_STATES {
            acc += pi[i] * matrix.rows[i][j];
        }
        worst = worst.max((acc - pi[j]).abs());
    }
    worst
}

fn check_irreducible(matrix: &TransitionMatrix) -> Result<(), ChannelError> {
    let mut reach = [[false; NUM_STATES]; NUM_STATES];
    for i in 0..NUM_STATES {
        for j in 0..NUM_STATES {
            reach[i][j] = i == j || matrix.rows[i][j] > 0.0;
        }
    }
    for k in 0..NUM_STATES {
        for i in 0..NUM_STATES {
            for j in 0..NUM_STATES {
                reach[i][j] |= reach[i][k] && reach[k][j];
            }
        }
    }
    for i in 0..NUM_STATES {
        for j in 0..NUM_STATES {
            if !reach[i][j] {
                return Err(ChannelError::Reducible { from: i, unreachable: j });
            }
        }
    }
    Ok(())
}

/// Per-step reception flags derived from a state trace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossMask {
    received: Vec<bool>,
}

impl LossMask {
    pub fn new(received: Vec<bool>) -> Self {
        Self { received }
    }

    pub fn from_states(states: &[ChannelState]) -> Self {
        Self {
            received: states.iter().map(|s| s.is_received()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.received.len()
    }

    pub fn is_empty(&self) -> bool {
        self.received.is_empty()
    }

    pub fn is_received(&self, step: usize) -> bool {
        self.received[step]
    }

    pub fn iter(&self) -> impl Iterator<Item = bool> + '_ {
        self.received.iter().copied()
    }

    /// Fraction of steps lost; 0 for an empty mask.
    pub fn loss_rate(&self) -> f64 {
        if self.received.is_empty() {
            return 0.0;
        }
        let lost = self.received.iter().filter(|&&r| !r).count();
        lost as f64 / self.received.len() as f64
    }

    /// Lengths of maximal runs of consecutive lost steps.
    pub fn lost_run_lengths(&self) -> Vec<usize> {
        run_lengths(self.received.iter().map(|&r| !r))
    }

    /// Loss fraction over a trailing window of `window` steps ending at each
    /// step; early steps use the partial window available so far.
    pub fn trailing_loss_rate(&self, window: usize) -> Vec<f64> {
        assert!(window >= 1, "trailing window must be >= 1");
        let mut out = Vec::with_capacity(self.received.len());
        let mut lost_in_window = 0usize;
        for i in 0..self.received.len() {
            if !self.received[i] {
                lost_in_window += 1;
            }
            if i >= window && !self.received[i - window] {
                lost_in_window -= 1;
            }
            let span = (i + 1).min(window);
            out.push(lost_in_window as f64 / span as f64);
        }
        out
    }

    /// Serialize as one character per step ('1' received, '0' lost) plus a
    /// trailing newline.
    pub fn to_trace(&self) -> String {
        let mut s = String::with_capacity(self.received.len() + 1);
        for &r in &self.received {
            s.push(if r { '1' } else { '0' });
        }
        s.push('\n');
        s
    }

    pub fn from_trace(trace: &str) -> Result<Self, ChannelError> {
        let body = trace.strip_suffix('\n').unwrap_or(trace);
        let mut received = Vec::with_capacity(body.len());
        for (i, c) in body.chars().enumerate() {
            match c {
                '1' => received.push(true),
                '0' => received.push(false),
                other => return Err(ChannelError::BadTrace { index: i, found: other }),
            }
        }
        Ok(Self { received })
    }
}

fn run_lengths(flags: impl Iterator<Item = bool>) -> Vec<usize> {
    let mut runs = Vec::new();
    let mut current = 0usize;
    for f in flags {
        if f {
            current += 1;
        } else if current > 0 {
            runs.push(current);
            current = 0;
        }
    }
    if current > 0 {
        runs.push(current);
    }
    runs
}

/// Mean length of maximal runs spent in burst periods (states S2/S3);
/// `None` when the trace never enters one.
pub fn mean_burst_period_length(states: &[ChannelState]) -> Option<f64> {
    mean_run(states.iter().map(|s| s.in_burst_period()))
}

/// Mean length of maximal runs spent in gap periods (states S1/S4).
pub fn mean_gap_period_length(states: &[ChannelState]) -> Option<f64> {
    mean_run(states.iter().map(|s| !s.in_burst_period()))
}

fn mean_run(flags: impl Iterator<Item = bool>) -> Option<f64> {
    let runs = run_lengths(flags);
    if runs.is_empty() {
        None
    } else {
        Some(runs.iter().sum::<usize>() as f64 / runs.len() as f64)
    }
}

/// Zero out lost samples: rows of `positions` (shape `[n, 3]`) whose mask
/// step is lost become the origin `[0, 0, 0]`, modeling a receiver that has
/// no datum for that slot.
pub fn corrupt(positions: &Tensor, mask: &LossMask) -> Result<Tensor, ChannelError> {
    if positions.rank() != 2 || positions.shape()[1] != 3 {
        return Err(ChannelError::BadPositions {
            shape: positions.shape().to_vec(),
        });
    }
    if positions.shape()[0] != mask.len() {
        return Err(ChannelError::LengthMismatch {
            positions: positions.shape()[0],
            mask: mask.len(),
        });
    }
    let mut out = positions.clone();
    for (i, received) in mask.iter().enumerate() {
        if !received {
            for v in &mut out.data_mut()[i * 3..(i + 1) * 3] {
                *v = 0.0;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn extended(d_b: f64, d_g: f64, l_b: f64, l_g: f64) -> ExtendedChannelParams {
        ExtendedChannelParams {
            burst_density: d_b,
            gap_density: d_g,
            mean_burst_length: l_b,
            mean_gap_length: l_g,
        }
    }

    #[test]
    fn basic_matrix_has_cyclic_structure() {
        let m = build_basic_matrix(&BasicChannelParams { p_b: 0.2, p_g: 0.3 }).unwrap();
        assert_eq!(m.rows()[0], [0.8, 0.2, 0.0, 0.0]);
        assert_eq!(m.rows()[1], [0.0, 0.7, 0.3, 0.0]);
        assert_eq!(m.rows()[2], [0.0, 0.0, 0.7, 0.3]);
        assert_eq!(m.rows()[3], [0.2, 0.0, 0.0, 0.8]);
    }

    #[test]
    fn basic_stationary_matches_dwell_time_form() {
        // Dwell times are geometric, so pi is proportional to
        // (1/p_b, 1/p_g, 1/p_g, 1/p_b).
        let p = BasicChannelParams { p_b: 0.25, p_g: 0.4 };
        let m = build_basic_matrix(&p).unwrap();
        let pi = stationary_distribution(&m).unwrap();
        let unnorm = [1.0 / p.p_b, 1.0 / p.p_g, 1.0 / p.p_g, 1.0 / p.p_b];
        let z: f64 = unnorm.iter().sum();
        for (got, want) in pi.iter().zip(unnorm.iter().map(|v| v / z)) {
            assert_abs_diff_eq!(got, &want, epsilon = 1e-12);
        }
        // Received and lost pairs mirror each other: loss rate is exactly 1/2.
        assert_abs_diff_eq!(pi[2] + pi[3], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn extended_loss_rate_closed_form_on_known_grid() {
        // (burst_density, gap_density, mean_burst, mean_gap) -> loss rate
        let rows = [
            (0.3, 0.95, 4.0, 8.0, 0.13333333333333333),
            (0.4, 0.90, 5.0, 7.0, 0.225),
            (0.5, 0.85, 6.0, 6.0, 0.325),
            (0.6, 0.80, 8.0, 5.0, 0.4461538461538462),
            (0.7, 0.75, 10.0, 4.0, 0.5714285714285714),
            (0.8, 0.70, 12.0, 3.0, 0.7),
        ];
        for (d_b, d_g, l_b, l_g, want) in rows {
            let rate = expected_loss_rate(&ChannelParams::Extended(extended(d_b, d_g, l_b, l_g))).unwrap();
            assert_abs_diff_eq!(rate, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn extended_stationary_agrees_with_closed_form_rate() {
        let params = extended(0.5, 0.85, 6.0, 6.0);
        let m = build_extended_matrix(&params).unwrap();
        let pi = stationary_distribution(&m).unwrap();
        let rate = expected_loss_rate(&ChannelParams::Extended(params)).unwrap();
        assert_abs_diff_eq!(pi[2] + pi[3], rate, epsilon = 1e-12);

        // Product form: period marginal (burst fraction) times within-period
        // reception density.
        let b = params.mean_burst_length / (params.mean_burst_length + params.mean_gap_length);
        let g = 1.0 - b;
        assert_abs_diff_eq!(pi[0], g * params.gap_density, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[1], b * (1.0 - params.burst_density), epsilon = 1e-12);
        assert_abs_diff_eq!(pi[2], b * params.burst_density, epsilon = 1e-12);
        assert_abs_diff_eq!(pi[3], g * (1.0 - params.gap_density), epsilon = 1e-12);
    }

    /// Independent oracle: damped power iteration on (T + I) / 2, which has
    /// the same stationary vector but cannot oscillate on periodic chains.
    fn stationary_by_power_iteration(m: &TransitionMatrix) -> [f64; NUM_STATES] {
        let mut pi = [0.25f64; NUM_STATES];
        for _ in 0..20_000 {
            let mut next = [0.0f64; NUM_STATES];
            for j in 0..NUM_STATES {
                for i in 0..NUM_STATES {
                    next[j] += pi[i] * (m.rows()[i][j] + if i == j { 1.0 } else { 0.0 }) / 2.0;
                }
            }
            let z: f64 = next.iter().sum();
            for v in &mut next {
                *v /= z;
            }
            pi = next;
        }
        pi
    }

    #[test]
    fn linear_solve_matches_power_iteration_oracle() {
        let cases = [
            build_basic_matrix(&BasicChannelParams { p_b: 0.15, p_g: 0.6 }).unwrap(),
            build_extended_matrix(&extended(0.3, 0.95, 4.0, 8.0)).unwrap(),
            build_extended_matrix(&extended(0.8, 0.7, 12.0, 3.0)).unwrap(),
        ];
        for m in cases {
            let direct = stationary_distribution(&m).unwrap();
            let iterated = stationary_by_power_iteration(&m);
            for (a, b) in direct.iter().zip(iterated) {
                assert_abs_diff_eq!(a, &b, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn degenerate_densities_make_chain_reducible() {
        // With burst_density = 1 and gap_density = 1, S2 and S4 can never be
        // entered, so the 4-state chain is reducible and the solver says so.
        let m = build_extended_matrix(&extended(1.0, 1.0, 4.0, 8.0)).unwrap();
        assert!(matches!(
            stationary_distribution(&m),
            Err(ChannelError::Reducible { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let m = build_extended_matrix(&extended(0.5, 0.85, 6.0, 6.0)).unwrap();
        let a = sample_states(&m, 500, ChannelState::S1, &mut rng::seeded(9));
        let b = sample_states(&m, 500, ChannelState::S1, &mut rng::seeded(9));
        let c = sample_states(&m, 500, ChannelState::S1, &mut rng::seeded(10));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_loss_rate_approaches_stationary() {
        let params = extended(0.4, 0.9, 5.0, 7.0);
        let m = build_extended_matrix(&params).unwrap();
        let states = sample_states(&m, 100_000, ChannelState::S1, &mut rng::seeded(3));
        let mask = LossMask::from_states(&states);
        let want = expected_loss_rate(&ChannelParams::Extended(params)).unwrap();
        assert!((mask.loss_rate() - want).abs() < 0.01, "{} vs {want}", mask.loss_rate());
    }

    #[test]
    fn empirical_burst_period_length_matches_parameter() {
        let params = extended(0.6, 0.8, 8.0, 5.0);
        let m = build_extended_matrix(&params).unwrap();
        let states = sample_states(&m, 100_000, ChannelState::S1, &mut rng::seeded(4));
        let mean = mean_burst_period_length(&states).unwrap();
        assert!((mean - 8.0).abs() / 8.0 < 0.05, "mean burst period {mean}");
    }

    #[test]
    fn corrupt_zeroes_exactly_the_lost_rows() {
        let positions = Tensor::from_rows(&[
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ])
        .unwrap();
        let mask = LossMask::new(vec![true, false, true]);
        let out = corrupt(&positions, &mask).unwrap();
        assert_eq!(out.row(0), &[1.0, 2.0, 3.0]);
        assert_eq!(out.row(1), &[0.0, 0.0, 0.0]);
        assert_eq!(out.row(2), &[7.0, 8.0, 9.0]);
    }

    #[test]
    fn corrupt_rejects_length_mismatch() {
        let positions = Tensor::zeros(&[3, 3]);
        let mask = LossMask::new(vec![true, true]);
        assert!(matches!(
            corrupt(&positions, &mask),
            Err(ChannelError::LengthMismatch { positions: 3, mask: 2 })
        ));
    }

    #[test]
    fn trace_round_trips_and_rejects_garbage() {
        let mask = LossMask::new(vec![true, false, false, true]);
        let trace = mask.to_trace();
        assert_eq!(trace, "1001\n");
        assert_eq!(LossMask::from_trace(&trace).unwrap(), mask);
        assert!(matches!(
            LossMask::from_trace("10x1\n"),
            Err(ChannelError::BadTrace { index: 2, found: 'x' })
        ));
    }

    #[test]
    fn lost_runs_are_maximal() {
        let mask = LossMask::new(vec![false, false, true, false, true, false, false, false]);
        assert_eq!(mask.lost_run_lengths(), vec![2, 1, 3]);
    }

    proptest! {
        #[test]
        fn extended_rows_are_stochastic(
            d_b in 0.0f64..=1.0,
            d_g in 0.0f64..=1.0,
            l_b in 1.0f64..64.0,
            l_g in 1.0f64..64.0,
        ) {
            let m = build_extended_matrix(&extended(d_b, d_g, l_b, l_g)).unwrap();
            for row in m.rows() {
                let sum: f64 = row.iter().sum();
                prop_assert!((sum - 1.0).abs() < 1e-12);
                prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }

        #[test]
        fn stationary_loss_rate_matches_closed_form(
            d_b in 0.01f64..=0.99,
            d_g in 0.01f64..=0.99,
            l_b in 1.5f64..32.0,
            l_g in 1.5f64..32.0,
        ) {
            let params = extended(d_b, d_g, l_b, l_g);
            let m = build_extended_matrix(&params).unwrap();
            let pi = stationary_distribution(&m).unwrap();
            let rate = expected_loss_rate(&ChannelParams::Extended(params)).unwrap();
            prop_assert!((pi[2] + pi[3] - rate).abs() < 1e-10);
        }

        #[test]
        fn trace_round_trip(mask in proptest::collection::vec(any::<bool>(), 0..200)) {
            let m = LossMask::new(mask);
            prop_assert_eq!(LossMask::from_trace(&m.to_trace()).unwrap(), m);
        }

        #[test]
        fn corrupting_twice_is_idempotent(
            rows in proptest::collection::vec(
                (any::<bool>(), -10.0f64..10.0, -10.0f64..10.0, -10.0f64..10.0),
                1..50,
            )
        ) {
            let mask = LossMask::new(rows.iter().map(|r| r.0).collect());
            let positions = Tensor::from_rows(
                &rows.iter().map(|r| vec![r.1, r.2, r.3]).collect::<Vec<_>>()
            ).unwrap();
            let once = corrupt(&positions, &mask).unwrap();
            let twice = corrupt(&once, &mask).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
