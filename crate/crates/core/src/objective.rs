//! Training objective: position error, energy, smoothness, and
//! network-robustness terms, soft hinge-squared penalties for the
//! operational constraints, and a hard feasibility checker for reporting.
//!
//! Differentiable pieces build onto a [`Graph`]; the robustness term Φ and
//! the latency penalty depend only on measured network features, so they
//! enter the tape as constants (they shift the loss but not its gradient).

use crate::autodiff::{AutodiffError, Graph, ValueId};
use crate::data::NetworkFeatures;
use crate::tensor::Tensor;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("{name} must be finite and nonnegative, got {value}")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error("invalid constraint limits: {reason}")]
    InvalidLimits { reason: String },
    #[error("{op} needs at least {needed} timesteps, got {got}")]
    TooShort {
        op: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("loss term '{term}' is not finite")]
    NonFiniteTerm { term: &'static str },
    #[error(transparent)]
    Graph(#[from] AutodiffError),
}

/// Coefficients of the training objective. `alpha` weights the energy
/// term, `beta` the network-robustness term, `gamma1` the smoothness
/// term, `delta1` the decoder-side energy penalty, `gamma2` the latency
/// penalty inside the encoder auxiliary loss; `lambda_v`/`lambda_omega`
/// set the linear/angular split inside the energy expression, and the
/// `eta` weights combine loss rate, latency, and jitter into Φ.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct ObjectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: f64,
    pub delta1: f64,
    pub lambda_v: f64,
    pub lambda_omega: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub eta3: f64,
    pub gamma2: f64,
}

impl ObjectiveWeights {
    /// Everything off: the objective reduces to the plain position loss.
    pub fn zero() -> Self {
        Self {
            alpha: 0.0,
            beta: 0.0,
            gamma1: 0.0,
            delta1: 0.0,
            lambda_v: 0.0,
            lambda_omega: 0.0,
            eta1: 0.0,
            eta2: 0.0,
            eta3: 0.0,
            gamma2: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let fields = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma1", self.gamma1),
            ("delta1", self.delta1),
            ("lambda_v", self.lambda_v),
            ("lambda_omega", self.lambda_omega),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("eta3", self.eta3),
            ("gamma2", self.gamma2),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(ObjectiveError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }
}

impl Default for ObjectiveWeights {
    /// Mild regularization: position error dominates, the auxiliary terms
    /// nudge predictions toward smooth, low-energy trajectories without
    /// moving the accuracy needle.
    fn default() -> Self {
        Self {
            alpha: 1e-4,
            beta: 1e-3,
            gamma1: 1e-5,
            delta1: 1e-4,
            lambda_v: 1.0,
            lambda_omega: 1.0,
            eta1: 1.0,
            eta2: 0.01,
            eta3: 0.02,
            gamma2: 1e-5,
        }
    }
}

/// Per-constraint weights for the soft penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyWeights {
    pub sync: f64,
    pub workspace: f64,
    pub velocity: f64,
    pub angular: f64,
    pub acceleration: f64,
    pub gripper: f64,
    pub energy: f64,
}

impl Default for PenaltyWeights {
    fn default() -> Self {
        Self {
            sync: 1.0,
            workspace: 1.0,
            velocity: 1.0,
            angular: 1.0,
            acceleration: 1.0,
            gripper: 1.0,
            energy: 1.0,
        }
    }
}

impl PenaltyWeights {
    pub fn zero() -> Self {
        Self {
            sync: 0.0,
            workspace: 0.0,
            velocity: 0.0,
            angular: 0.0,
            acceleration: 0.0,
            gripper: 0.0,
            energy: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let fields = [
            ("penalty.sync", self.sync),
            ("penalty.workspace", self.workspace),
            ("penalty.velocity", self.velocity),
            ("penalty.angular", self.angular),
            ("penalty.acceleration", self.acceleration),
            ("penalty.gripper", self.gripper),
            ("penalty.energy", self.energy),
        ];
        for (name, value) in fields {
            if !value.is_finite() || value < 0.0 {
                return Err(ObjectiveError::InvalidWeight { name, value });
            }
        }
        Ok(())
    }

    fn any_active(&self) -> bool {
        self.sync > 0.0
            || self.workspace > 0.0
            || self.velocity > 0.0
            || self.angular > 0.0
            || self.acceleration > 0.0
            || self.gripper > 0.0
            || self.energy > 0.0
    }
}

/// Operational limits on the predicted trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstraintLimits {
    /// Max position change between consecutive predictions, meters.
    pub epsilon_sync: f64,
    /// Workspace box, meters.
    pub p_min: [f64; 3],
    pub p_max: [f64; 3],
    /// m/s.
    pub v_max: f64,
    /// rad/s.
    pub omega_max: f64,
    /// m/s².
    pub a_max: f64,
    /// Gripper angle range, radians.
    pub gamma_min: f64,
    pub gamma_max: f64,
    /// Budget for the energy summed over the horizon.
    pub e_max: f64,
    /// Sample interval, seconds.
    pub dt: f64,
}

impl Default for ConstraintLimits {
    /// Sized for the synthetic generator defaults with comfortable margin.
    fn default() -> Self {
        Self {
            epsilon_sync: 0.02,
            p_min: [-0.2; 3],
            p_max: [0.2; 3],
            v_max: 0.5,
            omega_max: 0.5,
            a_max: 3.0,
            gamma_min: 0.1,
            gamma_max: 1.2,
            e_max: 10.0,
            dt: 1.0 / 30.0,
        }
    }
}

impl ConstraintLimits {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        let err = |reason: String| Err(ObjectiveError::InvalidLimits { reason });
        for i in 0..3 {
            if self.p_min[i] > self.p_max[i] {
                return err(format!(
                    "p_min[{i}] = {} exceeds p_max[{i}] = {}",
                    self.p_min[i], self.p_max[i]
                ));
            }
            if !self.p_min[i].is_finite() || !self.p_max[i].is_finite() {
                return err(format!("workspace bounds on axis {i} must be finite"));
            }
        }
        let positives = [
            ("epsilon_sync", self.epsilon_sync),
            ("v_max", self.v_max),
            ("omega_max", self.omega_max),
            ("a_max", self.a_max),
            ("gamma_min", self.gamma_min),
            ("gamma_max", self.gamma_max),
            ("e_max", self.e_max),
            ("dt", self.dt),
        ];
        for (name, value) in positives {
            if !value.is_finite() || value <= 0.0 {
                return err(format!("{name} must be positive and finite, got {value}"));
            }
        }
        if self.gamma_min > self.gamma_max {
            return err(format!(
                "gamma_min = {} exceeds gamma_max = {}",
                self.gamma_min, self.gamma_max
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintStatus {
    Pass,
    Fail,
    /// The data needed for this check was not supplied.
    Skipped,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    pub name: &'static str,
    pub status: ConstraintStatus,
    /// Signed worst-case violation; ≤ 0 means the constraint holds
    /// (boundary inclusive).
    pub worst_violation: f64,
    /// Timestep of the worst violation; `None` for aggregate constraints.
    pub time_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub constraints: Vec<ConstraintReport>,
}

impl FeasibilityReport {
    /// True when no evaluated constraint fails (skipped checks don't count).
    pub fn all_pass(&self) -> bool {
        self.constraints.iter().all(|c| c.status != ConstraintStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&ConstraintReport> {
        self.constraints.iter().find(|c| c.name == name)
    }
}

fn check_rows3(op: &'static str, t: &Tensor) -> Result<usize, ObjectiveError> {
    if t.rank() != 2 || t.shape()[1] != 3 {
        return Err(ObjectiveError::Shape {
            op,
            lhs: t.shape().to_vec(),
            rhs: vec![0, 3],
        });
    }
    Ok(t.shape()[0])
}

/// Mean over timesteps of the squared Euclidean error.
pub fn position_loss(g: &mut Graph, p_hat: ValueId, p_true: ValueId) -> Result<ValueId, ObjectiveError> {
    let rows = check_rows3("position_loss", g.value(p_hat))?;
    let diff = g.sub(p_hat, p_true)?;
    let ss = g.sum_of_squares(diff);
    Ok(g.scale(ss, 1.0 / rows as f64))
}

/// Forward-difference velocities, `[T-1, 3]`.
pub fn velocity_rows(g: &mut Graph, p_hat: ValueId, dt: f64) -> Result<ValueId, ObjectiveError> {
    let rows = check_rows3("velocity_rows", g.value(p_hat))?;
    if rows < 2 {
        return Err(ObjectiveError::TooShort {
            op: "velocity_rows",
            needed: 2,
            got: rows,
        });
    }
    let next = g.slice_rows(p_hat, 1, rows)?;
    let prev = g.slice_rows(p_hat, 0, rows - 1)?;
    let diff = g.sub(next, prev)?;
    Ok(g.scale(diff, 1.0 / dt))
}

/// Second-difference accelerations, `[T-2, 3]`.
pub fn acceleration_rows(g: &mut Graph, p_hat: ValueId, dt: f64) -> Result<ValueId, ObjectiveError> {
    let rows = check_rows3("acceleration_rows", g.value(p_hat))?;
    if rows < 3 {
        return Err(ObjectiveError::TooShort {
            op: "acceleration_rows",
            needed: 3,
            got: rows,
        });
    }
    let v = velocity_rows(g, p_hat, dt)?;
    velocity_rows(g, v, dt)
}

/// Mean per-step energy `λ_v‖v̂‖² + λ_ω‖ω̂‖²`. The angular part needs
/// supplied angular rates (`[T-1, 3]`, aligned with the velocity rows);
/// without them `lambda_omega` is forced to zero.
pub fn energy_term(
    g: &mut Graph,
    p_hat: ValueId,
    dt: f64,
    lambda_v: f64,
    lambda_omega: f64,
    omega: Option<ValueId>,
) -> Result<ValueId, ObjectiveError> {
    let v = velocity_rows(g, p_hat, dt)?;
    let steps = g.value(v).shape()[0];
    let ssv = g.sum_of_squares(v);
    let mut e = g.scale(ssv, lambda_v / steps as f64);
    if let Some(w) = omega {
        let w_rows = g.value(w).shape().to_vec();
        if w_rows != [steps, 3] {
            return Err(ObjectiveError::Shape {
                op: "energy_term(omega)",
                lhs: w_rows,
                rhs: vec![steps, 3],
            });
        }
        let ssw = g.sum_of_squares(w);
        let ew = g.scale(ssw, lambda_omega / steps as f64);
        e = g.add(e, ew)?;
    }
    Ok(e)
}

/// Mean squared acceleration norm.
pub fn smoothness_term(g: &mut Graph, p_hat: ValueId, dt: f64) -> Result<ValueId, ObjectiveError> {
    let a = acceleration_rows(g, p_hat, dt)?;
    let steps = g.value(a).shape()[0];
    let ss = g.sum_of_squares(a);
    Ok(g.scale(ss, 1.0 / steps as f64))
}

/// Network-robustness term Φ: mean over the span of
/// `η₁·loss_rate + η₂·latency + η₃·jitter` (latency and jitter in
/// milliseconds; the η weights absorb the units). Constant with respect to
/// the prediction, so it is returned as a plain number.
pub fn robustness_term(net: &NetworkFeatures, eta1: f64, eta2: f64, eta3: f64) -> f64 {
    let n = net.len();
    if n == 0 {
        return 0.0;
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / n as f64;
    // Small-to-large summation of the three weighted means keeps the last
    // rounding step as tight as possible.
    let mut parts = [
        eta1 * mean(&net.loss_rate),
        eta2 * mean(&net.latency_ms),
        eta3 * mean(&net.jitter_ms),
    ];
    parts.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    parts[0] + parts[1] + parts[2]
}

/// Encoder auxiliary loss: squared-error reconstruction of the clean
/// encoder-span positions through a linear head (`head_w` `[d, 3]`,
/// `head_b` `[3]`) on the latent, plus `γ₁`-weighted smoothness of that
/// reconstruction and a `γ₂`-weighted mean latency penalty.
#[allow(clippy::too_many_arguments)]
pub fn encoder_aux_loss(
    g: &mut Graph,
    latent: ValueId,
    head_w: ValueId,
    head_b: ValueId,
    clean_positions: ValueId,
    gamma1: f64,
    gamma2: f64,
    mean_latency_ms: f64,
    dt: f64,
) -> Result<ValueId, ObjectiveError> {
    let proj = g.matmul(latent, head_w)?;
    let recon = g.add_row_broadcast(proj, head_b)?;
    let rows = check_rows3("encoder_aux_loss", g.value(recon))?;
    let clean_shape = g.value(clean_positions).shape().to_vec();
    if clean_shape != [rows, 3] {
        return Err(ObjectiveError::Shape {
            op: "encoder_aux_loss",
            lhs: clean_shape,
            rhs: vec![rows, 3],
        });
    }
    let diff = g.sub(recon, clean_positions)?;
    let ss = g.sum_of_squares(diff);
    let mut loss = g.scale(ss, 1.0 / rows as f64);
    if gamma1 > 0.0 {
        let smooth = smoothness_term(g, recon, dt)?;
        let weighted = g.scale(smooth, gamma1);
        loss = g.add(loss, weighted)?;
    }
    if gamma2 > 0.0 {
        let latency = g.scalar(gamma2 * mean_latency_ms);
        loss = g.add(loss, latency)?;
    }
    Ok(loss)
}

/// Keeps `sqrt` differentiable when a row norm is exactly zero (a constant
/// prediction otherwise produces 0·∞ in the chain rule). The offset
/// perturbs norms by under 1e-12, far below every tolerance in use.
const NORM_EPS: f64 = 1e-24;

fn row_norms(g: &mut Graph, x: ValueId) -> Result<ValueId, ObjectiveError> {
    let ss = g.row_sum_sq(x)?;
    let shifted = g.affine(ss, 1.0, NORM_EPS);
    Ok(g.sqrt(shifted)?)
}

/// weight · mean(relu(x)²) over all elements of `x`.
fn hinge_sq_mean(g: &mut Graph, x: ValueId, weight: f64) -> ValueId {
    let n = g.value(x).len();
    let h = g.relu(x);
    let ss = g.sum_of_squares(h);
    g.scale(ss, weight / n as f64)
}

/// Soft version of the operational constraints: for each active
/// constraint, `weight · mean(max(0, violation)²)` with the violation
/// measured on the same scale as the hard checker (norm excess in meters,
/// m/s, m/s², radians, energy units). The energy budget compares the
/// energy summed over the horizon; the loss-side energy term uses the
/// per-step mean.
#[allow(clippy::too_many_arguments)]
pub fn penalty_loss(
    g: &mut Graph,
    p_hat: ValueId,
    gripper: Option<ValueId>,
    omega: Option<ValueId>,
    limits: &ConstraintLimits,
    pw: &PenaltyWeights,
    lambda_v: f64,
    lambda_omega: f64,
) -> Result<ValueId, ObjectiveError> {
    limits.validate()?;
    pw.validate()?;
    let rows = check_rows3("penalty_loss", g.value(p_hat))?;

    let mut total = g.scalar(0.0);

    if pw.sync > 0.0 && rows >= 2 {
        let next = g.slice_rows(p_hat, 1, rows)?;
        let prev = g.slice_rows(p_hat, 0, rows - 1)?;
        let step = g.sub(next, prev)?;
        let norms = row_norms(g, step)?;
        let excess = g.affine(norms, 1.0, -limits.epsilon_sync);
        let term = hinge_sq_mean(g, excess, pw.sync);
        total = g.add(total, term)?;
    }

    if pw.workspace > 0.0 {
        let hi_row = g.input(Tensor::new(vec![3], limits.p_max.iter().map(|v| -v).collect()).unwrap());
        let lo_row = g.input(Tensor::new(vec![3], limits.p_min.to_vec()).unwrap());
        let above = g.add_row_broadcast(p_hat, hi_row)?;
        let neg = g.scale(p_hat, -1.0);
        let below = g.add_row_broadcast(neg, lo_row)?;
        let t_hi = hinge_sq_mean(g, above, pw.workspace);
        let t_lo = hinge_sq_mean(g, below, pw.workspace);
        total = g.add(total, t_hi)?;
        total = g.add(total, t_lo)?;
    }

    let v = if rows >= 2 {
        Some(velocity_rows(g, p_hat, limits.dt)?)
    } else {
        None
    };

    if pw.velocity > 0.0 {
        if let Some(v) = v {
            let norms = row_norms(g, v)?;
            let excess = g.affine(norms, 1.0, -limits.v_max);
            let term = hinge_sq_mean(g, excess, pw.velocity);
            total = g.add(total, term)?;
        }
    }

    if pw.angular > 0.0 {
        if let Some(w) = omega {
            let norms = row_norms(g, w)?;
            let excess = g.affine(norms, 1.0, -limits.omega_max);
            let term = hinge_sq_mean(g, excess, pw.angular);
            total = g.add(total, term)?;
        }
    }

    if pw.acceleration > 0.0 && rows >= 3 {
        let a = acceleration_rows(g, p_hat, limits.dt)?;
        let norms = row_norms(g, a)?;
        let excess = g.affine(norms, 1.0, -limits.a_max);
        let term = hinge_sq_mean(g, excess, pw.acceleration);
        total = g.add(total, term)?;
    }

    if pw.gripper > 0.0 {
        if let Some(gr) = gripper {
            let above = g.affine(gr, 1.0, -limits.gamma_max);
            let below = g.affine(gr, -1.0, limits.gamma_min);
            let t_hi = hinge_sq_mean(g, above, pw.gripper);
            let t_lo = hinge_sq_mean(g, below, pw.gripper);
            total = g.add(total, t_hi)?;
            total = g.add(total, t_lo)?;
        }
    }

    if pw.energy > 0.0 {
        if let Some(v) = v {
            let ssv = g.sum_of_squares(v);
            let mut e_total = g.scale(ssv, lambda_v);
            if let Some(w) = omega {
                let ssw = g.sum_of_squares(w);
                let ew = g.scale(ssw, lambda_omega);
                e_total = g.add(e_total, ew)?;
            }
            let excess = g.affine(e_total, 1.0, -limits.e_max);
            let term = hinge_sq_mean(g, excess, pw.energy);
            total = g.add(total, term)?;
        }
    }

    Ok(total)
}

/// Per-term contributions to the total loss, already weighted. The fields
/// sum to `total` (identically: the total is assembled by adding them in
/// this order).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub position: f64,
    pub energy: f64,
    pub smoothness: f64,
    pub robustness: f64,
    pub decoder_energy: f64,
    pub encoder_aux: f64,
    pub penalties: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn sum_of_terms(&self) -> f64 {
        self.position
            + self.energy
            + self.smoothness
            + self.robustness
            + self.decoder_energy
            + self.encoder_aux
            + self.penalties
    }
}

/// Inputs to [`total_loss`] beyond the weights: prediction and target on
/// the tape, sample interval, measured network features for Φ, optional
/// prebuilt encoder auxiliary term, and optional gripper/angular data for
/// the corresponding constraint penalties.
pub struct TotalLossTerms<'a> {
    pub p_hat: ValueId,
    pub p_true: ValueId,
    pub dt: f64,
    pub net: Option<&'a NetworkFeatures>,
    pub encoder_aux: Option<ValueId>,
    pub gripper: Option<ValueId>,
    pub omega: Option<ValueId>,
}

/// Assemble the full training objective. Zero-weight terms are skipped
/// entirely, so with every auxiliary weight at zero the returned value is
/// the position-loss node itself, bit for bit.
pub fn total_loss(
    g: &mut Graph,
    terms: &TotalLossTerms,
    weights: &ObjectiveWeights,
    penalties: Option<(&ConstraintLimits, &PenaltyWeights)>,
) -> Result<(ValueId, LossBreakdown), ObjectiveError> {
    weights.validate()?;
    let mut breakdown = LossBreakdown::default();

    let finite = |g: &Graph, id: ValueId, term: &'static str| -> Result<f64, ObjectiveError> {
        let v = g.value(id).scalar_value().map_err(|e| AutodiffError::Invalid {
            op: "total_loss",
            reason: e.to_string(),
        })?;
        if !v.is_finite() {
            return Err(ObjectiveError::NonFiniteTerm { term });
        }
        Ok(v)
    };

    let mut total = position_loss(g, terms.p_hat, terms.p_true)?;
    breakdown.position = finite(g, total, "position")?;

    let energy = if weights.alpha > 0.0 || weights.delta1 > 0.0 {
        let e = energy_term(
            g,
            terms.p_hat,
            terms.dt,
            weights.lambda_v,
            weights.lambda_omega,
            terms.omega,
        )?;
        finite(g, e, "energy")?;
        Some(e)
    } else {
        None
    };

    if weights.alpha > 0.0 {
        let weighted = g.scale(energy.unwrap(), weights.alpha);
        breakdown.energy = finite(g, weighted, "energy")?;
        total = g.add(total, weighted)?;
    }

    if weights.gamma1 > 0.0 {
        let s = smoothness_term(g, terms.p_hat, terms.dt)?;
        let weighted = g.scale(s, weights.gamma1);
        breakdown.smoothness = finite(g, weighted, "smoothness")?;
        total = g.add(total, weighted)?;
    }

    if weights.beta > 0.0 {
        if let Some(net) = terms.net {
            let phi = robustness_term(net, weights.eta1, weights.eta2, weights.eta3);
            if !phi.is_finite() {
                return Err(ObjectiveError::NonFiniteTerm { term: "robustness" });
            }
            let node = g.scalar(weights.beta * phi);
            breakdown.robustness = weights.beta * phi;
            total = g.add(total, node)?;
        }
    }

    if weights.delta1 > 0.0 {
        let weighted = g.scale(energy.unwrap(), weights.delta1);
        breakdown.decoder_energy = finite(g, weighted, "decoder-energy")?;
        total = g.add(total, weighted)?;
    }

    if let Some(aux) = terms.encoder_aux {
        breakdown.encoder_aux = finite(g, aux, "encoder-aux")?;
        total = g.add(total, aux)?;
    }

    if let Some((limits, pw)) = penalties {
        if pw.any_active() {
            let p = penalty_loss(
                g,
                terms.p_hat,
                terms.gripper,
                terms.omega,
                limits,
                pw,
                weights.lambda_v,
                weights.lambda_omega,
            )?;
            breakdown.penalties = finite(g, p, "penalties")?;
            total = g.add(total, p)?;
        }
    }

    breakdown.total = finite(g, total, "total")?;
    Ok((total, breakdown))
}

pub const CONSTRAINT_SYNC: &str = "sync";
pub const CONSTRAINT_WORKSPACE: &str = "workspace";
pub const CONSTRAINT_VELOCITY: &str = "velocity";
pub const CONSTRAINT_ANGULAR: &str = "angular-velocity";
pub const CONSTRAINT_ACCELERATION: &str = "acceleration";
pub const CONSTRAINT_GRIPPER: &str = "gripper";
pub const CONSTRAINT_ENERGY: &str = "energy-budget";

fn norm3(row: &[f64]) -> f64 {
    (row[0] * row[0] + row[1] * row[1] + row[2] * row[2]).sqrt()
}

/// Hard, boundary-inclusive evaluation of every operational constraint.
/// Checks whose data is missing (gripper, angular velocity) or whose
/// trajectory is too short to evaluate are reported as skipped.
pub fn constraint_check(
    p_hat: &Tensor,
    gripper: Option<&[f64]>,
    omega: Option<&Tensor>,
    limits: &ConstraintLimits,
    lambda_v: f64,
    lambda_omega: f64,
) -> Result<FeasibilityReport, ObjectiveError> {
    limits.validate()?;
    let rows = check_rows3("constraint_check", p_hat)?;
    let dt = limits.dt;
    let mut constraints = Vec::new();

    let worst = |name: &'static str,
                     values: Box<dyn Iterator<Item = (f64, Option<usize>)> + '_>|
     -> ConstraintReport {
        let mut worst_violation = f64::NEG_INFINITY;
        let mut time_index = None;
        let mut seen = false;
        for (v, idx) in values {
            seen = true;
            if v > worst_violation {
                worst_violation = v;
                time_index = idx;
            }
        }
        if !seen {
            return ConstraintReport {
                name,
                status: ConstraintStatus::Skipped,
                worst_violation: 0.0,
                time_index: None,
            };
        }
        ConstraintReport {
            name,
            status: if worst_violation > 0.0 {
                ConstraintStatus::Fail
            } else {
                ConstraintStatus::Pass
            },
            worst_violation,
            time_index,
        }
    };

    let step_norm = |t: usize| {
        let a = p_hat.row(t);
        let b = p_hat.row(t - 1);
        norm3(&[a[0] - b[0], a[1] - b[1], a[2] - b[2]])
    };

    constraints.push(worst(
        CONSTRAINT_SYNC,
        Box::new((1..rows).map(move |t| (step_norm(t) - limits.epsilon_sync, Some(t)))),
    ));

    constraints.push(worst(
        CONSTRAINT_WORKSPACE,
        Box::new((0..rows).map(move |t| {
            let p = p_hat.row(t);
            let mut excess = f64::NEG_INFINITY;
            for i in 0..3 {
                excess = excess.max(p[i] - limits.p_max[i]).max(limits.p_min[i] - p[i]);
            }
            (excess, Some(t))
        })),
    ));

    constraints.push(worst(
        CONSTRAINT_VELOCITY,
        Box::new((1..rows).map(move |t| (step_norm(t) / dt - limits.v_max, Some(t)))),
    ));

    match omega {
        Some(w) => {
            let w_rows = check_rows3("constraint_check(omega)", w)?;
            constraints.push(worst(
                CONSTRAINT_ANGULAR,
                Box::new((0..w_rows).map(move |t| (norm3(w.row(t)) - limits.omega_max, Some(t)))),
            ));
        }
        None => constraints.push(worst(CONSTRAINT_ANGULAR, Box::new(std::iter::empty()))),
    }

    constraints.push(worst(
        CONSTRAINT_ACCELERATION,
        Box::new((2..rows).map(move |t| {
            let a2 = p_hat.row(t);
            let a1 = p_hat.row(t - 1);
            let a0 = p_hat.row(t - 2);
            let acc = [
                (a2[0] - 2.0 * a1[0] + a0[0]) / (dt * dt),
                (a2[1] - 2.0 * a1[1] + a0[1]) / (dt * dt),
                (a2[2] - 2.0 * a1[2] + a0[2]) / (dt * dt),
            ];
            (norm3(&acc) - limits.a_max, Some(t))
        })),
    ));

    match gripper {
        Some(gam) => constraints.push(worst(
            CONSTRAINT_GRIPPER,
            Box::new(gam.iter().enumerate().map(move |(t, &v)| {
                ((v - limits.gamma_max).max(limits.gamma_min - v), Some(t))
            })),
        )),
        None => constraints.push(worst(CONSTRAINT_GRIPPER, Box::new(std::iter::empty()))),
    }

    let energy_total = if rows >= 2 {
        let mut e = 0.0;
        for t in 1..rows {
            let s = step_norm(t) / dt;
            e += lambda_v * s * s;
        }
        if let Some(w) = omega {
            for t in 0..w.shape()[0] {
                let n = norm3(w.row(t));
                e += lambda_omega * n * n;
            }
        }
        Some(e)
    } else {
        None
    };
    match energy_total {
        Some(e) => constraints.push(worst(
            CONSTRAINT_ENERGY,
            Box::new(std::iter::once((e - limits.e_max, None))),
        )),
        None => constraints.push(worst(CONSTRAINT_ENERGY, Box::new(std::iter::empty()))),
    }

    Ok(FeasibilityReport { constraints })
}
