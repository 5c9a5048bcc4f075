//! Joint-space dynamics: `M(q) q̈ + c(q, q̇) + g(q) = τ + τ_ext`.
//!
//! The inertia matrix and gravity vector are assembled from per-link
//! Jacobians (Lagrangian summation); the velocity-product torques come from
//! a recursive Newton-Euler pass with gravity and acceleration zeroed, so the
//! two routes check each other in the tests.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::kinematics::ChainFrames;
use super::{DynamicsError, JointState, ManipulatorModel, Wrench};

/// Largest integration step accepted by [`step_dynamics`].
pub const MAX_STEP: f64 = 0.01;

/// Smallest singular value of the task Jacobian below which the
/// operational-space inertia is refused.
pub const SINGULARITY_THRESHOLD: f64 = 1e-6;

fn world_inertia(frames: &ChainFrames, model: &ManipulatorModel, i: usize) -> Matrix3<f64> {
    let r = frames.links[i].rotation_matrix();
    r * model.links[i].inertia * r.transpose()
}

/// Joint-space inertia matrix `M(q)`, N×N.
pub fn inertia_matrix(model: &ManipulatorModel, q: &DVector<f64>) -> Result<DMatrix<f64>, DynamicsError> {
    let frames = ChainFrames::compute(model, q)?;
    Ok(inertia_from_frames(model, &frames))
}

pub(crate) fn inertia_from_frames(model: &ManipulatorModel, frames: &ChainFrames) -> DMatrix<f64> {
    let n = model.dof();
    let mut m = DMatrix::zeros(n, n);
    for (i, link) in model.links.iter().enumerate() {
        let jac = frames.point_jacobian(i, &frames.com(model, i));
        let jv = jac.rows(0, 3);
        let jw = jac.rows(3, 3);
        let iw = world_inertia(frames, model, i);
        m += link.mass * jv.transpose() * jv + jw.transpose() * iw * jw;
    }
    for (i, joint) in model.joints.iter().enumerate() {
        m[(i, i)] += joint.armature;
    }
    // summation order leaves ~1 ulp asymmetry; mirror the upper triangle
    m.fill_lower_triangle_with_upper_triangle();
    m
}

/// Gravitational torques `g(q) = ∂V/∂q`.
pub fn gravity_torques(model: &ManipulatorModel, q: &DVector<f64>) -> Result<DVector<f64>, DynamicsError> {
    let frames = ChainFrames::compute(model, q)?;
    Ok(gravity_from_frames(model, &frames))
}

pub(crate) fn gravity_from_frames(model: &ManipulatorModel, frames: &ChainFrames) -> DVector<f64> {
    let mut g = DVector::zeros(model.dof());
    for (i, link) in model.links.iter().enumerate() {
        let jac = frames.point_jacobian(i, &frames.com(model, i));
        g -= link.mass * jac.rows(0, 3).transpose() * model.gravity;
    }
    g
}

/// Gravitational potential energy, zero at the base origin.
pub fn potential_energy(model: &ManipulatorModel, q: &DVector<f64>) -> Result<f64, DynamicsError> {
    let frames = ChainFrames::compute(model, q)?;
    Ok(model
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| -l.mass * model.gravity.dot(&frames.com(model, i)))
        .sum())
}

pub fn kinetic_energy(model: &ManipulatorModel, q: &DVector<f64>, dq: &DVector<f64>) -> Result<f64, DynamicsError> {
    model.check_dim(dq, "dq")?;
    let m = inertia_matrix(model, q)?;
    Ok(0.5 * dq.dot(&(m * dq)))
}

pub fn mechanical_energy(model: &ManipulatorModel, state: &JointState) -> Result<f64, DynamicsError> {
    Ok(kinetic_energy(model, &state.q, &state.dq)? + potential_energy(model, &state.q)?)
}

/// Recursive Newton-Euler inverse dynamics, base frame.
///
/// Returns `M q̈ + c(q, q̇)` plus `g(q)` when `with_gravity` is set.
pub fn inverse_dynamics(
    model: &ManipulatorModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
    ddq: &DVector<f64>,
    with_gravity: bool,
) -> Result<DVector<f64>, DynamicsError> {
    model.check_dim(dq, "dq")?;
    model.check_dim(ddq, "ddq")?;
    let frames = ChainFrames::compute(model, q)?;
    Ok(rnea(model, &frames, dq, ddq, with_gravity))
}

pub(crate) fn rnea(
    model: &ManipulatorModel,
    frames: &ChainFrames,
    dq: &DVector<f64>,
    ddq: &DVector<f64>,
    with_gravity: bool,
) -> DVector<f64> {
    let n = model.dof();
    // Fixed base: gravity enters as an upward acceleration of the base.
    let base_acc = if with_gravity { -model.gravity } else { Vector3::zeros() };
    let mut forces = Vec::with_capacity(n);
    let mut moments = Vec::with_capacity(n);
    let mut omega = Vector3::zeros();
    let mut alpha = Vector3::zeros();
    let mut acc_origin = base_acc;
    let mut prev_origin = Vector3::zeros();
    for i in 0..n {
        let z = frames.axes[i];
        let o = frames.origins[i];
        let d = o - prev_origin;
        // origin i is fixed on link i-1
        acc_origin += alpha.cross(&d) + omega.cross(&omega.cross(&d));
        alpha += omega.cross(&z) * dq[i] + z * ddq[i];
        omega += z * dq[i];
        let r = frames.com(model, i) - o;
        let acc_com = acc_origin + alpha.cross(&r) + omega.cross(&omega.cross(&r));
        let iw = world_inertia(frames, model, i);
        let mass = model.links[i].mass;
        forces.push(mass * acc_com);
        moments.push(iw * alpha + omega.cross(&(iw * omega)));
        prev_origin = o;
    }
    let mut tau = DVector::from_iterator(n, model.joints.iter().zip(ddq.iter()).map(|(j, a)| j.armature * a));
    let mut f_child = Vector3::zeros();
    let mut n_child = Vector3::zeros();
    let mut child_origin = Vector3::zeros();
    for i in (0..n).rev() {
        let o = frames.origins[i];
        let r = frames.com(model, i) - o;
        let f = forces[i] + f_child;
        let moment = moments[i] + r.cross(&forces[i]) + n_child + (child_origin - o).cross(&f_child);
        tau[i] += frames.axes[i].dot(&moment);
        f_child = f;
        n_child = moment;
        child_origin = o;
    }
    tau
}

/// Velocity-product (Coriolis and centrifugal) torque vector `c(q, q̇) = C(q, q̇) q̇`.
pub fn coriolis_torques(
    model: &ManipulatorModel,
    q: &DVector<f64>,
    dq: &DVector<f64>,
) -> Result<DVector<f64>, DynamicsError> {
    inverse_dynamics(model, q, dq, &DVector::zeros(model.dof()), false)
}

/// `Λ = (J M⁻¹ Jᵀ)⁻¹` for all six task rows.
pub fn operational_space_inertia(model: &ManipulatorModel, q: &DVector<f64>) -> Result<DMatrix<f64>, DynamicsError> {
    operational_space_inertia_rows(model, q, &[0, 1, 2, 3, 4, 5])
}

/// Operational-space inertia restricted to a subset of task rows
/// (0..3 linear, 3..6 angular).
pub fn operational_space_inertia_rows(
    model: &ManipulatorModel,
    q: &DVector<f64>,
    rows: &[usize],
) -> Result<DMatrix<f64>, DynamicsError> {
    let frames = ChainFrames::compute(model, q)?;
    let full = frames.ee_jacobian();
    let j = DMatrix::from_fn(rows.len(), model.dof(), |r, c| full[(rows[r], c)]);
    let m = inertia_from_frames(model, &frames);
    operational_space_inertia_from(&j, &m)
}

/// `Λ = (J M⁻¹ Jᵀ)⁻¹` from an explicit task Jacobian and inertia matrix.
pub fn operational_space_inertia_from(j: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>, DynamicsError> {
    if j.ncols() != m.nrows() || !m.is_square() {
        return Err(DynamicsError::DimensionMismatch {
            what: "jacobian columns",
            expected: m.nrows(),
            got: j.ncols(),
        });
    }
    if j.nrows() > j.ncols() {
        return Err(DynamicsError::Singular { sigma_min: 0.0 });
    }
    let sigma_min = j
        .clone()
        .singular_values()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if sigma_min < SINGULARITY_THRESHOLD {
        return Err(DynamicsError::Singular { sigma_min });
    }
    let chol = m.clone().cholesky().ok_or(DynamicsError::InertiaNotPositiveDefinite)?;
    let minv_jt = chol.solve(&j.transpose());
    let reflected = j * minv_jt;
    let mut lambda = reflected
        .cholesky()
        .ok_or(DynamicsError::Singular { sigma_min })?
        .inverse();
    lambda.fill_lower_triangle_with_upper_triangle();
    Ok(lambda)
}

/// Which limit a joint hit during integration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    Position,
    Velocity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitViolation {
    pub joint: usize,
    pub kind: LimitKind,
    /// Value before clamping.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: JointState,
    pub violations: Vec<LimitViolation>,
}

/// Intermediate quantities of one dynamics step, reused by the simulation loop.
#[derive(Debug, Clone)]
pub struct DynamicsTerms {
    pub frames: ChainFrames,
    pub jacobian: DMatrix<f64>,
    pub inertia: DMatrix<f64>,
    pub coriolis: DVector<f64>,
    pub gravity: DVector<f64>,
}

impl DynamicsTerms {
    pub fn compute(model: &ManipulatorModel, state: &JointState) -> Result<Self, DynamicsError> {
        model.check_dim(&state.dq, "dq")?;
        let frames = ChainFrames::compute(model, &state.q)?;
        let zeros = DVector::zeros(model.dof());
        Ok(Self {
            jacobian: frames.ee_jacobian(),
            inertia: inertia_from_frames(model, &frames),
            coriolis: rnea(model, &frames, &state.dq, &zeros, false),
            gravity: gravity_from_frames(model, &frames),
            frames,
        })
    }
}

/// One semi-implicit Euler step of the joint-space dynamics.
///
/// `f_ext` acts at the end-effector point; the returned state's `tau_ext`
/// holds `Jᵀ f_ext`. Velocities and positions leaving their limits are
/// clamped and reported.
pub fn step_dynamics(
    model: &ManipulatorModel,
    state: &JointState,
    tau: &DVector<f64>,
    f_ext: &Wrench,
    dt: f64,
) -> Result<StepOutput, DynamicsError> {
    let terms = DynamicsTerms::compute(model, state)?;
    step_with_terms(model, state, &terms, tau, f_ext, dt)
}

pub fn step_with_terms(
    model: &ManipulatorModel,
    state: &JointState,
    terms: &DynamicsTerms,
    tau: &DVector<f64>,
    f_ext: &Wrench,
    dt: f64,
) -> Result<StepOutput, DynamicsError> {
    if !(dt > 0.0 && dt <= MAX_STEP) {
        return Err(DynamicsError::InvalidTimeStep(dt));
    }
    model.check_dim(tau, "tau")?;
    if !f_ext.is_finite() {
        return Err(DynamicsError::NonFinite("f_ext"));
    }
    let wrench = f_ext.in_base(&terms.frames.ee.rotation).to_vector();
    let tau_ext = terms.jacobian.transpose() * wrench;
    let damping = DVector::from_iterator(
        model.dof(),
        model.joints.iter().zip(state.dq.iter()).map(|(j, v)| j.damping * v),
    );
    let rhs = tau + &tau_ext - &terms.coriolis - &terms.gravity - damping;
    let chol = terms
        .inertia
        .clone()
        .cholesky()
        .ok_or(DynamicsError::InertiaNotPositiveDefinite)?;
    let ddq = chol.solve(&rhs);

    let mut violations = Vec::new();
    let mut dq = &state.dq + ddq * dt;
    for (i, joint) in model.joints.iter().enumerate() {
        let limit = joint.velocity_limit;
        if dq[i].abs() > limit {
            violations.push(LimitViolation {
                joint: i,
                kind: LimitKind::Velocity,
                value: dq[i],
            });
            dq[i] = dq[i].clamp(-limit, limit);
        }
    }
    let mut q = &state.q + &dq * dt;
    for (i, joint) in model.joints.iter().enumerate() {
        let [lo, hi] = joint.position_limits;
        if q[i] < lo || q[i] > hi {
            violations.push(LimitViolation {
                joint: i,
                kind: LimitKind::Position,
                value: q[i],
            });
            q[i] = q[i].clamp(lo, hi);
            if (q[i] <= lo && dq[i] < 0.0) || (q[i] >= hi && dq[i] > 0.0) {
                dq[i] = 0.0;
            }
        }
    }
    if !q.iter().chain(dq.iter()).all(|v| v.is_finite()) {
        return Err(DynamicsError::NonFinite("integrated state"));
    }
    Ok(StepOutput {
        state: JointState { q, dq, tau_ext },
        violations,
    })
}
