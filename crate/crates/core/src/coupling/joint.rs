//! 1:1 joint-space coupling between identical arms with torque reflection.

use nalgebra::DVector;

use super::{CouplingConfig, CouplingError, CouplingMode};
use crate::dynamics::{DynamicsTerms, JointState, ManipulatorModel};

/// `τ_f = −K_p e_q − K_d ė_q + c(q_f, q̇_f) + g(q_f)` with `e_q = q_f − q_l`.
pub fn joint_impedance_torques(
    model: &ManipulatorModel,
    slave: &JointState,
    master: &JointState,
    config: &CouplingConfig,
) -> Result<DVector<f64>, CouplingError> {
    config.require(CouplingMode::Joint)?;
    check_states(model, slave, master, config)?;
    let terms = DynamicsTerms::compute(model, slave)?;
    joint_impedance_with_terms(&terms, slave, master, config)
}

pub fn joint_impedance_with_terms(
    terms: &DynamicsTerms,
    slave: &JointState,
    master: &JointState,
    config: &CouplingConfig,
) -> Result<DVector<f64>, CouplingError> {
    config.require(CouplingMode::Joint)?;
    if slave.dof() != master.dof() {
        return Err(CouplingError::Config(format!(
            "master has {} joints, slave has {}: joint coupling needs identical arms",
            master.dof(),
            slave.dof()
        )));
    }
    config.require_joint_dof(slave.dof())?;
    let e = &slave.q - &master.q;
    let de = &slave.dq - &master.dq;
    Ok(-&config.kp_joint * e - &config.kd_joint * de + &terms.coriolis + &terms.gravity)
}

fn check_states(
    model: &ManipulatorModel,
    slave: &JointState,
    master: &JointState,
    config: &CouplingConfig,
) -> Result<(), CouplingError> {
    let n = model.dof();
    if slave.dof() != n || master.dof() != n {
        return Err(CouplingError::Config(format!(
            "joint coupling needs identical {n}-joint arms (slave {}, master {})",
            slave.dof(),
            master.dof()
        )));
    }
    config.require_joint_dof(n)?;
    if !slave.is_finite() || !master.is_finite() {
        return Err(CouplingError::ContractViolation("non-finite joint state".into()));
    }
    Ok(())
}

/// Torques commanded to the master and the joints that hit their limit.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterTorques {
    pub tau: DVector<f64>,
    pub saturated: Vec<usize>,
}

/// `τ_l = τ_ext − K_{d,l} q̇_l`, clamped per joint to the master's torque limits.
pub fn master_feedback_torques(
    master_model: &ManipulatorModel,
    tau_ext_slave: &DVector<f64>,
    master: &JointState,
    config: &CouplingConfig,
) -> Result<MasterTorques, CouplingError> {
    config.require(CouplingMode::Joint)?;
    let n = master_model.dof();
    if tau_ext_slave.len() != n || master.dof() != n {
        return Err(CouplingError::Config(format!(
            "reflected torque has {} entries, master has {n} joints",
            tau_ext_slave.len()
        )));
    }
    config.require_joint_dof(n)?;
    let mut tau = tau_ext_slave - &config.kd_master * &master.dq;
    let mut saturated = Vec::new();
    for (i, joint) in master_model.joints.iter().enumerate() {
        if tau[i].abs() > joint.torque_limit {
            tau[i] = tau[i].clamp(-joint.torque_limit, joint.torque_limit);
            saturated.push(i);
        }
    }
    Ok(MasterTorques { tau, saturated })
}

/// First-order low-pass on reflected torques; passes input through until
/// the first sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TorqueFilter {
    alpha: f64,
    state: Option<DVector<f64>>,
}

impl TorqueFilter {
    pub fn new(cutoff_hz: f64, dt: f64) -> Self {
        let rc = 1.0 / (2.0 * std::f64::consts::PI * cutoff_hz);
        Self {
            alpha: dt / (rc + dt),
            state: None,
        }
    }

    pub fn apply(&mut self, input: &DVector<f64>) -> DVector<f64> {
        let next = match &self.state {
            None => input.clone(),
            Some(prev) => prev + (input - prev) * self.alpha,
        };
        self.state = Some(next.clone());
        next
    }
}
