//! Bilateral master-slave coupling laws.
//!
//! Two schemes are provided. The Cartesian scheme maps master end-effector
//! increments through the base transform onto a slave impedance target and
//! returns slave contact forces scaled by `G` and capped at the master's
//! force limit. The joint scheme couples two identical arms joint by joint
//! and reflects the slave's external torque estimate to the master with
//! extra damping.

mod cartesian;
mod config;
mod joint;

pub use cartesian::{
    cartesian_impedance_torques, cartesian_impedance_with_terms, map_feedback_force, map_master_delta, pose_error,
    CartesianTarget, MappedFeedback, TargetPose,
};
pub use config::{CouplingConfig, CouplingMode, BUNDLED_PROFILES, COUPLING_FORMAT_VERSION};
pub use joint::{
    joint_impedance_torques, joint_impedance_with_terms, master_feedback_torques, MasterTorques, TorqueFilter,
};

use crate::dynamics::DynamicsError;

#[derive(Debug, thiserror::Error)]
pub enum CouplingError {
    #[error("operation needs a {expected} coupling, profile is {found}")]
    ModeMismatch {
        expected: CouplingMode,
        found: CouplingMode,
    },
    #[error("coupling configuration: {0}")]
    Config(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("coupling profile file: {0}")]
    Parse(String),
    #[error("unsupported coupling format_version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
