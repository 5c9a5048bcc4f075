//! Serial manipulator kinematics and rigid-body dynamics.

mod kinematics;
mod model;
mod pose;
mod rigid_body;
pub mod simple_models;

pub use kinematics::{forward_kinematics, jacobian, ChainFrames};
pub use model::{Joint, JointState, Link, ManipulatorModel, MODEL_FORMAT_VERSION};
pub use pose::{SpatialPose, Wrench, WrenchFrame, UNIT_TOLERANCE};
pub use rigid_body::{
    coriolis_torques, gravity_torques, inertia_matrix, inverse_dynamics, kinetic_energy, mechanical_energy,
    operational_space_inertia, operational_space_inertia_from, operational_space_inertia_rows, potential_energy,
    step_dynamics, step_with_terms, DynamicsTerms, LimitKind, LimitViolation, StepOutput, MAX_STEP,
    SINGULARITY_THRESHOLD,
};

#[derive(Debug, thiserror::Error)]
pub enum DynamicsError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("time step {0} s outside (0, 0.01]")]
    InvalidTimeStep(f64),
    #[error("task Jacobian is near singular (smallest singular value {sigma_min:.3e})")]
    Singular { sigma_min: f64 },
    #[error("joint-space inertia matrix is not positive definite")]
    InertiaNotPositiveDefinite,
    #[error("model file: {0}")]
    Parse(String),
    #[error("unsupported model format_version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
