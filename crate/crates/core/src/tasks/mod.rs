//! Simulated disassembly scenes: unbolting, bolt removal, cover removal,
//! module sorting by suction and contact cutting, with their success and
//! failure conditions.

mod actions;
mod contact;
mod outcome;
mod spec;
mod world;

pub use actions::{
    advance_cut, advance_fastener, attempt_grasp, cutting_wrench, distance_to_path, suction_engage, GraspResult,
    SuctionResult,
};
pub use contact::{contact_wrench, tilt_from_vertical};
pub use outcome::{evaluate_outcome, failure_reason, Outcome, OutcomeReason};
pub use spec::{
    Aabb, ContactParams, ObjectKind, ObjectSpec, Scenario, Target, TaskKind, TaskSpec, Tolerances, ToolKind,
    BUNDLED_SCENARIOS, SCENARIO_FORMAT_VERSION,
};
pub use world::{
    Attachment, Contact, CutState, EffectorCommand, EffectorState, FastenerState, FastenerSummary, SceneObject,
    WorldState, WorldStep, WorldSummary,
};

#[derive(Debug, thiserror::Error)]
pub enum TaskError {
    #[error("scenario configuration: {0}")]
    Config(String),
    #[error("no such object in the scene: {0}")]
    Lookup(String),
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("unsupported scenario format_version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
