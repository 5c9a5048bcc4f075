//! The runtime: a fixed-rate bilateral control loop from operator input
//! through the coupling to the simulated slave and back, plus the wire
//! protocol, scripted operators, log persistence and the WebSocket server.

mod operator;
mod protocol;
mod record;
mod runtime;
mod server;

pub use operator::{
    ik_step, IdleSource, Script, ScriptStep, ScriptedOperator, WaitCondition, BUNDLED_SCRIPTS, SCRIPT_FORMAT_VERSION,
};
pub use protocol::{
    decode, decode_command, encode, encode_frame, ClientMessage, CommandPayload, ControlRequest, Feedback, FkParams,
    JointFk, MasterCommand, SceneBox, SceneInfo, ServerHello, ServerMessage, SlaveFrame, TrialSummary,
    PROTOCOL_VERSION,
};
pub use record::{read_log, record_log, replay_log, write_log};
pub use runtime::{run_trial, CommandSource, OperatorInput, RunConfig, Session, StepStatus};
pub use server::{ServeConfig, Server};

use crate::coupling::{CouplingError, CouplingMode};
use crate::dynamics::DynamicsError;
use crate::tasks::TaskError;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("command is for a {found} session, this session is {expected}")]
    ModeMismatch {
        expected: CouplingMode,
        found: CouplingMode,
    },
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unsupported format_version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u32, supported: u32 },
    #[error(transparent)]
    Coupling(#[from] CouplingError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
