//! Line-delimited JSON records exchanged with operator clients.
//!
//! Every record is one JSON object on its own line with a `type` field.
//! Unknown fields are ignored; missing required fields are errors.
//!
//! Client to gateway: `hello`, `command`, `control`.
//! Gateway to client: `hello`, `frame`, `ack`, `nack`, `trial_end`, `error`.

use nalgebra::{DVector, Vector3};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::GatewayError;
use crate::coupling::CouplingMode;
use crate::dynamics::{ManipulatorModel, SpatialPose, Wrench};
use crate::metrics::Stage;
use crate::tasks::{Aabb, EffectorCommand, Outcome, Scenario, WorldSummary};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CommandPayload {
    /// Master end-effector pose increment in the master base frame.
    Cartesian { delta_pose: SpatialPose, clutch: bool },
    /// Absolute master joint configuration.
    Joint {
        #[serde(with = "crate::serde_vec::dvector")]
        q_l: DVector<f64>,
        #[serde(with = "crate::serde_vec::dvector")]
        dq_l: DVector<f64>,
    },
}

impl CommandPayload {
    pub fn mode(&self) -> CouplingMode {
        match self {
            CommandPayload::Cartesian { .. } => CouplingMode::Cartesian,
            CommandPayload::Joint { .. } => CouplingMode::Joint,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterCommand {
    pub seq: u64,
    /// Client clock, s. Informational; the gateway runs on simulated time.
    pub t: f64,
    pub payload: CommandPayload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub effector: Option<EffectorCommand>,
}

impl MasterCommand {
    pub fn check_mode(&self, mode: CouplingMode) -> Result<(), GatewayError> {
        let found = self.payload.mode();
        if found != mode {
            return Err(GatewayError::ModeMismatch { expected: mode, found });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum Feedback {
    /// Force rendered on a Cartesian master.
    Force(Wrench),
    /// Torques commanded to a joint-space master, N·m.
    Torques(#[serde(with = "crate::serde_vec::dvector")] DVector<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaveFrame {
    pub seq: u64,
    pub t: f64,
    #[serde(with = "crate::serde_vec::dvector")]
    pub q: DVector<f64>,
    #[serde(with = "crate::serde_vec::dvector")]
    pub dq: DVector<f64>,
    pub x: SpatialPose,
    pub f_ext: Wrench,
    pub feedback: Feedback,
    pub world: WorldSummary,
    pub stage: Stage,
}

impl SlaveFrame {
    pub fn check_mode(&self, mode: CouplingMode) -> Result<(), GatewayError> {
        let found = match self.feedback {
            Feedback::Force(_) => CouplingMode::Cartesian,
            Feedback::Torques(_) => CouplingMode::Joint,
        };
        if found != mode {
            return Err(GatewayError::ModeMismatch { expected: mode, found });
        }
        Ok(())
    }
}

/// Joint placement needed to draw an arm from its joint angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointFk {
    pub name: String,
    pub parent_offset: SpatialPose,
    pub axis: Vector3<f64>,
    pub position_limits: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkParams {
    pub name: String,
    pub joints: Vec<JointFk>,
    pub ee_offset: SpatialPose,
}

impl FkParams {
    pub fn of(model: &ManipulatorModel) -> Self {
        Self {
            name: model.name.clone(),
            joints: model
                .joints
                .iter()
                .map(|j| JointFk {
                    name: j.name.clone(),
                    parent_offset: j.parent_offset,
                    axis: j.axis.into_inner(),
                    position_limits: j.position_limits,
                })
                .collect(),
            ee_offset: model.ee_offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneBox {
    pub id: String,
    pub bounds: Aabb,
}

/// Static scene description sent once per session or trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneInfo {
    pub scenario: String,
    pub objects: Vec<SceneBox>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<Vector3<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_window: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<Aabb>,
}

impl SceneInfo {
    pub fn of(scenario: &Scenario) -> Self {
        let cutting = scenario.task.kind == crate::tasks::TaskKind::Cutting;
        Self {
            scenario: scenario.name.clone(),
            objects: scenario
                .objects
                .iter()
                .map(|o| SceneBox {
                    id: o.id.clone(),
                    bounds: Aabb::from_center(Vector3::from(o.center), Vector3::from(o.half_extents)),
                })
                .collect(),
            path: if cutting {
                scenario.task.targets.iter().map(|t| t.position()).collect()
            } else {
                Vec::new()
            },
            path_window: scenario.task.path_window,
            container: scenario.task.container,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerHello {
    pub protocol_version: u32,
    pub mode: CouplingMode,
    pub profile: String,
    pub rate_hz: f64,
    /// Frames per second streamed to the client.
    pub frame_rate_hz: f64,
    pub slave: FkParams,
    pub master: FkParams,
    pub scene: SceneInfo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ControlRequest {
    Start {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        scenario: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    },
    Abort,
    SwitchProfile {
        profile: String,
    },
}

impl ControlRequest {
    pub fn name(&self) -> &'static str {
        match self {
            ControlRequest::Start { .. } => "start",
            ControlRequest::Abort => "abort",
            ControlRequest::SwitchProfile { .. } => "switch_profile",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Hello {
        protocol_version: u32,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client: Option<String>,
    },
    Command(MasterCommand),
    Control(ControlRequest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_id: String,
    pub outcome: Outcome,
    /// Frames not sent because the client fell behind.
    pub frames_dropped: u64,
    pub commands_dropped: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(ServerHello),
    Frame(SlaveFrame),
    Ack { action: String },
    Nack { action: String, reason: String },
    TrialEnd(TrialSummary),
    Error { message: String },
}

/// Serializes one record followed by a newline.
pub fn encode<T: Serialize>(msg: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec(msg).expect("protocol records serialize");
    out.push(b'\n');
    out
}

/// Parses one record. Trailing whitespace (including the newline) is allowed.
pub fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, GatewayError> {
    serde_json::from_slice(bytes).map_err(|e| GatewayError::Parse {
        offset: if e.is_eof() {
            bytes.len()
        } else {
            byte_offset(bytes, e.line(), e.column())
        },
        message: e.to_string(),
    })
}

pub fn encode_frame(frame: &SlaveFrame) -> Vec<u8> {
    encode(&ServerMessage::Frame(frame.clone()))
}

/// Decodes a client command record and checks it against the session mode.
pub fn decode_command(bytes: &[u8], mode: CouplingMode) -> Result<MasterCommand, GatewayError> {
    match decode::<ClientMessage>(bytes)? {
        ClientMessage::Command(cmd) => {
            cmd.check_mode(mode)?;
            Ok(cmd)
        }
        other => Err(GatewayError::Protocol(format!(
            "expected a command record, got {other:?}"
        ))),
    }
}

/// Converts serde_json's 1-based line/column into a byte offset.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = bytes
        .split_inclusive(|b| *b == b'\n')
        .take(line - 1)
        .map(<[u8]>::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(bytes.len())
}
