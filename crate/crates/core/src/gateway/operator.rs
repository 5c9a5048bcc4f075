//! Scripted operators for headless trials.

use std::path::Path;

use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::protocol::{CommandPayload, MasterCommand, SlaveFrame};
use super::runtime::{CommandSource, OperatorInput};
use super::GatewayError;
use crate::coupling::{pose_error, CouplingConfig, CouplingMode};
use crate::dynamics::{ChainFrames, ManipulatorModel, SpatialPose};
use crate::tasks::{EffectorCommand, Scenario, TaskKind};

pub const SCRIPT_FORMAT_VERSION: u32 = 1;

pub const BUNDLED_SCRIPTS: [(&str, &str); 11] = [
    ("unbolting", include_str!("../../assets/scripts/unbolting.toml")),
    ("bolt_removal", include_str!("../../assets/scripts/bolt_removal.toml")),
    ("cover_removal", include_str!("../../assets/scripts/cover_removal.toml")),
    ("sorting", include_str!("../../assets/scripts/sorting.toml")),
    ("cutting", include_str!("../../assets/scripts/cutting.toml")),
    (
        "unbolting_misaligned",
        include_str!("../../assets/scripts/unbolting_misaligned.toml"),
    ),
    (
        "bolt_removal_missed",
        include_str!("../../assets/scripts/bolt_removal_missed.toml"),
    ),
    (
        "cover_removal_weak_grip",
        include_str!("../../assets/scripts/cover_removal_weak_grip.toml"),
    ),
    (
        "sorting_tilted",
        include_str!("../../assets/scripts/sorting_tilted.toml"),
    ),
    ("cutting_drift", include_str!("../../assets/scripts/cutting_drift.toml")),
    ("cutting_lift", include_str!("../../assets/scripts/cutting_lift.toml")),
];

fn default_version() -> u32 {
    SCRIPT_FORMAT_VERSION
}

fn default_turn_rate() -> f64 {
    0.5
}

fn default_max_travel() -> f64 {
    0.1
}

fn default_noise_time() -> f64 {
    0.2
}

fn default_correction_rate() -> f64 {
    3.0
}

/// Largest horizontal correction the operator will hold, m.
const MAX_CORRECTION: f64 = 0.02;

/// What a `wait` step waits for, read from the latest slave frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitCondition {
    BoltLoosened(String),
    Attached,
    Released,
    CutProgress(f64),
}

impl WaitCondition {
    fn holds(&self, frame: &SlaveFrame) -> bool {
        match self {
            WaitCondition::BoltLoosened(id) => frame
                .world
                .fasteners
                .iter()
                .any(|f| &f.bolt == id && f.threads_remaining <= 0.0),
            WaitCondition::Attached => frame.world.attached.is_some(),
            WaitCondition::Released => frame.world.attached.is_none(),
            WaitCondition::CutProgress(p) => frame.world.cut_progress.is_some_and(|c| c >= *p),
        }
    }
}

/// One scripted action. Positions are slave base-frame tool-tip positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptStep {
    /// Straight-line move at `speed` m/s to a target (`to`, plus `offset`),
    /// an absolute point (`xyz`) or by a relative displacement (`by`).
    /// `rpy` sets the final tool orientation, reached at `turn_rate` rad/s.
    Move {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        to: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        xyz: Option<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        by: Option<[f64; 3]>,
        #[serde(default)]
        offset: [f64; 3],
        speed: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rpy: Option<[f64; 3]>,
        #[serde(default = "default_turn_rate")]
        turn_rate: f64,
    },
    /// Lowers the commanded tool at `speed` until the slave reports an
    /// upward contact force of at least `force` N or `max_travel` m is used.
    Press {
        force: f64,
        speed: f64,
        #[serde(default = "default_max_travel")]
        max_travel: f64,
    },
    Dwell {
        seconds: f64,
    },
    /// Sent with the next command.
    Effector {
        command: EffectorCommand,
    },
    /// Holds still until the condition is met or `timeout` s pass.
    Wait {
        until: WaitCondition,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timeout: Option<f64>,
    },
    /// Tells the gateway the operator is done.
    Finish,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskKind>,
    /// Standard deviation of the hand tremor added to the commanded position, m.
    #[serde(default)]
    pub noise: f64,
    /// Correlation time of the tremor, s.
    #[serde(default = "default_noise_time")]
    pub noise_time: f64,
    /// Rate at which the operator nulls the horizontal gap between where
    /// the tool should be and where it is, 1/s. Zero disables it.
    #[serde(default = "default_correction_rate")]
    pub correction_rate: f64,
    pub steps: Vec<ScriptStep>,
}

impl Script {
    pub fn bundled(name: &str) -> Option<Script> {
        BUNDLED_SCRIPTS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Script::from_toml_str(text).expect("bundled script is valid"))
    }

    /// A bundled name, or a path (with `dir` tried as a base for relative names).
    pub fn resolve(name: &str, dir: Option<&Path>) -> Result<Script, GatewayError> {
        if let Some(s) = Script::bundled(name) {
            return Ok(s);
        }
        let direct = Path::new(name);
        if direct.exists() {
            return Script::load(direct);
        }
        if let Some(dir) = dir {
            for candidate in [dir.join(name), dir.join(format!("{name}.toml"))] {
                if candidate.exists() {
                    return Script::load(candidate);
                }
            }
        }
        Err(GatewayError::Config(format!(
            "no bundled script or file named `{name}`"
        )))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Script, GatewayError> {
        Script::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Script, GatewayError> {
        let parse = |e: toml::de::Error| GatewayError::Parse {
            offset: e.span().map_or(0, |s| s.start),
            message: e.message().to_string(),
        };
        let raw: toml::Table = toml::from_str(text).map_err(parse)?;
        let version = raw.get("format_version").and_then(|v| v.as_integer()).unwrap_or(1);
        if version > i64::from(SCRIPT_FORMAT_VERSION) {
            return Err(GatewayError::UnsupportedVersion {
                found: version as u32,
                supported: SCRIPT_FORMAT_VERSION,
            });
        }
        let script: Script = toml::from_str(text).map_err(parse)?;
        script.validate()?;
        Ok(script)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("script serializes")
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |msg: String| Err(GatewayError::Config(format!("script {}: {msg}", self.name)));
        if self.steps.is_empty() {
            return bad("no steps".into());
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be ≥ 0, got {}", self.noise));
        }
        if !(self.correction_rate >= 0.0 && self.correction_rate.is_finite()) {
            return bad(format!("correction_rate must be ≥ 0, got {}", self.correction_rate));
        }
        if !(self.noise_time > 0.0) {
            return bad(format!("noise_time must be > 0, got {}", self.noise_time));
        }
        for (i, step) in self.steps.iter().enumerate() {
            match step {
                ScriptStep::Move {
                    to,
                    xyz,
                    by,
                    speed,
                    turn_rate,
                    ..
                } => {
                    let goals = usize::from(to.is_some()) + usize::from(xyz.is_some()) + usize::from(by.is_some());
                    if goals != 1 {
                        return bad(format!("step {i}: move needs exactly one of to, xyz, by"));
                    }
                    if !(*speed > 0.0 && *turn_rate > 0.0) {
                        return bad(format!("step {i}: speeds must be > 0"));
                    }
                }
                ScriptStep::Press {
                    force,
                    speed,
                    max_travel,
                } => {
                    if !(*force > 0.0 && *speed > 0.0 && *max_travel > 0.0) {
                        return bad(format!("step {i}: press parameters must be > 0"));
                    }
                }
                ScriptStep::Dwell { seconds } if !(*seconds >= 0.0) => {
                    return bad(format!("step {i}: dwell must be ≥ 0"));
                }
                ScriptStep::Wait { timeout: Some(t), .. } if !(*t > 0.0) => {
                    return bad(format!("step {i}: timeout must be > 0"));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// One damped-least-squares pass towards `target`; returns the updated
/// configuration and the remaining pose error norm.
pub fn ik_step(
    model: &ManipulatorModel,
    q: &DVector<f64>,
    target: &SpatialPose,
    damping: f64,
) -> Result<(DVector<f64>, f64), GatewayError> {
    let frames = ChainFrames::compute(model, q)?;
    let e = pose_error(&frames.ee, target);
    let j = frames.ee_jacobian();
    let jjt = &j * j.transpose() + DMatrix::identity(6, 6) * (damping * damping);
    let rhs = DVector::from_column_slice((-e).as_slice());
    let y = jjt
        .cholesky()
        .ok_or_else(|| GatewayError::Config("IK system is not positive definite".into()))?
        .solve(&rhs);
    let mut next = q + j.transpose() * y;
    for (i, joint) in model.joints.iter().enumerate() {
        next[i] = next[i].clamp(joint.position_limits[0], joint.position_limits[1]);
    }
    let err = pose_error(&ChainFrames::compute(model, &next)?.ee, target).norm();
    Ok((next, err))
}

#[derive(Debug, Clone)]
enum Active {
    Move {
        from: SpatialPose,
        to: SpatialPose,
        steps: u64,
        done: u64,
    },
    Press {
        travelled: f64,
    },
    Dwell {
        left: u64,
    },
    Wait {
        waited: f64,
    },
}

/// Follows a [`Script`], producing one master command per control period.
#[derive(Debug, Clone)]
pub struct ScriptedOperator {
    script: Script,
    scenario: Scenario,
    mode: CouplingMode,
    base_rotation: UnitQuaternion<f64>,
    motion_scale: f64,
    twin: ManipulatorModel,
    dt: f64,
    rng: ChaCha8Rng,
    noise: Option<Normal<f64>>,
    /// Tremor is a first-order Gauss-Markov process: `n ← ρ n + √(1−ρ²) σ w`.
    tremor: Vector3<f64>,
    rho: f64,
    /// Horizontal offset the operator adds after watching the slave.
    correction: Vector3<f64>,
    index: usize,
    active: Option<Active>,
    /// Intended tool pose without noise.
    nominal: Option<SpatialPose>,
    /// Last commanded pose, noise included.
    sent: Option<SpatialPose>,
    q_cmd: Option<DVector<f64>>,
    seq: u64,
    pending: Option<EffectorCommand>,
}

impl ScriptedOperator {
    pub fn new(
        script: Script,
        scenario: &Scenario,
        coupling: &CouplingConfig,
        rate_hz: f64,
        seed: u64,
    ) -> Result<Self, GatewayError> {
        script.validate()?;
        if let Some(kind) = script.task {
            if kind != scenario.task.kind {
                return Err(GatewayError::Config(format!(
                    "script {} is for {kind}, scenario is {}",
                    script.name, scenario.task.kind
                )));
            }
        }
        for step in &script.steps {
            if let ScriptStep::Move { to: Some(id), .. } = step {
                if scenario.task.target(id).is_none() {
                    return Err(GatewayError::Config(format!(
                        "script {}: unknown target `{id}`",
                        script.name
                    )));
                }
            }
        }
        let noise = (script.noise > 0.0).then(|| Normal::new(0.0, 1.0).expect("unit normal"));
        let dt = 1.0 / rate_hz;
        Ok(Self {
            scenario: scenario.clone(),
            mode: coupling.mode,
            base_rotation: coupling.base_transform.rotation,
            motion_scale: coupling.motion_scale,
            twin: ManipulatorModel::default_slave(),
            dt,
            rng: ChaCha8Rng::seed_from_u64(seed),
            noise,
            tremor: Vector3::zeros(),
            rho: (-dt / script.noise_time).exp(),
            correction: Vector3::zeros(),
            index: 0,
            active: None,
            nominal: None,
            sent: None,
            q_cmd: None,
            seq: 0,
            pending: None,
            script,
        })
    }

    /// Intended tool pose, if the operator has started.
    pub fn nominal(&self) -> Option<SpatialPose> {
        self.nominal
    }

    pub fn is_finished(&self) -> bool {
        self.index >= self.script.steps.len()
    }

    fn goal(&self, step: &ScriptStep, from: &SpatialPose) -> SpatialPose {
        let ScriptStep::Move {
            to,
            xyz,
            by,
            offset,
            rpy,
            ..
        } = step
        else {
            unreachable!("goal of a move step");
        };
        let offset = Vector3::from(*offset);
        let translation = if let Some(id) = to {
            self.scenario.task.target(id).expect("validated").position() + offset
        } else if let Some(p) = xyz {
            Vector3::from(*p) + offset
        } else {
            from.translation + Vector3::from(by.expect("validated")) + offset
        };
        let rotation = rpy.map_or(from.rotation, |[r, p, y]| UnitQuaternion::from_euler_angles(r, p, y));
        SpatialPose::new(rotation, translation)
    }

    /// Advances the script by one control period. Returns `false` once
    /// a `finish` step is reached or the script runs out.
    fn advance(&mut self, frame: &SlaveFrame) -> bool {
        let dt = self.dt;
        loop {
            let Some(step) = self.script.steps.get(self.index).cloned() else {
                return false;
            };
            let nominal = self.nominal.expect("initialized before advancing");
            let finished_step = match (&step, self.active.take()) {
                (ScriptStep::Finish, _) => return false,
                (ScriptStep::Effector { command }, _) => {
                    self.pending = Some(*command);
                    self.index += 1;
                    continue;
                }
                (ScriptStep::Move { speed, turn_rate, .. }, active) => {
                    let (from, to, steps, done) = match active {
                        Some(Active::Move { from, to, steps, done }) => (from, to, steps, done),
                        _ => {
                            let to = self.goal(&step, &nominal);
                            let distance = (to.translation - nominal.translation).norm();
                            let angle = (to.rotation * nominal.rotation.inverse()).angle();
                            let duration = (distance / speed).max(angle / turn_rate);
                            let steps = ((duration / dt) - 1e-6).ceil().max(1.0) as u64;
                            (nominal, to, steps, 0)
                        }
                    };
                    let done = done + 1;
                    let s = done as f64 / steps as f64;
                    self.nominal = Some(SpatialPose::new(
                        from.rotation.slerp(&to.rotation, s),
                        from.translation.lerp(&to.translation, s),
                    ));
                    if done < steps {
                        self.active = Some(Active::Move { from, to, steps, done });
                        false
                    } else {
                        self.nominal = Some(to);
                        true
                    }
                }
                (
                    ScriptStep::Press {
                        force,
                        speed,
                        max_travel,
                    },
                    active,
                ) => {
                    let travelled = match active {
                        Some(Active::Press { travelled }) => travelled,
                        _ => 0.0,
                    };
                    if frame.f_ext.force.z >= *force || travelled >= *max_travel {
                        true
                    } else {
                        let mut p = nominal;
                        p.translation.z -= speed * dt;
                        self.nominal = Some(p);
                        self.active = Some(Active::Press {
                            travelled: travelled + speed * dt,
                        });
                        false
                    }
                }
                (ScriptStep::Dwell { seconds }, active) => {
                    let left = match active {
                        Some(Active::Dwell { left }) => left,
                        _ => ((seconds / dt) - 1e-6).ceil().max(0.0) as u64,
                    };
                    if left == 0 {
                        self.index += 1;
                        continue;
                    }
                    if left > 1 {
                        self.active = Some(Active::Dwell { left: left - 1 });
                        false
                    } else {
                        true
                    }
                }
                (ScriptStep::Wait { until, timeout }, active) => {
                    let waited = match active {
                        Some(Active::Wait { waited }) => waited,
                        _ => 0.0,
                    };
                    if until.holds(frame) {
                        self.index += 1;
                        continue;
                    }
                    let waited = waited + dt;
                    if timeout.is_some_and(|t| waited >= t) {
                        true
                    } else {
                        self.active = Some(Active::Wait { waited });
                        false
                    }
                }
            };
            if finished_step {
                self.index += 1;
            }
            return true;
        }
    }

    fn command(&mut self, frame: &SlaveFrame) -> Result<MasterCommand, GatewayError> {
        let nominal = self.nominal.expect("initialized");
        let mut gap = nominal.translation - frame.x.translation;
        gap.z = 0.0;
        self.correction += gap * (self.script.correction_rate * self.dt);
        let norm = self.correction.norm();
        if norm > MAX_CORRECTION {
            self.correction *= MAX_CORRECTION / norm;
        }
        let mut commanded = nominal;
        commanded.translation += self.correction;
        if let Some(unit) = &self.noise {
            let w = Vector3::from_fn(|_, _| unit.sample(&mut self.rng));
            let gain = (1.0 - self.rho * self.rho).sqrt() * self.script.noise;
            self.tremor = self.tremor * self.rho + w * gain;
            commanded.translation += self.tremor;
        }
        let payload = match self.mode {
            CouplingMode::Cartesian => {
                let sent = self.sent.unwrap_or(frame.x);
                let d_rot = commanded.rotation * sent.rotation.inverse();
                let d_trans = commanded.translation - sent.translation;
                let inv = self.base_rotation.inverse();
                let delta = SpatialPose::new(
                    UnitQuaternion::new_normalize(*(inv * d_rot * self.base_rotation).quaternion()),
                    inv * d_trans / self.motion_scale,
                );
                CommandPayload::Cartesian {
                    delta_pose: delta,
                    clutch: true,
                }
            }
            CouplingMode::Joint => {
                let q_prev = self.q_cmd.clone().unwrap_or_else(|| frame.q.clone());
                let mut q = q_prev.clone();
                for _ in 0..4 {
                    let (next, err) = ik_step(&self.twin, &q, &commanded, 1e-3)?;
                    q = next;
                    if err < 1e-10 {
                        break;
                    }
                }
                let dq = (&q - &q_prev) / self.dt;
                self.q_cmd = Some(q.clone());
                CommandPayload::Joint { q_l: q, dq_l: dq }
            }
        };
        self.sent = Some(commanded);
        self.seq += 1;
        Ok(MasterCommand {
            seq: self.seq,
            t: frame.t,
            payload,
            effector: self.pending.take(),
        })
    }
}

impl CommandSource for ScriptedOperator {
    fn next(&mut self, frame: &SlaveFrame) -> OperatorInput {
        if self.nominal.is_none() {
            self.nominal = Some(frame.x);
            self.sent = Some(frame.x);
            if self.mode == CouplingMode::Joint {
                self.q_cmd = Some(frame.q.clone());
            }
        }
        // An effector step just before the end still goes out, on one last
        // command that holds the pose.
        if !self.advance(frame) && self.pending.is_none() {
            return OperatorInput::Finished;
        }
        match self.command(frame) {
            Ok(cmd) => OperatorInput::Command(cmd),
            Err(e) => {
                log::warn!("scripted operator stopped: {e}");
                OperatorInput::Closed
            }
        }
    }
}

/// An operator that never sends anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdleSource;

impl CommandSource for IdleSource {
    fn next(&mut self, _frame: &SlaveFrame) -> OperatorInput {
        OperatorInput::Idle
    }
}
