//! Mutable scene state stepped alongside the slave arm.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::actions::{
    advance_cut, advance_fastener, attempt_grasp, cutting_wrench, suction_engage, GraspResult, SuctionResult,
};
use super::contact::{contact_wrench, contacts_at, tilt_from_vertical};
use super::spec::{Aabb, ObjectKind, Scenario, TaskKind, TaskSpec, ToolKind};
use super::TaskError;
use crate::dynamics::{SpatialPose, Wrench};
use crate::metrics::EventKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attachment {
    #[default]
    None,
    Gripper,
    Suction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub kind: ObjectKind,
    /// Pose of the box centre.
    pub pose: SpatialPose,
    pub half_extents: Vector3<f64>,
    pub mass: f64,
    pub attached_to: Attachment,
    /// Released inside the container.
    pub deposited: bool,
    /// Grasp feature relative to the object centre.
    pub feature: SpatialPose,
    /// Object pose in the tool frame while attached.
    pub(crate) tool_offset: SpatialPose,
    /// Centre height when it was picked up.
    pub(crate) rest_height: f64,
}

impl SceneObject {
    /// World-frame box; objects stay axis-aligned while resting.
    pub fn bounds(&self) -> Aabb {
        Aabb::from_center(self.pose.translation, self.half_extents)
    }

    pub fn feature_pose(&self) -> SpatialPose {
        self.pose * self.feature
    }

    pub fn is_attached(&self) -> bool {
        self.attached_to != Attachment::None
    }

    /// Height the object has been raised since it was picked up.
    pub fn lift(&self) -> f64 {
        self.pose.translation.z - self.rest_height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastenerState {
    pub bolt: String,
    pub initial_turns: f64,
    pub threads_remaining: f64,
    /// Still threaded into the stack.
    pub seated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutState {
    /// Marked path, at the sheet surface.
    pub path: Vec<Vector3<f64>>,
    pub bins: Vec<bool>,
    pub progress: f64,
    pub deviated: bool,
    pub max_deviation: f64,
}

impl CutState {
    pub fn length(&self) -> f64 {
        self.path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
    }
}

/// One active tool-surface contact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contact {
    pub object: String,
    pub penetration: f64,
    pub normal_force: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectorState {
    pub tool: ToolKind,
    /// Closing force while the gripper is closed.
    pub grip: Option<f64>,
    pub suction_on: bool,
    pub spindle_on: bool,
    pub attached: Option<String>,
    /// Module touched with suction on but not yet sealed.
    pub(crate) suction_attempt: Option<String>,
}

/// Operator commands to the mounted tool.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EffectorCommand {
    /// Close the gripper; `force` defaults to the task's configured grip force.
    Grip {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        force: Option<f64>,
    },
    Release,
    SuctionOn,
    SuctionOff,
    SpindleOn,
    SpindleOff,
}

/// Compact scene status streamed with every slave frame.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WorldSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached: Option<String>,
    #[serde(default)]
    pub fasteners: Vec<FastenerSummary>,
    #[serde(default)]
    pub deposited: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut_progress: Option<f64>,
    #[serde(default)]
    pub path_deviation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FastenerSummary {
    pub bolt: String,
    pub threads_remaining: f64,
}

/// Result of advancing the scene by one control period.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldStep {
    /// Total force on the tool: contact, cutting and carried payload, base frame.
    pub wrench: Wrench,
    pub events: Vec<EventKind>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub spec: TaskSpec,
    pub objects: Vec<SceneObject>,
    pub fasteners: Vec<FastenerState>,
    pub cut: Option<CutState>,
    pub contacts: Vec<Contact>,
    pub effector: EffectorState,
    pub gravity: Vector3<f64>,
    pub(crate) force_limit_hit: bool,
    /// Tool velocity at the previous step, for the carried object's inertia.
    pub(crate) prev_velocity: Option<Vector3<f64>>,
}

impl WorldState {
    pub fn new(scenario: &Scenario, gravity: Vector3<f64>) -> Self {
        let spec = scenario.task.clone();
        let objects: Vec<SceneObject> = scenario
            .objects
            .iter()
            .map(|o| {
                let pose = SpatialPose::from_translation(Vector3::from(o.center));
                let feature = spec.target(&o.id).map(|t| pose.inverse() * t.pose).unwrap_or_default();
                SceneObject {
                    id: o.id.clone(),
                    kind: o.kind,
                    pose,
                    half_extents: Vector3::from(o.half_extents),
                    mass: o.mass,
                    attached_to: Attachment::None,
                    deposited: false,
                    feature,
                    tool_offset: SpatialPose::identity(),
                    rest_height: pose.translation.z,
                }
            })
            .collect();
        // Bolts start threaded for unbolting and already backed out for removal.
        let turns = match spec.kind {
            TaskKind::Unbolting => spec.tolerances.bolt_turns,
            _ => 0.0,
        };
        let fasteners = objects
            .iter()
            .filter(|o| o.kind == ObjectKind::Bolt)
            .map(|o| FastenerState {
                bolt: o.id.clone(),
                initial_turns: turns,
                threads_remaining: turns,
                seated: turns > 0.0,
            })
            .collect();
        let cut = (spec.kind == TaskKind::Cutting).then(|| CutState {
            path: spec.targets.iter().map(|t| t.position()).collect(),
            bins: vec![false; spec.tolerances.cut_bins],
            progress: 0.0,
            deviated: false,
            max_deviation: 0.0,
        });
        WorldState {
            effector: EffectorState {
                tool: spec.tool(),
                grip: None,
                suction_on: false,
                spindle_on: false,
                attached: None,
                suction_attempt: None,
            },
            spec,
            objects,
            fasteners,
            cut,
            contacts: Vec::new(),
            gravity,
            force_limit_hit: false,
            prev_velocity: None,
        }
    }

    pub fn object(&self, id: &str) -> Result<&SceneObject, TaskError> {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .ok_or_else(|| TaskError::Lookup(id.to_string()))
    }

    pub(crate) fn object_mut(&mut self, id: &str) -> Result<&mut SceneObject, TaskError> {
        self.objects
            .iter_mut()
            .find(|o| o.id == id)
            .ok_or_else(|| TaskError::Lookup(id.to_string()))
    }

    pub fn fastener(&self, bolt: &str) -> Result<&FastenerState, TaskError> {
        self.fasteners
            .iter()
            .find(|f| f.bolt == bolt)
            .ok_or_else(|| TaskError::Lookup(bolt.to_string()))
    }

    /// Objects the task requires to be handled, in target order.
    fn task_objects(&self) -> impl Iterator<Item = &SceneObject> {
        self.spec
            .targets
            .iter()
            .filter_map(|t| self.objects.iter().find(|o| o.id == t.id))
    }

    pub fn units_total(&self) -> u32 {
        self.spec.repetitions
    }

    pub fn units_completed(&self) -> u32 {
        match self.spec.kind {
            TaskKind::Unbolting => self
                .task_objects()
                .filter(|o| self.fastener(&o.id).is_ok_and(|f| f.threads_remaining <= 0.0))
                .count() as u32,
            TaskKind::Cutting => u32::from(self.cut.as_ref().is_some_and(|c| c.progress >= 1.0)),
            _ => self.task_objects().filter(|o| o.deposited).count() as u32,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.units_completed() >= self.units_total()
    }

    pub fn summary(&self) -> WorldSummary {
        WorldSummary {
            attached: self.effector.attached.clone(),
            fasteners: self
                .fasteners
                .iter()
                .map(|f| FastenerSummary {
                    bolt: f.bolt.clone(),
                    threads_remaining: f.threads_remaining,
                })
                .collect(),
            deposited: self
                .objects
                .iter()
                .filter(|o| o.deposited)
                .map(|o| o.id.clone())
                .collect(),
            cut_progress: self.cut.as_ref().map(|c| c.progress),
            path_deviation: self.cut.as_ref().is_some_and(|c| c.deviated),
        }
    }

    /// Object whose grasp feature is nearest the tool tip, among those still to be moved.
    fn nearest_graspable(&self, tip: &Vector3<f64>) -> Option<(&SceneObject, f64)> {
        self.objects
            .iter()
            .filter(|o| o.kind.is_movable() && !o.deposited && !o.is_attached())
            .filter(|o| self.spec.target(&o.id).is_some())
            .map(|o| (o, (o.feature_pose().translation - tip).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }

    pub(crate) fn attach(&mut self, id: &str, how: Attachment, ee: &SpatialPose) -> Result<(), TaskError> {
        let obj = self.object_mut(id)?;
        obj.attached_to = how;
        obj.tool_offset = ee.inverse() * obj.pose;
        obj.rest_height = obj.pose.translation.z;
        self.effector.attached = Some(id.to_string());
        Ok(())
    }

    /// Lets go of the carried object; returns whether it ended up in the container.
    fn detach(&mut self) -> Option<(String, bool)> {
        let id = self.effector.attached.take()?;
        let container = self.spec.container;
        let obj = self.object_mut(&id).ok()?;
        obj.attached_to = Attachment::None;
        let inside = container.is_some_and(|c| c.contains(&obj.pose.translation));
        obj.deposited = inside;
        Some((id, inside))
    }

    fn reject(&self, what: &str) -> Vec<EventKind> {
        vec![EventKind::EffectorRejected {
            reason: format!("{what} is not available with the {:?} tool", self.effector.tool),
        }]
    }

    /// Applies an operator effector command at the current tool pose.
    pub fn apply_command(&mut self, cmd: &EffectorCommand, ee: &SpatialPose) -> Vec<EventKind> {
        let tool = self.effector.tool;
        let mut events = Vec::new();
        match *cmd {
            EffectorCommand::Grip { force } => {
                if tool != ToolKind::Gripper {
                    return self.reject("grip");
                }
                let force = force.or(self.spec.grip_force).unwrap_or(0.0);
                self.effector.grip = Some(force);
                events.push(EventKind::GripClose { force });
                if self.effector.attached.is_some() {
                    return events;
                }
                let candidate = self
                    .nearest_graspable(&ee.translation)
                    .filter(|(_, d)| *d <= self.spec.tolerances.attempt_radius)
                    .map(|(o, _)| o.id.clone());
                if let Some(id) = candidate {
                    match attempt_grasp(self, ee, force, &id) {
                        Ok(GraspResult::Grasped) => events.push(EventKind::Grasp { object: id }),
                        Ok(GraspResult::Missed) | Err(_) => events.push(EventKind::GraspMissed { object: id }),
                    }
                }
            }
            EffectorCommand::Release => match tool {
                ToolKind::Gripper => {
                    self.effector.grip = None;
                    events.push(EventKind::GripOpen);
                    if let Some((object, in_container)) = self.detach() {
                        events.push(EventKind::Release { object, in_container });
                    }
                }
                ToolKind::Suction => return self.apply_command(&EffectorCommand::SuctionOff, ee),
                _ => return self.reject("release"),
            },
            EffectorCommand::SuctionOn => {
                if tool != ToolKind::Suction {
                    return self.reject("suction");
                }
                if !self.effector.suction_on {
                    self.effector.suction_on = true;
                    events.push(EventKind::SuctionOn);
                }
            }
            EffectorCommand::SuctionOff => {
                if tool != ToolKind::Suction {
                    return self.reject("suction");
                }
                if self.effector.suction_on {
                    self.effector.suction_on = false;
                    events.push(EventKind::SuctionOff);
                }
                if let Some((object, in_container)) = self.detach() {
                    events.push(EventKind::Release { object, in_container });
                } else if let Some(object) = self.effector.suction_attempt.take() {
                    events.push(EventKind::GraspMissed { object });
                }
            }
            EffectorCommand::SpindleOn | EffectorCommand::SpindleOff => {
                if !matches!(tool, ToolKind::SocketWrench | ToolKind::Cutter) {
                    return self.reject("spindle");
                }
                let on = matches!(cmd, EffectorCommand::SpindleOn);
                if self.effector.spindle_on != on {
                    self.effector.spindle_on = on;
                    events.push(if on {
                        EventKind::SpindleOn
                    } else {
                        EventKind::SpindleOff
                    });
                }
            }
        }
        events
    }

    /// Advances the scene by `dt` with the tool at `ee` moving with `twist`
    /// (`[v; ω]`, base frame) and returns the force the scene exerts on the tool.
    pub fn step(&mut self, ee: &SpatialPose, twist: &Vector6<f64>, dt: f64) -> WorldStep {
        let mut events = Vec::new();

        if let Some(id) = self.effector.attached.clone() {
            if let Ok(obj) = self.object_mut(&id) {
                obj.pose = *ee * obj.tool_offset;
            }
        }

        let velocity = Vector3::new(twist[0], twist[1], twist[2]);
        let accel = self.prev_velocity.map_or(Vector3::zeros(), |v| (velocity - v) / dt);
        self.prev_velocity = Some(velocity);
        self.contacts = contacts_at(self, &ee.translation, &velocity);
        let mut wrench = match self.effector.tool {
            ToolKind::Cutter => cutting_wrench(self, ee, &velocity, self.effector.spindle_on),
            _ => contact_wrench(self, ee, twist),
        };

        match self.effector.tool {
            ToolKind::SocketWrench if self.effector.spindle_on => {
                let touching: Vec<String> = self
                    .contacts
                    .iter()
                    .filter(|c| self.fastener(&c.object).is_ok())
                    .map(|c| c.object.clone())
                    .collect();
                for bolt in touching {
                    if let Ok(Some(e)) = advance_fastener(self, &bolt, ee, true, dt) {
                        events.push(e);
                    }
                }
            }
            ToolKind::Suction => self.step_suction(ee, &mut events),
            ToolKind::Cutter => events.extend(advance_cut(self, ee)),
            _ => {}
        }

        if let Some(id) = self.effector.attached.clone() {
            let payload = self.payload(&id, &accel);
            wrench.force += payload;
            let capacity = match self.effector.tool {
                ToolKind::Gripper => 2.0 * self.spec.tolerances.grip_friction * self.effector.grip.unwrap_or(0.0),
                _ => self.spec.tolerances.suction_capacity,
            };
            if payload.norm() > capacity {
                if let Some((object, in_container)) = self.detach() {
                    events.push(EventKind::Detach { object, in_container });
                }
            }
        }

        let magnitude = wrench.force.norm();
        if magnitude > self.spec.force_limit && !self.force_limit_hit {
            self.force_limit_hit = true;
            events.push(EventKind::ForceLimitExceeded { force: magnitude });
        }
        WorldStep { wrench, events }
    }

    /// Load of the carried object on the tool, `m (g − a)`; ramps in over
    /// the support travel as the object leaves its support.
    fn payload(&self, id: &str, accel: &Vector3<f64>) -> Vector3<f64> {
        let Ok(obj) = self.object(id) else {
            return Vector3::zeros();
        };
        let share = (obj.lift() / self.spec.tolerances.support_travel).clamp(0.0, 1.0);
        (self.gravity - accel) * obj.mass * share
    }

    fn step_suction(&mut self, ee: &SpatialPose, events: &mut Vec<EventKind>) {
        if !self.effector.suction_on || self.effector.attached.is_some() {
            return;
        }
        let pressing = self
            .contacts
            .iter()
            .filter(|c| self.object(&c.object).is_ok_and(|o| o.kind == ObjectKind::Module))
            .map(|c| c.normal_force)
            .fold(0.0, f64::max);
        if pressing > 0.0 {
            match suction_engage(self, ee, pressing) {
                SuctionResult::Engaged { object } => {
                    self.effector.suction_attempt = None;
                    if self.attach(&object, Attachment::Suction, ee).is_ok() {
                        events.push(EventKind::Grasp { object });
                    }
                }
                SuctionResult::NotEngaged { object: Some(object) } => {
                    self.effector.suction_attempt = Some(object);
                }
                SuctionResult::NotEngaged { object: None } => {}
            }
        } else if let Some(id) = self.effector.suction_attempt.clone() {
            let gap = self
                .object(&id)
                .map(|o| ee.translation.z - o.bounds().top())
                .unwrap_or(f64::INFINITY);
            if gap > self.spec.tolerances.suction_release_gap {
                self.effector.suction_attempt = None;
                events.push(EventKind::GraspMissed { object: id });
            }
        }
    }

    /// Tool-axis tilt from vertical, degrees.
    pub fn tool_tilt_deg(ee: &SpatialPose) -> f64 {
        tilt_from_vertical(ee).to_degrees()
    }
}
