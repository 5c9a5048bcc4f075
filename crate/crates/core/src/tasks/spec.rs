//! Task specifications and the declarative scenario file format.

use std::path::Path;

use nalgebra::{DVector, Vector3};
use serde::{Deserialize, Serialize};

use super::TaskError;
use crate::dynamics::SpatialPose;

pub const SCENARIO_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Unbolting,
    BoltRemoval,
    CoverRemoval,
    Sorting,
    Cutting,
}

impl TaskKind {
    pub const ALL: [TaskKind; 5] = [
        TaskKind::Unbolting,
        TaskKind::BoltRemoval,
        TaskKind::CoverRemoval,
        TaskKind::Sorting,
        TaskKind::Cutting,
    ];

    pub fn default_repetitions(self) -> u32 {
        match self {
            TaskKind::Unbolting => 4,
            TaskKind::BoltRemoval => 8,
            TaskKind::CoverRemoval => 1,
            TaskKind::Sorting => 2,
            TaskKind::Cutting => 1,
        }
    }

    pub fn tool(self) -> ToolKind {
        match self {
            TaskKind::Unbolting => ToolKind::SocketWrench,
            TaskKind::BoltRemoval | TaskKind::CoverRemoval => ToolKind::Gripper,
            TaskKind::Sorting => ToolKind::Suction,
            TaskKind::Cutting => ToolKind::Cutter,
        }
    }

    /// Tasks whose action ends in carrying an object to the container.
    pub fn is_pick_and_place(self) -> bool {
        matches!(self, TaskKind::BoltRemoval | TaskKind::CoverRemoval | TaskKind::Sorting)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Unbolting => "unbolting",
            TaskKind::BoltRemoval => "bolt_removal",
            TaskKind::CoverRemoval => "cover_removal",
            TaskKind::Sorting => "sorting",
            TaskKind::Cutting => "cutting",
        }
    }

    /// Row label in report tables, with the repetition count for multi-unit tasks.
    pub fn label(self) -> String {
        let name = match self {
            TaskKind::Unbolting => "Unbolting",
            TaskKind::BoltRemoval => "Bolt removal",
            TaskKind::CoverRemoval => "Cover removal",
            TaskKind::Sorting => "Sorting modules",
            TaskKind::Cutting => "Cutting",
        };
        match self.default_repetitions() {
            1 => name.to_string(),
            n => format!("{name} ({n}×)"),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = TaskError;
    fn from_str(s: &str) -> Result<Self, TaskError> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| TaskError::Config(format!("unknown task kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    SocketWrench,
    Gripper,
    Suction,
    Cutter,
}

/// Axis-aligned box in the robot base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "BoxRepr", into = "BoxRepr")]
pub struct Aabb {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
}

#[derive(Serialize, Deserialize)]
struct BoxRepr {
    min: [f64; 3],
    max: [f64; 3],
}

impl From<BoxRepr> for Aabb {
    fn from(r: BoxRepr) -> Self {
        Aabb {
            min: r.min.into(),
            max: r.max.into(),
        }
    }
}

impl From<Aabb> for BoxRepr {
    fn from(b: Aabb) -> Self {
        BoxRepr {
            min: b.min.into(),
            max: b.max.into(),
        }
    }
}

impl Aabb {
    pub fn from_center(center: Vector3<f64>, half_extents: Vector3<f64>) -> Self {
        Aabb {
            min: center - half_extents,
            max: center + half_extents,
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Whether `p` lies over the box's top face, ignoring height.
    pub fn over_footprint(&self, p: &Vector3<f64>) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vector3<f64> {
        (self.min + self.max) * 0.5
    }

    pub fn top(&self) -> f64 {
        self.max.z
    }

    fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i].is_finite() && self.max[i].is_finite() && self.min[i] < self.max[i])
    }
}

/// A named point of interest: bolt head, grasp feature, module surface or path waypoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "TargetRepr", into = "TargetRepr")]
pub struct Target {
    pub id: String,
    pub pose: SpatialPose,
}

#[derive(Serialize, Deserialize)]
struct TargetRepr {
    id: String,
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

impl From<TargetRepr> for Target {
    fn from(r: TargetRepr) -> Self {
        Target {
            id: r.id,
            pose: SpatialPose::from_xyz_rpy(r.xyz, r.rpy),
        }
    }
}

impl From<Target> for TargetRepr {
    fn from(t: Target) -> Self {
        TargetRepr {
            id: t.id,
            xyz: t.pose.translation.into(),
            rpy: t.pose.rpy(),
        }
    }
}

impl Target {
    pub fn position(&self) -> Vector3<f64> {
        self.pose.translation
    }
}

/// Alignment windows and process constants of the task mechanisms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Socket axis to bolt axis, m.
    pub fastener_lateral: f64,
    pub fastener_tilt_deg: f64,
    /// Minimum axial press for the socket to bite, N.
    pub fastener_min_force: f64,
    /// Thread turns to back out before a bolt is loose.
    pub bolt_turns: f64,
    /// Unscrew rate with the spindle running, turns/s.
    pub unscrew_rate: f64,
    pub grasp_lateral: f64,
    pub grasp_tilt_deg: f64,
    pub grasp_vertical: f64,
    /// Finger-object friction; a two-finger grip holds `2 μ F_grip`.
    pub grip_friction: f64,
    pub suction_tilt_deg: f64,
    /// Press needed to seal the suction cups, N.
    pub suction_force: f64,
    /// Maximum load a sealed cup holds, N.
    pub suction_capacity: f64,
    /// Tool separation from a surface that ends a suction attempt, m.
    pub suction_release_gap: f64,
    /// Lift over which an object's weight transfers from its support to the tool, m.
    pub support_travel: f64,
    /// Grasp attempts only count within this distance of an object, m.
    pub attempt_radius: f64,
    /// Cutting force coefficient, N·s/m².
    pub cutting_coefficient: f64,
    /// Depth below which the saw only scores the sheet, m.
    pub cut_min_depth: f64,
    /// Resolution of cut-progress tracking along the path.
    pub cut_bins: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fastener_lateral: 2e-3,
            fastener_tilt_deg: 5.0,
            fastener_min_force: 5.0,
            bolt_turns: 5.0,
            unscrew_rate: 1.0,
            grasp_lateral: 6e-3,
            grasp_tilt_deg: 10.0,
            grasp_vertical: 15e-3,
            grip_friction: 0.25,
            suction_tilt_deg: 5.0,
            suction_force: 20.0,
            suction_capacity: 80.0,
            suction_release_gap: 5e-3,
            support_travel: 5e-3,
            attempt_radius: 0.05,
            cutting_coefficient: 2000.0,
            cut_min_depth: 0.5e-3,
            cut_bins: 50,
        }
    }
}

/// Penalty contact parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    /// k_n, N/m.
    pub stiffness: f64,
    /// b_n, N·s/m.
    pub damping: f64,
    /// Tangential viscous coefficient, N·s/m.
    pub friction_damping: f64,
    /// Cap on tangential force as a multiple of the normal force.
    pub friction_coefficient: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 10_000.0,
            damping: 50.0,
            friction_damping: 20.0,
            friction_coefficient: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub repetitions: u32,
    /// End-effector force magnitude that fails the trial, N.
    pub force_limit: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grip_force: Option<f64>,
    /// Half-width of the acceptable cut band around the path, m.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_window: Option<f64>,
    pub targets: Vec<Target>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<Aabb>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub contact: ContactParams,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), TaskError> {
        let bad = |m: String| Err(TaskError::Config(m));
        if self.repetitions < 1 {
            return bad("repetitions must be at least 1".into());
        }
        if !(self.force_limit > 0.0) {
            return bad(format!("force_limit must be > 0, got {}", self.force_limit));
        }
        if self.targets.is_empty() {
            return bad("a task needs at least one target".into());
        }
        if self.targets.iter().any(|t| !t.pose.is_finite()) {
            return bad("non-finite target pose".into());
        }
        match self.kind {
            TaskKind::Cutting => {
                if !self.path_window.is_some_and(|w| w > 0.0) {
                    return bad("cutting needs path_window > 0".into());
                }
                if self.targets.len() < 2 {
                    return bad("a cutting path needs at least two waypoints".into());
                }
            }
            TaskKind::BoltRemoval | TaskKind::CoverRemoval if !self.grip_force.is_some_and(|g| g > 0.0) => {
                return bad(format!("{} needs grip_force > 0", self.kind));
            }
            _ => {}
        }
        if self.kind != TaskKind::Cutting && self.targets.len() != self.repetitions as usize {
            return bad(format!(
                "{} targets listed for {} repetitions",
                self.targets.len(),
                self.repetitions
            ));
        }
        if self.kind.is_pick_and_place() {
            match &self.container {
                Some(c) if c.is_valid() => {}
                _ => return bad(format!("{} needs a valid container region", self.kind)),
            }
        }
        let t = &self.tolerances;
        let positive = [
            t.fastener_lateral,
            t.fastener_min_force,
            t.bolt_turns,
            t.unscrew_rate,
            t.grasp_lateral,
            t.grasp_vertical,
            t.grip_friction,
            t.suction_force,
            t.suction_capacity,
            t.suction_release_gap,
            t.support_travel,
            t.attempt_radius,
            t.cutting_coefficient,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || t.cut_bins == 0 || t.cut_min_depth < 0.0 {
            return bad("tolerances must be positive".into());
        }
        let c = &self.contact;
        if !(c.stiffness > 0.0) || c.damping < 0.0 || c.friction_damping < 0.0 || c.friction_coefficient < 0.0 {
            return bad("contact parameters must be non-negative with stiffness > 0".into());
        }
        Ok(())
    }

    pub fn target(&self, id: &str) -> Option<&Target> {
        self.targets.iter().find(|t| t.id == id)
    }

    pub fn tool(&self) -> ToolKind {
        self.kind.tool()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectKind {
    /// Static support geometry (stack, table, fixtures).
    Fixture,
    Bolt,
    Cover,
    Module,
    /// Planar stock for cutting; static.
    Sheet,
}

impl ObjectKind {
    pub fn is_movable(self) -> bool {
        matches!(self, ObjectKind::Bolt | ObjectKind::Cover | ObjectKind::Module)
    }
}

/// Scene geometry entry of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub kind: ObjectKind,
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    #[serde(default)]
    pub mass: f64,
}

/// A complete scenario: the task, its scene and the home posture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub format_version: u32,
    pub name: String,
    /// Slave (and twin master) joint configuration at trial start, rad.
    pub home: Vec<f64>,
    pub task: TaskSpec,
    pub objects: Vec<ObjectSpec>,
}

pub const BUNDLED_SCENARIOS: [(&str, &str); 5] = [
    ("unbolting", include_str!("../../assets/scenarios/unbolting.toml")),
    ("bolt_removal", include_str!("../../assets/scenarios/bolt_removal.toml")),
    (
        "cover_removal",
        include_str!("../../assets/scenarios/cover_removal.toml"),
    ),
    ("sorting", include_str!("../../assets/scenarios/sorting.toml")),
    ("cutting", include_str!("../../assets/scenarios/cutting.toml")),
];

impl Scenario {
    pub fn bundled(name: &str) -> Option<Scenario> {
        BUNDLED_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, text)| Scenario::from_toml_str(text).expect("bundled scenario is valid"))
    }

    pub fn for_task(kind: TaskKind) -> Scenario {
        Scenario::bundled(kind.as_str()).expect("every task kind has a bundled scenario")
    }

    /// A bundled name, or a path (with `dir` tried as a base for relative names).
    pub fn resolve(name: &str, dir: Option<&Path>) -> Result<Scenario, TaskError> {
        if let Some(s) = Scenario::bundled(name) {
            return Ok(s);
        }
        let direct = Path::new(name);
        if direct.exists() {
            return Scenario::load(direct);
        }
        if let Some(dir) = dir {
            for candidate in [dir.join(name), dir.join(format!("{name}.toml"))] {
                if candidate.exists() {
                    return Scenario::load(candidate);
                }
            }
        }
        Err(TaskError::Config(format!("no bundled scenario or file named `{name}`")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, TaskError> {
        Scenario::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Scenario, TaskError> {
        #[derive(Deserialize)]
        struct Version {
            format_version: u32,
        }
        let v: Version = toml::from_str(text).map_err(|e| TaskError::Parse(e.to_string()))?;
        if v.format_version > SCENARIO_FORMAT_VERSION {
            return Err(TaskError::UnsupportedVersion {
                found: v.format_version,
                supported: SCENARIO_FORMAT_VERSION,
            });
        }
        let s: Scenario = toml::from_str(text).map_err(|e| TaskError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), TaskError> {
        self.task.validate()?;
        if self.home.iter().any(|v| !v.is_finite()) {
            return Err(TaskError::Config("non-finite home configuration".into()));
        }
        let mut ids: Vec<&str> = self.objects.iter().map(|o| o.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(TaskError::Config("duplicate object id".into()));
        }
        for o in &self.objects {
            if o.half_extents.iter().any(|h| !(*h > 0.0)) || o.center.iter().any(|c| !c.is_finite()) {
                return Err(TaskError::Config(format!("object {}: bad geometry", o.id)));
            }
            if o.kind.is_movable() && !(o.mass > 0.0) {
                return Err(TaskError::Config(format!(
                    "object {}: movable objects need mass > 0",
                    o.id
                )));
            }
        }
        let wanted = match self.task.kind {
            TaskKind::Unbolting | TaskKind::BoltRemoval => Some(ObjectKind::Bolt),
            TaskKind::CoverRemoval => Some(ObjectKind::Cover),
            TaskKind::Sorting => Some(ObjectKind::Module),
            TaskKind::Cutting => None,
        };
        match wanted {
            Some(kind) => {
                for t in &self.task.targets {
                    if !self.objects.iter().any(|o| o.id == t.id && o.kind == kind) {
                        return Err(TaskError::Config(format!(
                            "target {} has no matching {kind:?} object",
                            t.id
                        )));
                    }
                }
            }
            None => {
                if !self.objects.iter().any(|o| o.kind == ObjectKind::Sheet) {
                    return Err(TaskError::Config("cutting needs a sheet object".into()));
                }
            }
        }
        Ok(())
    }

    pub fn home_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.home)
    }
}
