//! Serial-chain manipulator descriptions and the model file format.

use std::path::Path;

use nalgebra::{DVector, Matrix3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use super::{DynamicsError, SpatialPose};

/// Current model file `format_version`.
pub const MODEL_FORMAT_VERSION: u32 = 1;

const PANDA_TOML: &str = include_str!("../../assets/models/panda.toml");
const DESK_MASTER_TOML: &str = include_str!("../../assets/models/desk_master.toml");

/// A revolute joint with URDF-style placement relative to its parent link.
#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub parent_offset: SpatialPose,
    pub axis: Unit<Vector3<f64>>,
    pub position_limits: [f64; 2],
    pub velocity_limit: f64,
    pub torque_limit: f64,
    /// Viscous joint damping, N·m·s/rad.
    pub damping: f64,
    /// Reflected rotor inertia added to the diagonal of `M`, kg·m².
    pub armature: f64,
}

/// Inertial properties of the link driven by the joint with the same index.
/// `com` and `inertia` are expressed in the link frame (after the joint rotation).
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Matrix3<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulatorModel {
    pub name: String,
    pub joints: Vec<Joint>,
    pub links: Vec<Link>,
    pub gravity: Vector3<f64>,
    pub ee_offset: SpatialPose,
}

/// Joint positions, velocities and the estimated external joint torques.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    #[serde(with = "crate::serde_vec::dvector")]
    pub q: DVector<f64>,
    #[serde(with = "crate::serde_vec::dvector")]
    pub dq: DVector<f64>,
    #[serde(with = "crate::serde_vec::dvector")]
    pub tau_ext: DVector<f64>,
}

impl JointState {
    pub fn at_rest(q: DVector<f64>) -> Self {
        let n = q.len();
        Self {
            q,
            dq: DVector::zeros(n),
            tau_ext: DVector::zeros(n),
        }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(self.dq.iter())
            .chain(self.tau_ext.iter())
            .all(|v| v.is_finite())
    }
}

impl ManipulatorModel {
    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    /// Default 7-joint slave arm (Panda-like kinematics, 3 kg payload class).
    pub fn default_slave() -> Self {
        Self::from_toml_str(PANDA_TOML).expect("bundled slave model is valid")
    }

    /// Default 6-joint desk-scale master arm.
    pub fn default_master() -> Self {
        Self::from_toml_str(DESK_MASTER_TOML).expect("bundled master model is valid")
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        let invalid = |msg: String| Err(DynamicsError::InvalidModel(msg));
        if self.joints.is_empty() {
            return invalid("model has no joints".into());
        }
        if self.joints.len() != self.links.len() {
            return invalid(format!("{} joints but {} links", self.joints.len(), self.links.len()));
        }
        if !self.gravity.iter().all(|g| g.is_finite()) {
            return invalid("gravity is not finite".into());
        }
        if !self.ee_offset.is_finite() {
            return invalid("ee_offset is not finite".into());
        }
        for (j, l) in self.joints.iter().zip(&self.links) {
            let [lo, hi] = j.position_limits;
            if !(lo < hi) {
                return invalid(format!("joint {}: lower limit {lo} >= upper {hi}", j.name));
            }
            if !(j.velocity_limit > 0.0) || !(j.torque_limit > 0.0) {
                return invalid(format!("joint {}: non-positive velocity/torque limit", j.name));
            }
            if !(j.damping >= 0.0) {
                return invalid(format!("joint {}: negative damping", j.name));
            }
            if !(j.armature >= 0.0) || !j.armature.is_finite() {
                return invalid(format!("joint {}: armature must be finite and >= 0", j.name));
            }
            if !j.parent_offset.is_finite() || !j.axis.iter().all(|a| a.is_finite()) {
                return invalid(format!("joint {}: non-finite placement", j.name));
            }
            if !(l.mass > 0.0) || !l.mass.is_finite() {
                return invalid(format!("link of joint {}: mass must be > 0", j.name));
            }
            if (l.inertia - l.inertia.transpose()).amax() > 1e-12 {
                return invalid(format!("link of joint {}: inertia not symmetric", j.name));
            }
            if l.inertia.cholesky().is_none() {
                return invalid(format!("link of joint {}: inertia not positive definite", j.name));
            }
        }
        Ok(())
    }

    pub(crate) fn check_dim(&self, v: &DVector<f64>, what: &'static str) -> Result<(), DynamicsError> {
        if v.len() != self.dof() {
            return Err(DynamicsError::DimensionMismatch {
                what,
                expected: self.dof(),
                got: v.len(),
            });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(DynamicsError::NonFinite(what));
        }
        Ok(())
    }

    pub fn position_limits(&self) -> (DVector<f64>, DVector<f64>) {
        let lo = DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.position_limits[0]));
        let hi = DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.position_limits[1]));
        (lo, hi)
    }

    pub fn torque_limits(&self) -> DVector<f64> {
        DVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.torque_limit))
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DynamicsError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| DynamicsError::Parse(e.to_string()))?;
        if file.format_version > MODEL_FORMAT_VERSION {
            return Err(DynamicsError::UnsupportedVersion {
                found: file.format_version,
                supported: MODEL_FORMAT_VERSION,
            });
        }
        let model = file.into_model()?;
        model.validate()?;
        Ok(model)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&ModelFile::from_model(self)).expect("model serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DynamicsError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameSpec {
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct LinkSpec {
    mass: f64,
    com: [f64; 3],
    /// `[ixx, ixy, ixz, iyy, iyz, izz]`
    inertia: [f64; 6],
}

#[derive(Debug, Serialize, Deserialize)]
struct JointSpec {
    name: String,
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
    axis: [f64; 3],
    lower: f64,
    upper: f64,
    velocity: f64,
    effort: f64,
    #[serde(default)]
    damping: f64,
    #[serde(default)]
    armature: f64,
    link: LinkSpec,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    name: String,
    gravity: [f64; 3],
    ee_offset: FrameSpec,
    joints: Vec<JointSpec>,
}

impl ModelFile {
    fn into_model(self) -> Result<ManipulatorModel, DynamicsError> {
        let mut joints = Vec::with_capacity(self.joints.len());
        let mut links = Vec::with_capacity(self.joints.len());
        for j in self.joints {
            let axis = Vector3::from(j.axis);
            if !(axis.norm() > 1e-9) {
                return Err(DynamicsError::InvalidModel(format!("joint {}: zero axis", j.name)));
            }
            let [ixx, ixy, ixz, iyy, iyz, izz] = j.link.inertia;
            links.push(Link {
                mass: j.link.mass,
                com: Vector3::from(j.link.com),
                inertia: Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz),
            });
            joints.push(Joint {
                name: j.name,
                parent_offset: SpatialPose::from_xyz_rpy(j.xyz, j.rpy),
                axis: Unit::new_normalize(axis),
                position_limits: [j.lower, j.upper],
                velocity_limit: j.velocity,
                torque_limit: j.effort,
                damping: j.damping,
                armature: j.armature,
            });
        }
        Ok(ManipulatorModel {
            name: self.name,
            joints,
            links,
            gravity: Vector3::from(self.gravity),
            ee_offset: SpatialPose::from_xyz_rpy(self.ee_offset.xyz, self.ee_offset.rpy),
        })
    }

    fn from_model(m: &ManipulatorModel) -> Self {
        let v3 = |v: &Vector3<f64>| [v.x, v.y, v.z];
        ModelFile {
            format_version: MODEL_FORMAT_VERSION,
            name: m.name.clone(),
            gravity: v3(&m.gravity),
            ee_offset: FrameSpec {
                xyz: v3(&m.ee_offset.translation),
                rpy: m.ee_offset.rpy(),
            },
            joints: m
                .joints
                .iter()
                .zip(&m.links)
                .map(|(j, l)| JointSpec {
                    name: j.name.clone(),
                    xyz: v3(&j.parent_offset.translation),
                    rpy: j.parent_offset.rpy(),
                    axis: v3(&j.axis),
                    lower: j.position_limits[0],
                    upper: j.position_limits[1],
                    velocity: j.velocity_limit,
                    effort: j.torque_limit,
                    damping: j.damping,
                    armature: j.armature,
                    link: LinkSpec {
                        mass: l.mass,
                        com: v3(&l.com),
                        inertia: [
                            l.inertia[(0, 0)],
                            l.inertia[(0, 1)],
                            l.inertia[(0, 2)],
                            l.inertia[(1, 1)],
                            l.inertia[(1, 2)],
                            l.inertia[(2, 2)],
                        ],
                    },
                })
                .collect(),
        }
    }
}
