//! Rigid transforms and spatial force vectors.

use nalgebra::{Isometry3, Matrix3, Quaternion, Translation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Maximum deviation from unit norm accepted for a deserialized rotation.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A rigid transform: rotation followed by translation.
///
/// Composition `a * b` maps a point first through `b`, then through `a`, the
/// usual homogeneous-matrix convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialPose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SpatialPose {
    fn default() -> Self {
        Self::identity()
    }
}

impl SpatialPose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self::new(UnitQuaternion::identity(), translation)
    }

    pub fn from_rotation(rotation: UnitQuaternion<f64>) -> Self {
        Self::new(rotation, Vector3::zeros())
    }

    /// URDF-style fixed-axis roll/pitch/yaw plus translation.
    pub fn from_xyz_rpy(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self::new(
            UnitQuaternion::from_euler_angles(rpy[0], rpy[1], rpy[2]),
            Vector3::from(xyz),
        )
    }

    pub fn rpy(&self) -> [f64; 3] {
        let (r, p, y) = self.rotation.euler_angles();
        [r, p, y]
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    pub fn compose(&self, other: &SpatialPose) -> SpatialPose {
        SpatialPose {
            rotation: self.rotation * other.rotation,
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> SpatialPose {
        let inv = self.rotation.inverse();
        SpatialPose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn to_isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation)
    }

    pub fn from_isometry(iso: &Isometry3<f64>) -> Self {
        Self::new(iso.rotation, iso.translation.vector)
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        self.rotation.angle()
    }

    pub fn is_finite(&self) -> bool {
        self.rotation.coords.iter().all(|v| v.is_finite()) && self.translation.iter().all(|v| v.is_finite())
    }

    /// Re-project the rotation onto the unit sphere.
    pub fn renormalized(&self) -> SpatialPose {
        SpatialPose {
            rotation: UnitQuaternion::new_normalize(*self.rotation.quaternion()),
            translation: self.translation,
        }
    }

    /// Tool axis (local +Z) expressed in the parent frame.
    pub fn z_axis(&self) -> Vector3<f64> {
        self.rotation * Vector3::z()
    }

    pub fn approx_eq(&self, other: &SpatialPose, tol: f64) -> bool {
        (self.translation - other.translation).amax() <= tol && self.rotation.angle_to(&other.rotation) <= tol
    }
}

impl std::ops::Mul for SpatialPose {
    type Output = SpatialPose;
    fn mul(self, rhs: SpatialPose) -> SpatialPose {
        self.compose(&rhs)
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    /// `[w, x, y, z]`
    rotation: [f64; 4],
    translation: [f64; 3],
}

impl Serialize for SpatialPose {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let q = self.rotation.quaternion();
        PoseRepr {
            rotation: [q.w, q.i, q.j, q.k],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpatialPose {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = PoseRepr::deserialize(d)?;
        let [w, x, y, z] = repr.rotation;
        let q = Quaternion::new(w, x, y, z);
        if !(q.norm() - 1.0).abs().le(&UNIT_TOLERANCE) {
            return Err(serde::de::Error::custom(format!(
                "rotation quaternion is not unit length (norm {})",
                q.norm()
            )));
        }
        if repr.translation.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom("non-finite translation"));
        }
        Ok(SpatialPose {
            rotation: Unit::new_unchecked(q),
            translation: Vector3::from(repr.translation),
        })
    }
}

/// Frame a [`Wrench`] is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WrenchFrame {
    #[default]
    Base,
    EndEffector,
}

/// 6-D force/torque, always tagged with the frame it is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Wrench {
    pub force: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub frame: WrenchFrame,
}

impl Wrench {
    pub fn zero(frame: WrenchFrame) -> Self {
        Self {
            force: Vector3::zeros(),
            torque: Vector3::zeros(),
            frame,
        }
    }

    pub fn force(force: Vector3<f64>, frame: WrenchFrame) -> Self {
        Self {
            force,
            torque: Vector3::zeros(),
            frame,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.force.iter().chain(self.torque.iter()).all(|v| v.is_finite())
    }

    /// Stacked `[force; torque]`, matching the row order of the geometric Jacobian.
    pub fn to_vector(&self) -> nalgebra::Vector6<f64> {
        nalgebra::Vector6::new(
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        )
    }

    /// Re-express in the base frame given the end-effector orientation.
    pub fn in_base(&self, ee_rotation: &UnitQuaternion<f64>) -> Wrench {
        match self.frame {
            WrenchFrame::Base => *self,
            WrenchFrame::EndEffector => Wrench {
                force: ee_rotation * self.force,
                torque: ee_rotation * self.torque,
                frame: WrenchFrame::Base,
            },
        }
    }
}

impl std::ops::Add for Wrench {
    type Output = Wrench;
    fn add(self, rhs: Wrench) -> Wrench {
        debug_assert_eq!(self.frame, rhs.frame, "adding wrenches in different frames");
        Wrench {
            force: self.force + rhs.force,
            torque: self.torque + rhs.torque,
            frame: self.frame,
        }
    }
}
