//! Scaled Cartesian coupling: master pose increments drive an impedance
//! target on the slave; slave contact forces are mapped back to the master.

use nalgebra::{DVector, UnitQuaternion, Vector6};
use serde::{Deserialize, Serialize};

use super::{CouplingConfig, CouplingError, CouplingMode};
use crate::dynamics::{DynamicsTerms, JointState, ManipulatorModel, SpatialPose, Wrench, WrenchFrame, UNIT_TOLERANCE};

/// Desired slave end-effector pose `x_t`, slave base frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetPose {
    pub pose: SpatialPose,
}

/// Express a master-frame pose increment in the slave base frame.
///
/// The increment's rotation is conjugated by the base rotation (its axis is
/// re-expressed, its angle preserved) and its translation is rotated and
/// multiplied by the motion scale. A disengaged clutch yields identity.
pub fn map_master_delta(config: &CouplingConfig, delta: &SpatialPose) -> Result<SpatialPose, CouplingError> {
    config.require(CouplingMode::Cartesian)?;
    let norm = delta.rotation.quaternion().norm();
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(CouplingError::ContractViolation(format!(
            "delta rotation is not unit length (norm {norm})"
        )));
    }
    if !delta.is_finite() {
        return Err(CouplingError::ContractViolation("non-finite delta".into()));
    }
    if delta.rotation.angle() >= std::f64::consts::PI {
        return Err(CouplingError::ContractViolation(
            "delta rotation angle must be < π".into(),
        ));
    }
    if !config.clutch_engaged {
        return Ok(SpatialPose::identity());
    }
    let r = config.base_transform.rotation;
    Ok(SpatialPose {
        rotation: r * delta.rotation * r.inverse(),
        translation: r * delta.translation * config.motion_scale,
    })
}

/// Pose error `e_x = x_f − x_t`: translation difference stacked on the
/// axis-angle vector of `R_f R_tᵀ` (base frame).
pub fn pose_error(x_f: &SpatialPose, x_t: &SpatialPose) -> Vector6<f64> {
    let dt = x_f.translation - x_t.translation;
    let dr = (x_f.rotation * x_t.rotation.inverse()).scaled_axis();
    Vector6::new(dt.x, dt.y, dt.z, dr.x, dr.y, dr.z)
}

/// Transpose-Jacobian impedance law
/// `τ = Jᵀ(−K_p e_x − K_d J q̇) + c(q, q̇) + g(q)`.
pub fn cartesian_impedance_torques(
    model: &ManipulatorModel,
    state: &JointState,
    target: &TargetPose,
    config: &CouplingConfig,
) -> Result<DVector<f64>, CouplingError> {
    config.require(CouplingMode::Cartesian)?;
    if !state.is_finite() || !target.pose.is_finite() {
        return Err(CouplingError::ContractViolation("non-finite state or target".into()));
    }
    let terms = DynamicsTerms::compute(model, state)?;
    cartesian_impedance_with_terms(&terms, state, target, config)
}

/// Same law as [`cartesian_impedance_torques`] with precomputed dynamics terms.
pub fn cartesian_impedance_with_terms(
    terms: &DynamicsTerms,
    state: &JointState,
    target: &TargetPose,
    config: &CouplingConfig,
) -> Result<DVector<f64>, CouplingError> {
    config.require(CouplingMode::Cartesian)?;
    let e = pose_error(&terms.frames.ee, &target.pose);
    let twist = &terms.jacobian * &state.dq;
    let twist = Vector6::from_iterator(twist.iter().copied());
    let task_force = -config.kp_task * e - config.kd_task * twist;
    let task_force = DVector::from_column_slice(task_force.as_slice());
    Ok(terms.jacobian.transpose() * task_force + &terms.coriolis + &terms.gravity)
}

/// Force rendered on the master and whether the device cap was hit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MappedFeedback {
    pub wrench: Wrench,
    pub saturated: bool,
}

/// `F_l = G · R⁻¹ · F_ext`, force norm clamped to the master's cap with its
/// direction preserved. Only the rotation of the base transform applies to
/// free vectors.
pub fn map_feedback_force(config: &CouplingConfig, f_ext: &Wrench) -> Result<MappedFeedback, CouplingError> {
    config.require(CouplingMode::Cartesian)?;
    if f_ext.frame != WrenchFrame::Base {
        return Err(CouplingError::ContractViolation(
            "feedback expects a slave base-frame wrench".into(),
        ));
    }
    let inv: UnitQuaternion<f64> = config.base_transform.rotation.inverse();
    let mut force = inv * f_ext.force * config.feedback_gain;
    let torque = if config.master_renders_torque {
        inv * f_ext.torque * config.feedback_gain
    } else {
        nalgebra::Vector3::zeros()
    };
    let norm = force.norm();
    let saturated = norm > config.master_force_cap;
    if saturated {
        force *= config.master_force_cap / norm;
    }
    Ok(MappedFeedback {
        wrench: Wrench {
            force,
            torque,
            frame: WrenchFrame::Base,
        },
        saturated,
    })
}

/// Slave target integrated from master increments at the control rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CartesianTarget {
    pub target: TargetPose,
    /// Time of the last applied master increment, s.
    pub last_input: f64,
}

impl CartesianTarget {
    pub fn new(pose: SpatialPose, t: f64) -> Self {
        Self {
            target: TargetPose { pose },
            last_input: t,
        }
    }

    /// Apply one master increment; the mapped rotation is applied in the base frame.
    pub fn apply(&mut self, config: &CouplingConfig, delta: &SpatialPose, t: f64) -> Result<(), CouplingError> {
        let d = map_master_delta(config, delta)?;
        let pose = &mut self.target.pose;
        pose.translation += d.translation;
        pose.rotation = UnitQuaternion::new_normalize(*(d.rotation * pose.rotation).quaternion());
        self.last_input = t;
        Ok(())
    }

    pub fn is_stale(&self, config: &CouplingConfig, t: f64) -> bool {
        t - self.last_input > config.stale_timeout
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn identity_config() -> CouplingConfig {
        let mut c = CouplingConfig::haptic_cartesian();
        c.base_transform = SpatialPose::identity();
        c
    }

    fn shift(x: f64, y: f64, z: f64) -> SpatialPose {
        SpatialPose::from_translation(Vector3::new(x, y, z))
    }

    #[test]
    fn identity_mapping() {
        let d = map_master_delta(&identity_config(), &shift(0.01, 0.0, 0.0)).unwrap();
        assert!((d.translation - Vector3::new(0.01, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn quarter_turn_base() {
        let mut c = identity_config();
        c.base_transform = SpatialPose::from_rotation(UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2));
        let d = map_master_delta(&c, &shift(0.01, 0.0, 0.0)).unwrap();
        assert!((d.translation - Vector3::new(0.0, 0.01, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn scale_applies_to_translation_only() {
        let mut c = identity_config();
        c.motion_scale = 2.0;
        let rot = UnitQuaternion::from_euler_angles(0.1, 0.0, 0.0);
        let d = map_master_delta(&c, &SpatialPose::new(rot, Vector3::new(0.01, 0.0, 0.0))).unwrap();
        assert!((d.translation - Vector3::new(0.02, 0.0, 0.0)).norm() < 1e-15);
        assert!(d.rotation.angle_to(&rot) < 1e-15);
    }

    #[test]
    fn disengaged_clutch_gives_identity() {
        let mut c = identity_config();
        c.clutch_engaged = false;
        let d = map_master_delta(&c, &shift(0.05, 0.02, 0.0)).unwrap();
        assert_eq!(d, SpatialPose::identity());
    }

    #[test]
    fn non_unit_rotation_is_a_contract_violation() {
        let bad = SpatialPose {
            rotation: nalgebra::Unit::new_unchecked(nalgebra::Quaternion::new(1.0, 0.2, 0.0, 0.0)),
            translation: Vector3::zeros(),
        };
        assert!(matches!(
            map_master_delta(&identity_config(), &bad),
            Err(CouplingError::ContractViolation(_))
        ));
    }

    #[test]
    fn joint_profile_cannot_use_cartesian_operations() {
        let c = CouplingConfig::twin_joint();
        assert!(matches!(
            map_master_delta(&c, &shift(0.0, 0.0, 0.0)),
            Err(CouplingError::ModeMismatch { .. })
        ));
        assert!(matches!(
            map_feedback_force(&c, &Wrench::zero(WrenchFrame::Base)),
            Err(CouplingError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn pose_error_cases() {
        let p = SpatialPose::from_xyz_rpy([0.3, 0.1, 0.5], [0.2, -0.1, 0.4]);
        assert!(pose_error(&p, &p).amax() < 1e-15);

        let t = SpatialPose::identity();
        let f = shift(0.0, 0.0, 0.05);
        assert!((pose_error(&f, &t) - Vector6::new(0.0, 0.0, 0.05, 0.0, 0.0, 0.0)).norm() < 1e-15);

        let f = SpatialPose::from_rotation(UnitQuaternion::from_euler_angles(0.2, 0.0, 0.0));
        assert!((pose_error(&f, &t) - Vector6::new(0.0, 0.0, 0.0, 0.2, 0.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn feedback_scales_by_gain() {
        let c = identity_config();
        let out = map_feedback_force(&c, &Wrench::force(Vector3::new(10.0, 0.0, 0.0), WrenchFrame::Base)).unwrap();
        assert!((out.wrench.force - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!(!out.saturated);
    }

    #[test]
    fn feedback_is_clamped_to_device_cap() {
        let c = identity_config();
        let f = Vector3::new(24.0, -32.0, 0.0); // norm 40
        let out = map_feedback_force(&c, &Wrench::force(f, WrenchFrame::Base)).unwrap();
        assert!((out.wrench.force.norm() - 3.3).abs() < 1e-12);
        assert!((out.wrench.force.normalize() - f.normalize()).norm() < 1e-12);
        assert!(out.saturated);
    }

    #[test]
    fn zero_force_maps_to_zero_and_torque_is_dropped() {
        let c = identity_config();
        let out = map_feedback_force(&c, &Wrench::zero(WrenchFrame::Base)).unwrap();
        assert_eq!(out.wrench.force, Vector3::zeros());
        let w = Wrench {
            force: Vector3::zeros(),
            torque: Vector3::new(1.0, 0.0, 0.0),
            frame: WrenchFrame::Base,
        };
        assert_eq!(map_feedback_force(&c, &w).unwrap().wrench.torque, Vector3::zeros());
        let mut c = c;
        c.master_renders_torque = true;
        assert!((map_feedback_force(&c, &w).unwrap().wrench.torque.x - 0.1).abs() < 1e-15);
    }

    #[test]
    fn clutch_holds_target_still() {
        let mut c = identity_config();
        c.clutch_engaged = false;
        let start = SpatialPose::from_xyz_rpy([0.3, 0.0, 0.5], [3.0, 0.0, 0.0]);
        let mut target = CartesianTarget::new(start, 0.0);
        for k in 0..100 {
            target.apply(&c, &shift(0.001, -0.002, 0.003), k as f64 * 1e-3).unwrap();
        }
        assert_eq!(target.target.pose, start);
    }

    #[test]
    fn stale_after_timeout() {
        let c = identity_config();
        let t = CartesianTarget::new(SpatialPose::identity(), 1.0);
        assert!(!t.is_stale(&c, 1.049));
        assert!(t.is_stale(&c, 1.051));
    }

    proptest! {
        #[test]
        fn feedback_norm_law(fx in -300.0..300.0f64, fy in -300.0..300.0f64, fz in -300.0..300.0f64,
                             yaw in -3.0..3.0f64, pitch in -1.5..1.5f64) {
            let mut c = CouplingConfig::haptic_cartesian();
            c.base_transform = SpatialPose::from_xyz_rpy([0.1, 0.2, 0.3], [0.3, pitch, yaw]);
            c.master_force_cap = f64::INFINITY;
            let f = Vector3::new(fx, fy, fz);
            let out = map_feedback_force(&c, &Wrench::force(f, WrenchFrame::Base)).unwrap();
            prop_assert!((out.wrench.force.norm() - 0.1 * f.norm()).abs() < 1e-12);
            c.master_force_cap = 3.3;
            let out = map_feedback_force(&c, &Wrench::force(f, WrenchFrame::Base)).unwrap();
            prop_assert!(out.wrench.force.norm() <= 3.3 + 1e-12);
        }

        #[test]
        fn delta_mapping_is_linear_in_scale(tx in -0.05..0.05f64, ty in -0.05..0.05f64, tz in -0.05..0.05f64,
                                            ang in -1.0..1.0f64, scale in 0.1..5.0f64) {
            let mut c = CouplingConfig::haptic_cartesian();
            let delta = SpatialPose::new(UnitQuaternion::from_euler_angles(ang, 0.5 * ang, 0.0), Vector3::new(tx, ty, tz));
            let base = map_master_delta(&c, &delta).unwrap();
            c.motion_scale = scale;
            let scaled = map_master_delta(&c, &delta).unwrap();
            prop_assert!((scaled.translation - base.translation * scale).norm() < 1e-14);
            prop_assert!(scaled.rotation.angle_to(&base.rotation) < 1e-14);
        }
    }
}
