//! Small analytic arms used for checks and examples.

use nalgebra::{Matrix3, Unit, Vector3};

use super::{Joint, Link, ManipulatorModel, SpatialPose};

const TINY_INERTIA: f64 = 1e-12;

fn revolute_z(name: &str, offset: Vector3<f64>, limit: f64) -> Joint {
    Joint {
        name: name.into(),
        parent_offset: SpatialPose::from_translation(offset),
        axis: Unit::new_normalize(Vector3::z()),
        position_limits: [-limit, limit],
        velocity_limit: 100.0,
        torque_limit: 1000.0,
        damping: 0.0,
        armature: 0.0,
    }
}

fn point_link(mass: f64, com: Vector3<f64>) -> Link {
    Link {
        mass,
        com,
        inertia: Matrix3::identity() * TINY_INERTIA,
    }
}

/// Two-link planar arm in the XY plane with point masses at the link tips, no gravity.
pub fn planar_two_link(l1: f64, l2: f64) -> ManipulatorModel {
    ManipulatorModel {
        name: "planar-2link".into(),
        joints: vec![
            revolute_z("shoulder", Vector3::zeros(), 10.0),
            revolute_z("elbow", Vector3::new(l1, 0.0, 0.0), 10.0),
        ],
        links: vec![
            point_link(1.0, Vector3::new(l1, 0.0, 0.0)),
            point_link(1.0, Vector3::new(l2, 0.0, 0.0)),
        ],
        gravity: Vector3::zeros(),
        ee_offset: SpatialPose::from_translation(Vector3::new(l2, 0.0, 0.0)),
    }
}

/// Point mass on a massless link swinging in a vertical plane: gravity along
/// −Y, joint axis Z, so `q = 0` is horizontal.
pub fn point_pendulum(mass: f64, length: f64, g: f64) -> ManipulatorModel {
    ManipulatorModel {
        name: "point-pendulum".into(),
        joints: vec![revolute_z("pivot", Vector3::zeros(), 10.0)],
        links: vec![point_link(mass, Vector3::new(length, 0.0, 0.0))],
        gravity: Vector3::new(0.0, -g, 0.0),
        ee_offset: SpatialPose::from_translation(Vector3::new(length, 0.0, 0.0)),
    }
}

/// Uniform rod of length `length` pivoting at one end, gravity along −Y.
pub fn rod_pendulum(mass: f64, length: f64, g: f64) -> ManipulatorModel {
    let ic = mass * length * length / 12.0;
    let mut m = point_pendulum(mass, length, g);
    m.name = "rod-pendulum".into();
    m.links[0] = Link {
        mass,
        com: Vector3::new(length / 2.0, 0.0, 0.0),
        inertia: Matrix3::new(1e-6, 0.0, 0.0, 0.0, ic, 0.0, 0.0, 0.0, ic),
    };
    m
}

/// One joint with unit inertia about its axis and no gravity; limits ±3 rad.
pub fn unit_rotor() -> ManipulatorModel {
    ManipulatorModel {
        name: "unit-rotor".into(),
        joints: vec![revolute_z("rotor", Vector3::zeros(), 3.0)],
        links: vec![Link {
            mass: 1.0,
            com: Vector3::zeros(),
            inertia: Matrix3::identity(),
        }],
        gravity: Vector3::zeros(),
        ee_offset: SpatialPose::identity(),
    }
}
