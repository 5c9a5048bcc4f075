//! Penalty contact between the tool tip and the top faces of scene boxes.

use nalgebra::{Vector3, Vector6};

use super::spec::{ObjectKind, ToolKind};
use super::world::{Contact, SceneObject, WorldState};
use crate::dynamics::{SpatialPose, Wrench, WrenchFrame};

/// Angle between the tool axis and straight down, rad.
pub fn tilt_from_vertical(ee: &SpatialPose) -> f64 {
    (-ee.z_axis().z).clamp(-1.0, 1.0).acos()
}

/// Whether the mounted tool touches this object. Fingers straddle graspable
/// parts and the socket only meets bolt heads, so each tool sees a
/// different subset of the scene.
fn collides(tool: ToolKind, obj: &SceneObject) -> bool {
    if obj.is_attached() || obj.deposited {
        return false;
    }
    match obj.kind {
        ObjectKind::Fixture | ObjectKind::Sheet => true,
        ObjectKind::Bolt => tool == ToolKind::SocketWrench,
        ObjectKind::Module => tool == ToolKind::Suction,
        ObjectKind::Cover => false,
    }
}

/// Active contacts for a tool tip at `tip` moving with `velocity`.
pub(crate) fn contacts_at(world: &WorldState, tip: &Vector3<f64>, velocity: &Vector3<f64>) -> Vec<Contact> {
    let params = &world.spec.contact;
    world
        .objects
        .iter()
        .filter(|o| collides(world.effector.tool, o))
        .filter_map(|o| {
            let b = o.bounds();
            // Boxes rest on one another, so depth keeps counting below a box's
            // own bottom face; force stays continuous across layers.
            if !b.over_footprint(tip) || tip.z >= b.top() {
                return None;
            }
            let penetration = b.top() - tip.z;
            let rate = -velocity.z;
            Some(Contact {
                object: o.id.clone(),
                penetration,
                normal_force: (params.stiffness * penetration + params.damping * rate).max(0.0),
            })
        })
        .collect()
}

/// Force of the scene on the tool: `k_n·δ + b_n·δ̇` along +Z per touched
/// surface (never pulling), plus viscous friction opposing sliding, capped
/// at `μ` times the normal force.
pub fn contact_wrench(world: &WorldState, ee: &SpatialPose, twist: &Vector6<f64>) -> Wrench {
    let velocity = Vector3::new(twist[0], twist[1], twist[2]);
    let normal: f64 = contacts_at(world, &ee.translation, &velocity)
        .iter()
        .map(|c| c.normal_force)
        .sum();
    penalty_force(world, normal, &velocity)
}

pub(crate) fn penalty_force(world: &WorldState, normal: f64, velocity: &Vector3<f64>) -> Wrench {
    if normal <= 0.0 {
        return Wrench::zero(WrenchFrame::Base);
    }
    let params = &world.spec.contact;
    let slide = Vector3::new(velocity.x, velocity.y, 0.0);
    let speed = slide.norm();
    let friction = if speed > 0.0 {
        -slide / speed * (params.friction_damping * speed).min(params.friction_coefficient * normal)
    } else {
        Vector3::zeros()
    };
    Wrench::force(Vector3::new(0.0, 0.0, normal) + friction, WrenchFrame::Base)
}
