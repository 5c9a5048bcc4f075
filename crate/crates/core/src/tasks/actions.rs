//! Task mechanisms: unscrewing, grasping, suction and cutting.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::contact::{contacts_at, penalty_force, tilt_from_vertical};
use super::spec::{ObjectKind, ToolKind};
use super::world::{Attachment, WorldState};
use super::TaskError;
use crate::dynamics::{SpatialPose, Wrench};
use crate::metrics::EventKind;

/// Backs a bolt out while the socket is seated on it.
///
/// Progress runs at the nominal unscrew rate only when the socket axis is
/// within the lateral and tilt windows, the spindle runs, and the socket
/// presses on the head with at least the minimum force. Returns the
/// loosening event when the last thread clears.
pub fn advance_fastener(
    world: &mut WorldState,
    bolt_id: &str,
    tool_pose: &SpatialPose,
    spindle_on: bool,
    dt: f64,
) -> Result<Option<EventKind>, TaskError> {
    if !(dt > 0.0) {
        return Err(TaskError::ContractViolation(format!("dt must be > 0, got {dt}")));
    }
    let tol = world.spec.tolerances.clone();
    let axis = world.object(bolt_id)?.pose.translation;
    world.fastener(bolt_id)?;
    let press = world
        .contacts
        .iter()
        .filter(|c| c.object == bolt_id)
        .map(|c| c.normal_force)
        .sum::<f64>();
    let lateral = (tool_pose.translation.xy() - axis.xy()).norm();
    let aligned =
        lateral <= tol.fastener_lateral && tilt_from_vertical(tool_pose).to_degrees() <= tol.fastener_tilt_deg;
    if !(spindle_on && aligned && press >= tol.fastener_min_force) {
        return Ok(None);
    }
    let f = world
        .fasteners
        .iter_mut()
        .find(|f| f.bolt == bolt_id)
        .expect("checked above");
    if f.threads_remaining <= 0.0 {
        return Ok(None);
    }
    f.threads_remaining = (f.threads_remaining - tol.unscrew_rate * dt).max(0.0);
    if f.threads_remaining == 0.0 {
        f.seated = false;
        return Ok(Some(EventKind::BoltLoosened {
            bolt: bolt_id.to_string(),
        }));
    }
    Ok(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraspResult {
    Grasped,
    Missed,
}

/// Closes the gripper on `target_id`. The grasp holds when the object's
/// grasp feature lies inside the capture window and the friction grip
/// `2 μ F_grip` can carry the object's weight; the object then attaches.
pub fn attempt_grasp(
    world: &mut WorldState,
    ee_pose: &SpatialPose,
    grip_force: f64,
    target_id: &str,
) -> Result<GraspResult, TaskError> {
    if world.effector.tool != ToolKind::Gripper {
        return Err(TaskError::ContractViolation("grasp needs the gripper mounted".into()));
    }
    if !(grip_force > 0.0) {
        return Err(TaskError::ContractViolation(format!(
            "grip force must be > 0, got {grip_force}"
        )));
    }
    let tol = &world.spec.tolerances;
    let obj = world.object(target_id)?;
    if !obj.kind.is_movable() {
        return Err(TaskError::Lookup(format!("{target_id} is not graspable")));
    }
    let feature = obj.feature_pose().translation;
    let tip = ee_pose.translation;
    let lateral = (tip.xy() - feature.xy()).norm();
    let vertical = (tip.z - feature.z).abs();
    let tilt = tilt_from_vertical(ee_pose).to_degrees();
    let weight = obj.mass * world.gravity.norm();
    let holds = 2.0 * tol.grip_friction * grip_force >= weight;
    let captured = lateral <= tol.grasp_lateral && vertical <= tol.grasp_vertical && tilt <= tol.grasp_tilt_deg;
    if captured && holds && world.effector.attached.is_none() {
        world.attach(target_id, Attachment::Gripper, ee_pose)?;
        Ok(GraspResult::Grasped)
    } else {
        Ok(GraspResult::Missed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum SuctionResult {
    Engaged {
        object: String,
    },
    /// `object` is the module under the cup, if any.
    NotEngaged {
        object: Option<String>,
    },
}

/// Suction seals on the module under the cup when the cup is within the
/// tilt window of the surface normal and pressed with at least the
/// engagement force.
pub fn suction_engage(world: &WorldState, ee_pose: &SpatialPose, normal_force: f64) -> SuctionResult {
    if world.effector.tool != ToolKind::Suction {
        return SuctionResult::NotEngaged { object: None };
    }
    let tol = &world.spec.tolerances;
    let under = world
        .objects
        .iter()
        .filter(|o| o.kind == ObjectKind::Module && !o.is_attached() && !o.deposited)
        .find(|o| o.bounds().over_footprint(&ee_pose.translation))
        .map(|o| o.id.clone());
    let Some(object) = under else {
        return SuctionResult::NotEngaged { object: None };
    };
    let tilt = tilt_from_vertical(ee_pose).to_degrees();
    if tilt <= tol.suction_tilt_deg && normal_force >= tol.suction_force {
        SuctionResult::Engaged { object }
    } else {
        SuctionResult::NotEngaged { object: Some(object) }
    }
}

/// Depth of the tool tip below the sheet surface, if it is over the sheet.
fn sheet_depth(world: &WorldState, tip: &Vector3<f64>) -> Option<f64> {
    world
        .objects
        .iter()
        .filter(|o| o.kind == ObjectKind::Sheet)
        .map(|o| o.bounds())
        .find(|b| b.over_footprint(tip) && tip.z < b.top())
        .map(|b| b.top() - tip.z)
}

/// Force on the saw: penalty contact plus, with the spindle running and
/// the blade in the sheet, a feed resistance `k_c · depth · ‖v_feed‖`
/// opposing the in-plane feed.
pub fn cutting_wrench(
    world: &WorldState,
    ee_pose: &SpatialPose,
    feed_velocity: &Vector3<f64>,
    spindle_on: bool,
) -> Wrench {
    let tip = ee_pose.translation;
    let normal: f64 = contacts_at(world, &tip, feed_velocity)
        .iter()
        .map(|c| c.normal_force)
        .sum();
    let mut w = penalty_force(world, normal, feed_velocity);
    if spindle_on && world.effector.tool == ToolKind::Cutter {
        if let Some(depth) = sheet_depth(world, &tip) {
            let feed = Vector3::new(feed_velocity.x, feed_velocity.y, 0.0);
            w.force -= feed * (world.spec.tolerances.cutting_coefficient * depth);
        }
    }
    w
}

/// Closest point on the marked path: (arc-length parameter, transverse distance).
/// Beyond either end the distance is measured to the end segment's line.
pub(crate) fn project_on_path(path: &[Vector3<f64>], p: &Vector3<f64>) -> (f64, f64) {
    let p = p.xy();
    let mut best = (0.0, f64::INFINITY);
    let mut start = 0.0;
    let last = path.len() - 2;
    for (i, w) in path.windows(2).enumerate() {
        let (a, b) = (w[0].xy(), w[1].xy());
        let ab = b - a;
        let len = ab.norm();
        let mut u = (p - a).dot(&ab) / (len * len);
        if i > 0 {
            u = u.max(0.0);
        }
        if i < last {
            u = u.min(1.0);
        }
        let d = (a + ab * u - p).norm();
        if d < best.1 {
            best = (start + u.clamp(0.0, 1.0) * len, d);
        }
        start += len;
    }
    best
}

/// Transverse distance from the marked path, in the sheet plane.
pub fn distance_to_path(path: &[Vector3<f64>], p: &Vector3<f64>) -> f64 {
    project_on_path(path, p).1
}

/// Updates cut progress and the deviation flag for the current blade position.
pub fn advance_cut(world: &mut WorldState, ee_pose: &SpatialPose) -> Vec<EventKind> {
    let mut events = Vec::new();
    if !world.effector.spindle_on {
        return events;
    }
    let tip = ee_pose.translation;
    let Some(depth) = sheet_depth(world, &tip) else {
        return events;
    };
    let window = world.spec.path_window.unwrap_or(f64::INFINITY);
    let min_depth = world.spec.tolerances.cut_min_depth;
    let Some(cut) = world.cut.as_mut() else {
        return events;
    };
    let (s, d) = project_on_path(&cut.path, &tip);
    cut.max_deviation = cut.max_deviation.max(d);
    if d > window {
        if !cut.deviated {
            cut.deviated = true;
            events.push(EventKind::PathDeviation { distance: d });
        }
        return events;
    }
    if depth >= min_depth {
        let n = cut.bins.len();
        let bin = ((s / cut.length()) * n as f64).floor().clamp(0.0, (n - 1) as f64) as usize;
        cut.bins[bin] = true;
        cut.progress = cut.bins.iter().filter(|b| **b).count() as f64 / n as f64;
    }
    events
}
