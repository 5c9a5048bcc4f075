use nalgebra::{DMatrix, DVector, UnitQuaternion, Vector3};

use super::{DynamicsError, ManipulatorModel, SpatialPose};

/// World-frame placement of every joint for one configuration.
#[derive(Debug, Clone)]
pub struct ChainFrames {
    /// Link frames (pose after each joint's rotation).
    pub links: Vec<SpatialPose>,
    /// Joint axes in the base frame.
    pub axes: Vec<Vector3<f64>>,
    /// Joint origins in the base frame.
    pub origins: Vec<Vector3<f64>>,
    pub ee: SpatialPose,
}

impl ChainFrames {
    pub fn compute(model: &ManipulatorModel, q: &DVector<f64>) -> Result<Self, DynamicsError> {
        model.check_dim(q, "q")?;
        let n = model.dof();
        let mut links = Vec::with_capacity(n);
        let mut axes = Vec::with_capacity(n);
        let mut origins = Vec::with_capacity(n);
        let mut frame = SpatialPose::identity();
        for (joint, &qi) in model.joints.iter().zip(q.iter()) {
            let pre = frame.compose(&joint.parent_offset);
            axes.push(pre.rotation * joint.axis.into_inner());
            origins.push(pre.translation);
            frame = pre.compose(&SpatialPose::from_rotation(UnitQuaternion::from_axis_angle(
                &joint.axis,
                qi,
            )));
            links.push(frame);
        }
        let ee = frame.compose(&model.ee_offset);
        Ok(Self {
            links,
            axes,
            origins,
            ee,
        })
    }

    /// Geometric Jacobian (6×N, rows `[linear; angular]`) of a point rigidly
    /// attached to link `link`; joints beyond `link` contribute zero columns.
    pub fn point_jacobian(&self, link: usize, point: &Vector3<f64>) -> DMatrix<f64> {
        let n = self.axes.len();
        let mut j = DMatrix::zeros(6, n);
        for i in 0..=link.min(n - 1) {
            let z = self.axes[i];
            let lin = z.cross(&(point - self.origins[i]));
            j.fixed_view_mut::<3, 1>(0, i).copy_from(&lin);
            j.fixed_view_mut::<3, 1>(3, i).copy_from(&z);
        }
        j
    }

    pub fn ee_jacobian(&self) -> DMatrix<f64> {
        self.point_jacobian(self.axes.len() - 1, &self.ee.translation)
    }

    /// Centre of mass of link `i` in the base frame.
    pub fn com(&self, model: &ManipulatorModel, i: usize) -> Vector3<f64> {
        self.links[i].transform_point(&model.links[i].com)
    }
}

/// End-effector pose in the model base frame.
pub fn forward_kinematics(model: &ManipulatorModel, q: &DVector<f64>) -> Result<SpatialPose, DynamicsError> {
    Ok(ChainFrames::compute(model, q)?.ee)
}

/// Geometric Jacobian at the end-effector point, base frame, 6×N.
pub fn jacobian(model: &ManipulatorModel, q: &DVector<f64>) -> Result<DMatrix<f64>, DynamicsError> {
    Ok(ChainFrames::compute(model, q)?.ee_jacobian())
}
