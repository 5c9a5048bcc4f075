use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use super::CouplingError;
use crate::dynamics::SpatialPose;

pub const COUPLING_FORMAT_VERSION: u32 = 1;

const HAPTIC_CARTESIAN_TOML: &str = include_str!("../../assets/coupling/haptic-cartesian.toml");
const TWIN_JOINT_TOML: &str = include_str!("../../assets/coupling/twin-joint.toml");

/// Names of the bundled coupling profiles.
pub const BUNDLED_PROFILES: [&str; 2] = ["haptic-cartesian", "twin-joint"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingMode {
    /// Master end-effector deltas drive a Cartesian impedance target; scaled force feedback.
    Cartesian,
    /// Master joint positions drive a 1:1 joint impedance; external torques reflected.
    Joint,
}

impl std::fmt::Display for CouplingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CouplingMode::Cartesian => "cartesian",
            CouplingMode::Joint => "joint",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingConfig {
    pub profile: String,
    pub mode: CouplingMode,
    /// Maps master-base vectors into the slave base frame.
    pub base_transform: SpatialPose,
    pub motion_scale: f64,
    /// Force feedback gain `G`.
    pub feedback_gain: f64,
    /// Largest force norm the master can render, N.
    pub master_force_cap: f64,
    /// Whether the master renders torques; 3-axis devices render forces only.
    pub master_renders_torque: bool,
    pub kp_task: Matrix6<f64>,
    pub kd_task: Matrix6<f64>,
    pub kp_joint: DMatrix<f64>,
    pub kd_joint: DMatrix<f64>,
    /// Extra master-side damping in the joint coupling.
    pub kd_master: DMatrix<f64>,
    pub clutch_engaged: bool,
    /// Optional first-order low-pass cutoff for reflected torques, Hz.
    pub feedback_filter_hz: Option<f64>,
    /// Master input older than this freezes the slave target, s.
    pub stale_timeout: f64,
}

impl CouplingConfig {
    pub fn haptic_cartesian() -> Self {
        Self::from_toml_str(HAPTIC_CARTESIAN_TOML).expect("bundled profile is valid")
    }

    pub fn twin_joint() -> Self {
        Self::from_toml_str(TWIN_JOINT_TOML).expect("bundled profile is valid")
    }

    /// Look up a bundled profile by name.
    pub fn bundled(name: &str) -> Option<Self> {
        match name {
            "haptic-cartesian" => Some(Self::haptic_cartesian()),
            "twin-joint" => Some(Self::twin_joint()),
            _ => None,
        }
    }

    /// Load `<name>.toml` from `dir` if present, otherwise the bundled profile.
    pub fn resolve(name: &str, dir: Option<&Path>) -> Result<Self, CouplingError> {
        if let Some(dir) = dir {
            let path = dir.join(format!("{name}.toml"));
            if path.exists() {
                return Self::load(path);
            }
        }
        if let Some(p) = Self::bundled(name) {
            return Ok(p);
        }
        let path = Path::new(name);
        if path.exists() {
            return Self::load(path);
        }
        Err(CouplingError::Config(format!("unknown coupling profile `{name}`")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CouplingError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CouplingError> {
        let file: ProfileFile = toml::from_str(text).map_err(|e| CouplingError::Parse(e.to_string()))?;
        if file.format_version > COUPLING_FORMAT_VERSION {
            return Err(CouplingError::UnsupportedVersion {
                found: file.format_version,
                supported: COUPLING_FORMAT_VERSION,
            });
        }
        let cfg = file.into_config()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(&ProfileFile::from_config(self)).expect("profile serializes")
    }

    pub fn validate(&self) -> Result<(), CouplingError> {
        let bad = |m: String| Err(CouplingError::Config(m));
        if !(self.feedback_gain > 0.0 && self.feedback_gain <= 1.0) {
            return bad(format!("feedback gain {} outside (0, 1]", self.feedback_gain));
        }
        if !(self.motion_scale > 0.0) || !self.motion_scale.is_finite() {
            return bad(format!("motion scale {} must be > 0", self.motion_scale));
        }
        if !(self.master_force_cap > 0.0) {
            return bad(format!("master force cap {} must be > 0", self.master_force_cap));
        }
        if !(self.stale_timeout > 0.0) {
            return bad("stale timeout must be > 0".into());
        }
        if let Some(hz) = self.feedback_filter_hz {
            if !(hz > 0.0) {
                return bad("feedback filter cutoff must be > 0".into());
            }
        }
        if !self.base_transform.is_finite() {
            return bad("base transform is not finite".into());
        }
        spd("kp_task", &DMatrix::from_column_slice(6, 6, self.kp_task.as_slice()))?;
        spd("kd_task", &DMatrix::from_column_slice(6, 6, self.kd_task.as_slice()))?;
        spd("kp_joint", &self.kp_joint)?;
        spd("kd_joint", &self.kd_joint)?;
        spd("kd_master", &self.kd_master)?;
        let n = self.kp_joint.nrows();
        if self.kd_joint.nrows() != n || self.kd_master.nrows() != n {
            return bad("joint gain matrices differ in size".into());
        }
        Ok(())
    }

    pub(crate) fn require(&self, mode: CouplingMode) -> Result<(), CouplingError> {
        if self.mode != mode {
            return Err(CouplingError::ModeMismatch {
                expected: mode,
                found: self.mode,
            });
        }
        Ok(())
    }

    pub(crate) fn require_joint_dof(&self, n: usize) -> Result<(), CouplingError> {
        if self.kp_joint.nrows() != n {
            return Err(CouplingError::Config(format!(
                "joint gains are {}×{0} but the arm has {n} joints",
                self.kp_joint.nrows()
            )));
        }
        Ok(())
    }
}

fn spd(name: &str, m: &DMatrix<f64>) -> Result<(), CouplingError> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(CouplingError::Config(format!(
            "{name} must be a non-empty square matrix"
        )));
    }
    if (m - m.transpose()).amax() > 1e-12 {
        return Err(CouplingError::Config(format!("{name} is not symmetric")));
    }
    if m.clone().cholesky().is_none() {
        return Err(CouplingError::Config(format!("{name} is not positive definite")));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct FrameSpec {
    xyz: [f64; 3],
    #[serde(default)]
    rpy: [f64; 3],
}

#[derive(Debug, Serialize, Deserialize)]
struct TaskGains {
    /// Diagonal stiffness `[x, y, z, rx, ry, rz]`.
    kp: [f64; 6],
    /// Diagonal damping; `2·sqrt(kp)` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kd: Option<[f64; 6]>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JointGains {
    kp: Vec<f64>,
    kd: Vec<f64>,
    /// Master damping; `0.3·kd` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kd_master: Option<Vec<f64>>,
}

fn default_true() -> bool {
    true
}

fn default_stale() -> f64 {
    0.05
}

#[derive(Debug, Serialize, Deserialize)]
struct ProfileFile {
    format_version: u32,
    profile: String,
    mode: CouplingMode,
    #[serde(default)]
    base_transform: Option<FrameSpec>,
    motion_scale: f64,
    feedback_gain: f64,
    master_force_cap: f64,
    #[serde(default)]
    master_renders_torque: bool,
    #[serde(default = "default_true")]
    clutch_engaged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feedback_filter_hz: Option<f64>,
    #[serde(default = "default_stale")]
    stale_timeout: f64,
    task: TaskGains,
    joint: JointGains,
}

impl ProfileFile {
    fn into_config(self) -> Result<CouplingConfig, CouplingError> {
        let kp_task = Vector6::from(self.task.kp);
        let kd_task = match self.task.kd {
            Some(kd) => Vector6::from(kd),
            None => kp_task.map(|k| 2.0 * k.sqrt()),
        };
        let n = self.joint.kp.len();
        if self.joint.kd.len() != n {
            return Err(CouplingError::Config("joint kp and kd lengths differ".into()));
        }
        let kd_joint = DVector::from_vec(self.joint.kd);
        let kd_master = match self.joint.kd_master {
            Some(v) if v.len() == n => DVector::from_vec(v),
            Some(_) => return Err(CouplingError::Config("kd_master length differs from kp".into())),
            None => &kd_joint * 0.3,
        };
        Ok(CouplingConfig {
            profile: self.profile,
            mode: self.mode,
            base_transform: self
                .base_transform
                .map_or_else(SpatialPose::identity, |f| SpatialPose::from_xyz_rpy(f.xyz, f.rpy)),
            motion_scale: self.motion_scale,
            feedback_gain: self.feedback_gain,
            master_force_cap: self.master_force_cap,
            master_renders_torque: self.master_renders_torque,
            kp_task: Matrix6::from_diagonal(&kp_task),
            kd_task: Matrix6::from_diagonal(&kd_task),
            kp_joint: DMatrix::from_diagonal(&DVector::from_vec(self.joint.kp)),
            kd_joint: DMatrix::from_diagonal(&kd_joint),
            kd_master: DMatrix::from_diagonal(&kd_master),
            clutch_engaged: self.clutch_engaged,
            feedback_filter_hz: self.feedback_filter_hz,
            stale_timeout: self.stale_timeout,
        })
    }

    fn from_config(c: &CouplingConfig) -> Self {
        let diag6 = |m: &Matrix6<f64>| {
            let d = m.diagonal();
            [d[0], d[1], d[2], d[3], d[4], d[5]]
        };
        let diag = |m: &DMatrix<f64>| m.diagonal().iter().copied().collect::<Vec<_>>();
        let t = &c.base_transform.translation;
        ProfileFile {
            format_version: COUPLING_FORMAT_VERSION,
            profile: c.profile.clone(),
            mode: c.mode,
            base_transform: Some(FrameSpec {
                xyz: [t.x, t.y, t.z],
                rpy: c.base_transform.rpy(),
            }),
            motion_scale: c.motion_scale,
            feedback_gain: c.feedback_gain,
            master_force_cap: c.master_force_cap,
            master_renders_torque: c.master_renders_torque,
            clutch_engaged: c.clutch_engaged,
            feedback_filter_hz: c.feedback_filter_hz,
            stale_timeout: c.stale_timeout,
            task: TaskGains {
                kp: diag6(&c.kp_task),
                kd: Some(diag6(&c.kd_task)),
            },
            joint: JointGains {
                kp: diag(&c.kp_joint),
                kd: diag(&c.kd_joint),
                kd_master: Some(diag(&c.kd_master)),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_profiles_carry_documented_defaults() {
        let h = CouplingConfig::haptic_cartesian();
        assert_eq!(h.mode, CouplingMode::Cartesian);
        assert_eq!(h.feedback_gain, 0.1);
        assert_eq!(h.master_force_cap, 3.3);
        assert_eq!(h.kp_task[(0, 0)], 400.0);
        assert_eq!(h.kp_task[(3, 3)], 30.0);
        assert!((h.kd_task[(0, 0)] - 40.0).abs() < 1e-12);

        let t = CouplingConfig::twin_joint();
        assert_eq!(t.mode, CouplingMode::Joint);
        assert_eq!(t.feedback_gain, 1.0);
        assert_eq!(
            t.kp_joint.diagonal().as_slice(),
            &[600.0, 600.0, 600.0, 600.0, 250.0, 150.0, 50.0]
        );
        assert_eq!(
            t.kd_joint.diagonal().as_slice(),
            &[50.0, 50.0, 50.0, 20.0, 20.0, 20.0, 10.0]
        );
        assert!((t.kd_master[(0, 0)] - 15.0).abs() < 1e-12);
    }

    #[test]
    fn profile_round_trips_through_toml() {
        for name in BUNDLED_PROFILES {
            let c = CouplingConfig::bundled(name).unwrap();
            let back = CouplingConfig::from_toml_str(&c.to_toml_string()).unwrap();
            assert_eq!(c.kp_task, back.kp_task);
            assert_eq!(c.kd_master, back.kd_master);
            assert!(c.base_transform.approx_eq(&back.base_transform, 1e-12));
        }
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut c = CouplingConfig::haptic_cartesian();
        c.feedback_gain = 1.5;
        assert!(c.validate().is_err());
        let mut c = CouplingConfig::haptic_cartesian();
        c.motion_scale = 0.0;
        assert!(c.validate().is_err());
        let mut c = CouplingConfig::haptic_cartesian();
        c.kp_task[(0, 0)] = -1.0;
        assert!(c.validate().is_err());
        let mut c = CouplingConfig::twin_joint();
        c.kd_joint[(0, 1)] = 3.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_profile_is_a_config_error() {
        assert!(matches!(
            CouplingConfig::resolve("no-such-profile", None),
            Err(CouplingError::Config(_))
        ));
    }
}
