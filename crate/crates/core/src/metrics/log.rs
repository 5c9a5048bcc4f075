//! Trial log records shared by the runtime, the task evaluator and the analysis.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dynamics::{LimitKind, SpatialPose, Wrench};
use crate::tasks::{Outcome, TaskKind};

pub const LOG_FORMAT_VERSION: u32 = 1;

/// Which master drove the slave.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Platform {
    /// Desk haptic device with Cartesian coupling.
    Haptic,
    /// Identical cobot with joint coupling.
    Twin,
}

impl std::fmt::Display for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Platform::Haptic => "haptic",
            Platform::Twin => "twin",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format_version: u32,
    pub trial_id: String,
    pub platform: Platform,
    pub task: TaskKind,
    pub scenario: String,
    pub coupling_profile: String,
    pub seed: u64,
    pub rate_hz: f64,
    /// Spacing of logged samples, s.
    pub sample_period: f64,
    pub t0: f64,
}

/// Effector status at a sample.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EffectorSnapshot {
    pub grip_closed: bool,
    pub suction_on: bool,
    pub spindle_on: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attached: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    #[serde(with = "crate::serde_vec::dvector")]
    pub q: DVector<f64>,
    #[serde(with = "crate::serde_vec::dvector")]
    pub dq: DVector<f64>,
    pub x: SpatialPose,
    pub f_ext: Wrench,
    pub effector: EffectorSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    GripClose {
        force: f64,
    },
    GripOpen,
    SuctionOn,
    SuctionOff,
    SpindleOn,
    SpindleOff,
    /// An object attached to the gripper or suction cup.
    Grasp {
        object: String,
    },
    /// A grasp or suction attempt that did not attach anything.
    GraspMissed {
        object: String,
    },
    /// Voluntary release by the operator.
    Release {
        object: String,
        in_container: bool,
    },
    /// Involuntary loss of an attached object.
    Detach {
        object: String,
        in_container: bool,
    },
    BoltLoosened {
        bolt: String,
    },
    PathDeviation {
        distance: f64,
    },
    ForceLimitExceeded {
        force: f64,
    },
    LimitViolation {
        joint: usize,
        kind: LimitKind,
        value: f64,
    },
    /// An effector command the mounted tool cannot perform.
    EffectorRejected {
        reason: String,
    },
    StaleInput,
    InputResumed,
    CommandDropped {
        seq: u64,
    },
    OperatorFinished,
    Aborted {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Everything recorded during one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub header: LogHeader,
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub end_time: Option<f64>,
    pub outcome: Option<Outcome>,
}

impl TrialLog {
    pub fn new(header: LogHeader) -> Self {
        Self {
            header,
            samples: Vec::new(),
            events: Vec::new(),
            end_time: None,
            outcome: None,
        }
    }

    pub fn is_ended(&self) -> bool {
        self.end_time.is_some()
    }

    pub fn duration(&self) -> Option<f64> {
        self.end_time.map(|t| t - self.header.t0)
    }

    pub fn events_of<'a>(&'a self, pred: impl Fn(&EventKind) -> bool + 'a) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| pred(&e.kind))
    }

    /// Largest end-effector force magnitude over the logged samples.
    pub fn peak_force(&self) -> f64 {
        self.samples.iter().map(|s| s.f_ext.force.norm()).fold(0.0, f64::max)
    }

    /// Checks the structural invariants: strictly increasing sample times,
    /// events within the trial window, outcome present iff ended.
    pub fn check(&self) -> Result<(), String> {
        for w in self.samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(format!("sample times not increasing at t = {}", w[1].t));
            }
        }
        let end = self.end_time.unwrap_or(f64::INFINITY);
        if let Some(e) = self.events.iter().find(|e| e.t < self.header.t0 || e.t > end) {
            return Err(format!("event at t = {} outside the trial", e.t));
        }
        if self.end_time.is_some() != self.outcome.is_some() {
            return Err("outcome must be present exactly when the trial has ended".into());
        }
        Ok(())
    }
}
