//! Trial outcome predicates.

use serde::{Deserialize, Serialize};

use super::spec::{TaskKind, TaskSpec};
use super::world::WorldState;
use super::TaskError;
use crate::metrics::{EventKind, TrialLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeReason {
    Completed,
    ForceLimitExceeded,
    FirstGraspFailed,
    GraspLostOutsideContainer,
    PathDeviation,
    IncompleteCut,
    /// Ran out of time or the operator stopped before finishing.
    Incomplete,
    /// The operator connection closed mid-trial.
    Aborted,
}

impl OutcomeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeReason::Completed => "completed",
            OutcomeReason::ForceLimitExceeded => "force_limit_exceeded",
            OutcomeReason::FirstGraspFailed => "first_grasp_failed",
            OutcomeReason::GraspLostOutsideContainer => "grasp_lost_outside_container",
            OutcomeReason::PathDeviation => "path_deviation",
            OutcomeReason::IncompleteCut => "incomplete_cut",
            OutcomeReason::Incomplete => "incomplete",
            OutcomeReason::Aborted => "aborted",
        }
    }
}

impl std::fmt::Display for OutcomeReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub success: bool,
    pub reason: OutcomeReason,
    pub time_s: f64,
    /// Bolts, modules or parts finished before the trial ended.
    pub units_completed: u32,
    pub units_total: u32,
}

/// The failure an event stands for, if any.
pub fn failure_reason(kind: &EventKind) -> Option<OutcomeReason> {
    match kind {
        EventKind::ForceLimitExceeded { .. } => Some(OutcomeReason::ForceLimitExceeded),
        EventKind::GraspMissed { .. } => Some(OutcomeReason::FirstGraspFailed),
        EventKind::Detach {
            in_container: false, ..
        }
        | EventKind::Release {
            in_container: false, ..
        } => Some(OutcomeReason::GraspLostOutsideContainer),
        EventKind::PathDeviation { .. } => Some(OutcomeReason::PathDeviation),
        EventKind::Aborted { .. } => Some(OutcomeReason::Aborted),
        _ => None,
    }
}

/// Applies the task's success predicate to the final scene and the trial log.
///
/// The earliest failure event decides the reason; a logged force sample
/// above the limit counts as a violation even without an event. Without
/// failures the scene must show every unit finished: bolts backed out,
/// parts released inside the container, or the whole path cut.
pub fn evaluate_outcome(world: &WorldState, spec: &TaskSpec, log: &TrialLog) -> Result<Outcome, TaskError> {
    let Some(time_s) = log.duration() else {
        return Err(TaskError::ContractViolation("trial has not ended".into()));
    };
    if log.header.task != spec.kind {
        return Err(TaskError::ContractViolation(format!(
            "log is for {} but the spec is {}",
            log.header.task, spec.kind
        )));
    }
    let failure = log
        .events
        .iter()
        .filter_map(|e| failure_reason(&e.kind).map(|r| (e.t, r)))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, r)| r)
        .or_else(|| (log.peak_force() > spec.force_limit).then_some(OutcomeReason::ForceLimitExceeded));
    let reason = match failure {
        Some(r) => r,
        None if world.is_complete() => OutcomeReason::Completed,
        None if spec.kind == TaskKind::Cutting => OutcomeReason::IncompleteCut,
        None => OutcomeReason::Incomplete,
    };
    Ok(Outcome {
        success: reason == OutcomeReason::Completed,
        reason,
        time_s,
        units_completed: world.units_completed(),
        units_total: world.units_total(),
    })
}
