//! Splits a trial into coarse, fine, action and place stages.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{EventKind, MetricsError, TrialLog};
use crate::tasks::{TaskKind, TaskSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Coarse,
    Fine,
    Action,
    Place,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Coarse, Stage::Fine, Stage::Action, Stage::Place];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Coarse => "coarse",
            Stage::Fine => "fine",
            Stage::Action => "action",
            Stage::Place => "place",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageInterval {
    pub stage: Stage,
    pub start: f64,
    pub end: f64,
}

impl StageInterval {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StageAnnotation {
    pub intervals: Vec<StageInterval>,
}

impl StageAnnotation {
    /// Total time spent in `stage`.
    pub fn time_in(&self, stage: Stage) -> f64 {
        self.intervals
            .iter()
            .filter(|i| i.stage == stage)
            .map(StageInterval::duration)
            .sum()
    }

    pub fn stage_at(&self, t: f64) -> Option<Stage> {
        self.intervals
            .iter()
            .find(|i| t >= i.start && t < i.end)
            .or_else(|| self.intervals.last().filter(|i| t == i.end))
            .map(|i| i.stage)
    }
}

/// Thresholds used to place stage boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentParams {
    /// Distance to the current target below which alignment counts as fine, m.
    pub fine_radius: f64,
    /// Contact force that starts the action stage of grasping tasks, N.
    pub force_threshold: f64,
    /// How long the force must stay above the threshold, s.
    pub force_hold: f64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        Self {
            fine_radius: 0.05,
            force_threshold: 2.0,
            force_hold: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Approach,
    Action,
    Place,
}

enum Item<'a> {
    Sample(&'a Vector3<f64>),
    ForceOnset,
    Event(&'a EventKind),
}

fn segment_distance(p: &Vector3<f64>, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 > 0.0 {
        ((p - a).dot(&ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + ab * s)).norm()
}

/// Start times of force runs that stay above the threshold for the hold time.
fn force_onsets(log: &TrialLog, params: &SegmentParams) -> Vec<f64> {
    let mut onsets = Vec::new();
    let mut run: Option<(f64, bool)> = None;
    for s in &log.samples {
        if s.f_ext.force.norm() >= params.force_threshold {
            let (start, reported) = run.get_or_insert((s.t, false));
            if !*reported && s.t - *start >= params.force_hold - 1e-9 {
                onsets.push(*start);
                *reported = true;
            }
        } else {
            run = None;
        }
    }
    onsets
}

/// Segments with the default thresholds.
pub fn segment_stages(log: &TrialLog, spec: &TaskSpec) -> Result<StageAnnotation, MetricsError> {
    segment_stages_with(log, spec, &SegmentParams::default())
}

/// Labels every instant of an ended trial with a stage.
///
/// Outside an action the label is coarse or fine by the tool's distance to
/// the nearest unfinished target (the cut path for cutting). Spindle tasks
/// act from spindle on to spindle off. Grasping tasks act from the grip or
/// suction command, or a sustained contact force while fine, until the
/// grasp resolves; a held object puts the trial in place until it is let go.
pub fn segment_stages_with(
    log: &TrialLog,
    spec: &TaskSpec,
    params: &SegmentParams,
) -> Result<StageAnnotation, MetricsError> {
    let Some(end) = log.end_time else {
        return Err(MetricsError::ContractViolation("trial has not ended".into()));
    };
    if spec.kind != log.header.task {
        return Err(MetricsError::Config(format!(
            "task spec is for {} but the log is {}",
            spec.kind, log.header.task
        )));
    }
    if spec.targets.is_empty() {
        return Err(MetricsError::Config(format!("{} spec has no targets", spec.kind)));
    }
    let t0 = log.header.t0;
    let grasping = spec.kind.is_pick_and_place();
    let path: Vec<Vector3<f64>> = spec.targets.iter().map(|t| t.position()).collect();
    let mut remaining: BTreeSet<&str> = spec.targets.iter().map(|t| t.id.as_str()).collect();

    let mut items: Vec<(f64, u8, Item)> = Vec::with_capacity(log.samples.len() + log.events.len());
    items.extend(log.samples.iter().map(|s| (s.t, 0, Item::Sample(&s.x.translation))));
    if grasping {
        items.extend(force_onsets(log, params).into_iter().map(|t| (t, 1, Item::ForceOnset)));
    }
    items.extend(log.events.iter().map(|e| (e.t, 2, Item::Event(&e.kind))));
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let distance = |p: &Vector3<f64>, remaining: &BTreeSet<&str>| -> f64 {
        if spec.kind == TaskKind::Cutting {
            return match path.as_slice() {
                [only] => (p - only).norm(),
                pts => pts
                    .windows(2)
                    .map(|w| segment_distance(p, &w[0], &w[1]))
                    .fold(f64::INFINITY, f64::min),
            };
        }
        spec.targets
            .iter()
            .filter(|t| remaining.contains(t.id.as_str()))
            .map(|t| (p - t.position()).norm())
            .fold(f64::INFINITY, f64::min)
    };
    let approach = |d: f64| {
        if d <= params.fine_radius {
            Stage::Fine
        } else {
            Stage::Coarse
        }
    };

    let mut phase = Phase::Approach;
    let mut tip: Option<Vector3<f64>> = None;
    let mut changes: Vec<(f64, Stage)> = vec![(t0, Stage::Coarse)];
    for (t, _, item) in items {
        if t > end {
            break;
        }
        let t = t.max(t0);
        let d = |remaining: &BTreeSet<&str>| tip.map_or(f64::INFINITY, |p| distance(&p, remaining));
        let next = match item {
            Item::Sample(p) => {
                tip = Some(*p);
                (phase == Phase::Approach).then(|| approach(distance(p, &remaining)))
            }
            Item::ForceOnset => {
                let fine = approach(d(&remaining)) == Stage::Fine;
                (phase == Phase::Approach && fine).then(|| {
                    phase = Phase::Action;
                    Stage::Action
                })
            }
            Item::Event(kind) => match (kind, phase) {
                (EventKind::SpindleOn, Phase::Approach) if !grasping => {
                    phase = Phase::Action;
                    Some(Stage::Action)
                }
                (EventKind::SpindleOff, Phase::Action) if !grasping => {
                    phase = Phase::Approach;
                    Some(approach(d(&remaining)))
                }
                (EventKind::BoltLoosened { bolt }, _) => {
                    remaining.remove(bolt.as_str());
                    (phase == Phase::Approach).then(|| approach(d(&remaining)))
                }
                (EventKind::GripClose { .. } | EventKind::SuctionOn, Phase::Approach) if grasping => {
                    phase = Phase::Action;
                    Some(Stage::Action)
                }
                (EventKind::Grasp { .. }, Phase::Approach | Phase::Action) if grasping => {
                    phase = Phase::Place;
                    Some(Stage::Place)
                }
                (EventKind::GraspMissed { .. } | EventKind::GripOpen | EventKind::SuctionOff, Phase::Action) => {
                    phase = Phase::Approach;
                    Some(approach(d(&remaining)))
                }
                (EventKind::Release { object, in_container } | EventKind::Detach { object, in_container }, _) => {
                    if *in_container {
                        remaining.remove(object.as_str());
                    }
                    (phase == Phase::Place).then(|| {
                        phase = Phase::Approach;
                        approach(d(&remaining))
                    })
                }
                _ => None,
            },
        };
        if let Some(stage) = next {
            if changes.last().map(|c| c.1) != Some(stage) {
                changes.push((t, stage));
            }
        }
    }

    let mut intervals: Vec<StageInterval> = Vec::new();
    for (i, &(start, stage)) in changes.iter().enumerate() {
        let stop = changes.get(i + 1).map_or(end, |c| c.0);
        if stop <= start {
            continue;
        }
        match intervals.last_mut() {
            Some(last) if last.stage == stage => last.end = stop,
            _ => intervals.push(StageInterval {
                stage,
                start,
                end: stop,
            }),
        }
    }
    // Dropped empty intervals leave the first one starting late only when
    // every change landed on t0; anchor both ends to the trial window.
    if let Some(first) = intervals.first_mut() {
        first.start = t0;
    }
    if let Some(last) = intervals.last_mut() {
        last.end = end;
    }
    Ok(StageAnnotation { intervals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{SpatialPose, Wrench, WrenchFrame};
    use crate::metrics::{EffectorSnapshot, Event, LogHeader, Platform, Sample};
    use crate::tasks::{Outcome, OutcomeReason, Scenario};
    use nalgebra::DVector;
    use proptest::prelude::*;

    const DT: f64 = 0.01;

    fn log_for(
        kind: TaskKind,
        end: f64,
        position: impl Fn(f64) -> Vector3<f64>,
        force: impl Fn(f64) -> f64,
    ) -> TrialLog {
        let mut log = TrialLog::new(LogHeader {
            format_version: crate::metrics::LOG_FORMAT_VERSION,
            trial_id: "synthetic".into(),
            platform: Platform::Haptic,
            task: kind,
            scenario: kind.as_str().into(),
            coupling_profile: "haptic".into(),
            seed: 0,
            rate_hz: 1000.0,
            sample_period: DT,
            t0: 0.0,
        });
        let steps = (end / DT).round() as usize;
        for k in 0..=steps {
            let t = k as f64 * DT;
            let p = position(t);
            log.samples.push(Sample {
                t,
                q: DVector::zeros(7),
                dq: DVector::zeros(7),
                x: SpatialPose::from_xyz_rpy([p.x, p.y, p.z], [std::f64::consts::PI, 0.0, 0.0]),
                f_ext: Wrench::force(Vector3::new(0.0, 0.0, force(t)), WrenchFrame::Base),
                effector: EffectorSnapshot::default(),
            });
        }
        log.end_time = Some(end);
        log.outcome = Some(Outcome {
            success: true,
            reason: OutcomeReason::Completed,
            time_s: end,
            units_completed: 0,
            units_total: 0,
        });
        log
    }

    fn event(log: &mut TrialLog, t: f64, kind: EventKind) {
        log.events.push(Event { t, kind });
    }

    fn spans(a: &StageAnnotation) -> Vec<(Stage, f64, f64)> {
        a.intervals.iter().map(|i| (i.stage, i.start, i.end)).collect()
    }

    fn close(a: &StageAnnotation, expected: &[(Stage, f64, f64)], tol: f64) -> bool {
        a.intervals.len() == expected.len()
            && a.intervals
                .iter()
                .zip(expected)
                .all(|(i, e)| i.stage == e.0 && (i.start - e.1).abs() <= tol && (i.end - e.2).abs() <= tol)
    }

    #[test]
    fn unbolting_approach_then_spindle() {
        let spec = Scenario::for_task(TaskKind::Unbolting).task;
        let bolt = spec.target("bolt1").unwrap().position();
        // Closes from 0.3 m at 0.0625 m/s, crossing 0.05 m at t = 4 s.
        let mut log = log_for(
            TaskKind::Unbolting,
            13.0,
            |t| bolt + Vector3::new(0.0, 0.0, (0.3 - 0.0625 * t).max(0.01)),
            |_| 0.0,
        );
        event(&mut log, 9.0, EventKind::SpindleOn);
        event(&mut log, 12.0, EventKind::SpindleOff);
        let a = segment_stages(&log, &spec).unwrap();
        let expected = [
            (Stage::Coarse, 0.0, 4.0),
            (Stage::Fine, 4.0, 9.0),
            (Stage::Action, 9.0, 12.0),
            (Stage::Fine, 12.0, 13.0),
        ];
        assert!(close(&a, &expected, DT + 1e-9), "{:?}", spans(&a));
    }

    #[test]
    fn never_close_is_all_coarse() {
        let spec = Scenario::for_task(TaskKind::Unbolting).task;
        let log = log_for(TaskKind::Unbolting, 20.0, |_| Vector3::new(0.0, 0.4, 0.5), |_| 0.0);
        let a = segment_stages(&log, &spec).unwrap();
        assert_eq!(spans(&a), vec![(Stage::Coarse, 0.0, 20.0)]);
    }

    #[test]
    fn release_in_container_returns_to_coarse() {
        let spec = Scenario::for_task(TaskKind::CoverRemoval).task;
        let grasp_point = spec.target("cover").unwrap().position();
        let bin = spec.container.unwrap().center();
        let mut log = log_for(
            TaskKind::CoverRemoval,
            30.0,
            |t| {
                if t < 10.0 {
                    grasp_point + Vector3::new(0.0, 0.0, 0.3 * (1.0 - t / 10.0))
                } else {
                    bin
                }
            },
            |_| 0.0,
        );
        event(&mut log, 9.5, EventKind::GripClose { force: 60.0 });
        event(&mut log, 10.0, EventKind::Grasp { object: "cover".into() });
        event(
            &mut log,
            25.0,
            EventKind::Release {
                object: "cover".into(),
                in_container: true,
            },
        );
        let a = segment_stages(&log, &spec).unwrap();
        let tail: Vec<_> = spans(&a).into_iter().rev().take(2).collect();
        assert_eq!(tail, vec![(Stage::Coarse, 25.0, 30.0), (Stage::Place, 10.0, 25.0)]);
        assert_eq!(a.intervals[a.intervals.len() - 3].stage, Stage::Action);
    }

    #[test]
    fn sustained_force_starts_grasp_action() {
        let spec = Scenario::for_task(TaskKind::Sorting).task;
        let top = spec.target("module1").unwrap().position();
        let log = log_for(
            TaskKind::Sorting,
            6.0,
            |_| top,
            |t| {
                if (3.0..3.05).contains(&t) || t >= 4.0 {
                    10.0
                } else {
                    0.0
                }
            },
        );
        let a = segment_stages(&log, &spec).unwrap();
        // The 50 ms blip at 3 s is too short to count.
        assert_eq!(spans(&a), vec![(Stage::Fine, 0.0, 4.0), (Stage::Action, 4.0, 6.0)]);
    }

    #[test]
    fn missed_grasp_returns_to_alignment() {
        let spec = Scenario::for_task(TaskKind::BoltRemoval).task;
        let bolt = spec.target("bolt1").unwrap().position();
        let mut log = log_for(TaskKind::BoltRemoval, 5.0, |_| bolt, |_| 0.0);
        event(&mut log, 2.0, EventKind::GripClose { force: 50.0 });
        event(&mut log, 2.0, EventKind::GraspMissed { object: "bolt1".into() });
        event(&mut log, 3.0, EventKind::GripClose { force: 50.0 });
        event(&mut log, 3.5, EventKind::GraspMissed { object: "bolt1".into() });
        let a = segment_stages(&log, &spec).unwrap();
        assert_eq!(
            spans(&a),
            vec![
                (Stage::Fine, 0.0, 3.0),
                (Stage::Action, 3.0, 3.5),
                (Stage::Fine, 3.5, 5.0)
            ]
        );
    }

    #[test]
    fn loosened_bolts_stop_being_targets() {
        let spec = Scenario::for_task(TaskKind::Unbolting).task;
        let bolt = spec.target("bolt1").unwrap().position();
        let mut log = log_for(TaskKind::Unbolting, 4.0, |_| bolt, |_| 0.0);
        event(&mut log, 1.0, EventKind::SpindleOn);
        event(&mut log, 2.0, EventKind::BoltLoosened { bolt: "bolt1".into() });
        event(&mut log, 2.5, EventKind::SpindleOff);
        let a = segment_stages(&log, &spec).unwrap();
        assert_eq!(
            spans(&a),
            vec![
                (Stage::Fine, 0.0, 1.0),
                (Stage::Action, 1.0, 2.5),
                (Stage::Coarse, 2.5, 4.0)
            ]
        );
    }

    #[test]
    fn cutting_measures_distance_to_the_path() {
        let spec = Scenario::for_task(TaskKind::Cutting).task;
        let log = log_for(
            TaskKind::Cutting,
            2.0,
            |t| Vector3::new(0.5 + 0.1 * t, 0.03, 0.15),
            |_| 0.0,
        );
        let a = segment_stages(&log, &spec).unwrap();
        // Lateral 0.1 m/s off a path along y: 0.05 m from the line at 0.5 s.
        assert!(
            close(&a, &[(Stage::Fine, 0.0, 0.5), (Stage::Coarse, 0.5, 2.0)], DT + 1e-9),
            "{:?}",
            spans(&a)
        );
    }

    #[test]
    fn contract_checks() {
        let spec = Scenario::for_task(TaskKind::Unbolting).task;
        let mut log = log_for(TaskKind::Unbolting, 1.0, |_| Vector3::zeros(), |_| 0.0);
        let mut empty = spec.clone();
        empty.targets.clear();
        assert!(matches!(segment_stages(&log, &empty), Err(MetricsError::Config(_))));
        let other = Scenario::for_task(TaskKind::Cutting).task;
        assert!(matches!(segment_stages(&log, &other), Err(MetricsError::Config(_))));
        log.end_time = None;
        assert!(segment_stages(&log, &spec).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn intervals_partition_the_trial(
            kind_idx in 0usize..5,
            end in 1.0..8.0f64,
            raw_events in prop::collection::vec((0.0..1.0f64, 0usize..9), 0..12),
            wobble in 0.0..0.2f64,
        ) {
            let kind = TaskKind::ALL[kind_idx];
            let spec = Scenario::for_task(kind).task;
            let target = spec.targets[0].position();
            let mut log = log_for(kind, end, |t| target + Vector3::new(wobble * (3.0 * t).sin(), 0.0, 0.02), |t| 5.0 * (t * 2.0).sin().max(0.0));
            let id = spec.targets[0].id.clone();
            let mut raw = raw_events;
            raw.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (frac, which) in raw {
                let kind = match which {
                    0 => EventKind::SpindleOn,
                    1 => EventKind::SpindleOff,
                    2 => EventKind::GripClose { force: 50.0 },
                    3 => EventKind::Grasp { object: id.clone() },
                    4 => EventKind::GraspMissed { object: id.clone() },
                    5 => EventKind::Release { object: id.clone(), in_container: true },
                    6 => EventKind::SuctionOn,
                    7 => EventKind::BoltLoosened { bolt: id.clone() },
                    _ => EventKind::Detach { object: id.clone(), in_container: false },
                };
                event(&mut log, frac * end, kind);
            }
            let a = segment_stages(&log, &spec).unwrap();
            prop_assert_eq!(a.intervals.first().unwrap().start, 0.0);
            prop_assert_eq!(a.intervals.last().unwrap().end, end);
            for w in a.intervals.windows(2) {
                prop_assert_eq!(w[0].end, w[1].start);
                prop_assert!(w[0].stage != w[1].stage);
            }
            let total: f64 = a.intervals.iter().map(StageInterval::duration).sum();
            prop_assert!((total - end).abs() < 1e-9);
            if !kind.is_pick_and_place() {
                prop_assert!(a.intervals.iter().all(|i| i.stage != Stage::Place));
            }
        }
    }
}
