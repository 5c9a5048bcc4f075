//! Per-task comparison of the two platforms.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::stats::{completion_stats, percent_reduction, smd, CompletionStats, DispersionMode};
use super::{MetricsError, Platform, TrialLog};
use crate::tasks::TaskKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSummary {
    pub trials: usize,
    pub successes: usize,
    pub units_completed: u32,
    pub units_total: u32,
    /// Completed units over attempted units, %.
    pub success_rate: f64,
    /// Statistics over the completion times of successful trials.
    pub stats: CompletionStats,
    /// Set when no trial succeeded and `stats` covers attempted durations.
    pub from_failed_trials: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task: TaskKind,
    pub haptic: Option<PlatformSummary>,
    pub twin: Option<PlatformSummary>,
    /// Present when both platforms have data and a nonzero spread.
    pub smd: Option<f64>,
    pub percent_reduction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dispersion_mode: DispersionMode,
    pub tasks: Vec<TaskReport>,
}

fn summarize(trials: &[&TrialLog]) -> Result<PlatformSummary, MetricsError> {
    let mut units_completed = 0;
    let mut units_total = 0;
    let mut success_times = Vec::new();
    let mut all_times = Vec::new();
    for log in trials {
        let outcome = log
            .outcome
            .as_ref()
            .ok_or_else(|| MetricsError::ContractViolation(format!("trial {} has not ended", log.header.trial_id)))?;
        units_completed += outcome.units_completed;
        units_total += outcome.units_total;
        all_times.push(outcome.time_s);
        if outcome.success {
            success_times.push(outcome.time_s);
        }
    }
    let from_failed_trials = success_times.is_empty();
    let stats = completion_stats(if from_failed_trials { &all_times } else { &success_times })?;
    let success_rate = if units_total > 0 {
        100.0 * units_completed as f64 / units_total as f64
    } else {
        0.0
    };
    Ok(PlatformSummary {
        trials: trials.len(),
        successes: success_times.len(),
        units_completed,
        units_total,
        success_rate,
        stats,
        from_failed_trials,
    })
}

/// Groups ended trials by task and platform and compares the platforms.
pub fn build_report(trials: &[TrialLog], mode: DispersionMode) -> Result<MetricsReport, MetricsError> {
    if trials.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut groups: BTreeMap<usize, (Vec<&TrialLog>, Vec<&TrialLog>)> = BTreeMap::new();
    for log in trials {
        let idx = TaskKind::ALL
            .iter()
            .position(|k| *k == log.header.task)
            .unwrap_or(usize::MAX);
        let entry = groups.entry(idx).or_default();
        match log.header.platform {
            Platform::Haptic => entry.0.push(log),
            Platform::Twin => entry.1.push(log),
        }
    }
    let mut tasks = Vec::with_capacity(groups.len());
    for (idx, (haptic, twin)) in groups {
        let haptic = (!haptic.is_empty()).then(|| summarize(&haptic)).transpose()?;
        let twin = (!twin.is_empty()).then(|| summarize(&twin)).transpose()?;
        let (smd_value, reduction) = match (&haptic, &twin) {
            (Some(h), Some(f)) => (
                smd(&h.stats, &f.stats, mode).ok(),
                percent_reduction(h.stats.mean, f.stats.mean).ok(),
            ),
            _ => (None, None),
        };
        tasks.push(TaskReport {
            task: TaskKind::ALL[idx],
            haptic,
            twin,
            smd: smd_value,
            percent_reduction: reduction,
        });
    }
    Ok(MetricsReport {
        dispersion_mode: mode,
        tasks,
    })
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, MetricsError> {
        serde_json::from_str(text).map_err(|e| MetricsError::Parse(e.to_string()))
    }

    /// Plain-text table: success rate and mean ± dispersion per platform,
    /// then the effect size and time reduction.
    pub fn to_table(&self) -> String {
        let spread = |s: &CompletionStats| match self.dispersion_mode {
            DispersionMode::Std => s.std,
            DispersionMode::SemTimesSqrtN => s.sem,
        };
        let side = |p: &Option<PlatformSummary>| match p {
            Some(p) => {
                let flag = if p.from_failed_trials { "*" } else { "" };
                (
                    format!("{:.0}", p.success_rate),
                    format!("{:.0}±{:.0}{flag}", p.stats.mean, spread(&p.stats)),
                )
            }
            None => ("-".into(), "-".into()),
        };
        let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |v| format!("{v:.prec$}"));

        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<28} {:>9} {:>12} {:>9} {:>12} {:>6} {:>10}",
            "Task", "Haptic %", "Haptic [s]", "Twin %", "Twin [s]", "SMD", "Reduction"
        );
        for t in &self.tasks {
            let (hs, ht) = side(&t.haptic);
            let (fs, ft) = side(&t.twin);
            let reduction = t.percent_reduction.map_or("-".to_string(), |r| format!("{r:.1}%"));
            let _ = writeln!(
                out,
                "{:<28} {:>9} {:>12} {:>9} {:>12} {:>6} {:>10}",
                t.task.label(),
                hs,
                ht,
                fs,
                ft,
                opt(t.smd, 2),
                reduction
            );
        }
        let _ = writeln!(
            out,
            "± is {}",
            match self.dispersion_mode {
                DispersionMode::Std => "the standard deviation",
                DispersionMode::SemTimesSqrtN => "the standard error",
            }
        );
        if self
            .tasks
            .iter()
            .flat_map(|t| [&t.haptic, &t.twin])
            .flatten()
            .any(|p| p.from_failed_trials)
        {
            let _ = writeln!(out, "* no successful trial; times are attempted durations");
        }
        out
    }
}
