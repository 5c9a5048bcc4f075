//! Fixed-rate simulation of one trial.
//!
//! Each control period `k` (t = k / rate):
//! 1. the scene is stepped at the current slave pose, giving `F_ext` and events;
//! 2. a sample is logged every `rate / sample_rate` periods;
//! 3. failure events, completion or the time limit end the trial;
//! 4. operator input is applied and the slave is integrated to `k + 1`.

use nalgebra::{DVector, Vector3, Vector6};

use super::protocol::{CommandPayload, Feedback, MasterCommand, SlaveFrame};
use super::GatewayError;
use crate::coupling::{
    cartesian_impedance_with_terms, joint_impedance_with_terms, map_feedback_force, master_feedback_torques,
    CartesianTarget, CouplingConfig, CouplingMode, TorqueFilter,
};
use crate::dynamics::{step_with_terms, DynamicsTerms, JointState, LimitKind, ManipulatorModel, Wrench, WrenchFrame};
use crate::metrics::{
    EffectorSnapshot, Event, EventKind, LogHeader, Platform, Sample, Stage, TrialLog, LOG_FORMAT_VERSION,
};
use crate::tasks::{evaluate_outcome, failure_reason, Outcome, Scenario, TaskKind, WorldState};

/// What an operator produced for one control period.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorInput {
    Command(MasterCommand),
    /// Nothing new this period.
    Idle,
    /// The operator is done; the trial ends and is judged as is.
    Finished,
    /// The operator went away; the trial is aborted.
    Closed,
}

/// Anything that turns slave frames into master commands.
pub trait CommandSource {
    fn next(&mut self, frame: &SlaveFrame) -> OperatorInput;
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rate_hz: f64,
    /// Rate of logged samples; must divide `rate_hz`.
    pub sample_rate_hz: f64,
    /// Trials still running after this long end as incomplete, s.
    pub max_duration: f64,
    pub seed: u64,
    pub trial_id: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rate_hz: 1000.0,
            sample_rate_hz: 100.0,
            max_duration: 600.0,
            seed: 0,
            trial_id: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(100.0..=2000.0).contains(&self.rate_hz) {
            return Err(GatewayError::Config(format!(
                "rate must be within 100..=2000 Hz, got {}",
                self.rate_hz
            )));
        }
        let ratio = self.rate_hz / self.sample_rate_hz;
        if !(self.sample_rate_hz > 0.0 && ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9) {
            return Err(GatewayError::Config(format!(
                "sample rate {} must divide the control rate {}",
                self.sample_rate_hz, self.rate_hz
            )));
        }
        if !(self.max_duration > 0.0 && self.max_duration.is_finite()) {
            return Err(GatewayError::Config("max_duration must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepStatus {
    Running,
    Ended(Outcome),
}

/// One trial in progress.
pub struct Session {
    scenario: Scenario,
    coupling: CouplingConfig,
    model: ManipulatorModel,
    master_model: ManipulatorModel,
    state: JointState,
    /// Twin master state in joint mode.
    master: JointState,
    target: CartesianTarget,
    world: WorldState,
    log: TrialLog,
    rate_hz: f64,
    dt: f64,
    decimation: u64,
    max_steps: u64,
    k: u64,
    terms: DynamicsTerms,
    f_ext: Wrench,
    feedback: Feedback,
    filter: Option<TorqueFilter>,
    last_seq: u64,
    last_input: f64,
    stale: bool,
    limits_active: Vec<[bool; 2]>,
    commands_dropped: u64,
    outcome: Option<Outcome>,
    observed: bool,
}

impl Session {
    pub fn new(scenario: &Scenario, coupling: &CouplingConfig, config: &RunConfig) -> Result<Self, GatewayError> {
        config.validate()?;
        scenario.validate()?;
        coupling.validate()?;
        let model = ManipulatorModel::default_slave();
        let q0 = scenario.home_vector();
        if q0.len() != model.dof() {
            return Err(GatewayError::Config(format!(
                "scenario home has {} joints, the slave has {}",
                q0.len(),
                model.dof()
            )));
        }
        let state = JointState::at_rest(q0.clone());
        let terms = DynamicsTerms::compute(&model, &state)?;
        let platform = match coupling.mode {
            CouplingMode::Cartesian => Platform::Haptic,
            CouplingMode::Joint => Platform::Twin,
        };
        let header = LogHeader {
            format_version: LOG_FORMAT_VERSION,
            trial_id: config
                .trial_id
                .clone()
                .unwrap_or_else(|| format!("{}-{}-{}", scenario.name, platform, config.seed)),
            platform,
            task: scenario.task.kind,
            scenario: scenario.name.clone(),
            coupling_profile: coupling.profile.clone(),
            seed: config.seed,
            rate_hz: config.rate_hz,
            sample_period: 1.0 / config.sample_rate_hz,
            t0: 0.0,
        };
        let dt = 1.0 / config.rate_hz;
        let feedback = match coupling.mode {
            CouplingMode::Cartesian => Feedback::Force(Wrench::zero(WrenchFrame::Base)),
            CouplingMode::Joint => Feedback::Torques(DVector::zeros(model.dof())),
        };
        Ok(Self {
            target: CartesianTarget::new(terms.frames.ee, 0.0),
            world: WorldState::new(scenario, model.gravity),
            log: TrialLog::new(header),
            master: state.clone(),
            master_model: model.clone(),
            limits_active: vec![[false; 2]; model.dof()],
            filter: coupling.feedback_filter_hz.map(|hz| TorqueFilter::new(hz, dt)),
            decimation: (config.rate_hz / config.sample_rate_hz).round() as u64,
            max_steps: (config.max_duration * config.rate_hz).round() as u64,
            rate_hz: config.rate_hz,
            dt,
            k: 0,
            terms,
            f_ext: Wrench::zero(WrenchFrame::Base),
            feedback,
            last_seq: 0,
            last_input: 0.0,
            stale: false,
            commands_dropped: 0,
            outcome: None,
            observed: false,
            scenario: scenario.clone(),
            coupling: coupling.clone(),
            model,
            state,
        })
    }

    pub fn mode(&self) -> CouplingMode {
        self.coupling.mode
    }

    pub fn coupling(&self) -> &CouplingConfig {
        &self.coupling
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn log(&self) -> &TrialLog {
        &self.log
    }

    pub fn time(&self) -> f64 {
        self.k as f64 / self.rate_hz
    }

    pub fn outcome(&self) -> Option<&Outcome> {
        self.outcome.as_ref()
    }

    pub fn commands_dropped(&self) -> u64 {
        self.commands_dropped
    }

    fn push_event(&mut self, kind: EventKind) {
        let t = self.time();
        self.log.events.push(Event { t, kind });
    }

    fn end(&mut self) -> Result<StepStatus, GatewayError> {
        if let Some(o) = &self.outcome {
            return Ok(StepStatus::Ended(o.clone()));
        }
        self.log.end_time = Some(self.time());
        let outcome = evaluate_outcome(&self.world, &self.scenario.task, &self.log)?;
        self.log.outcome = Some(outcome.clone());
        self.outcome = Some(outcome.clone());
        Ok(StepStatus::Ended(outcome))
    }

    /// Steps the scene at the current slave pose and logs what happened.
    /// Must precede [`Session::apply_command`] and [`Session::integrate`]
    /// in every period.
    pub fn observe(&mut self) -> Result<StepStatus, GatewayError> {
        if self.outcome.is_some() {
            return self.end();
        }
        let ee = self.terms.frames.ee;
        let twist = &self.terms.jacobian * &self.state.dq;
        let twist = Vector6::from_iterator(twist.iter().copied());
        let step = self.world.step(&ee, &twist, self.dt);
        self.f_ext = step.wrench;
        let mut failed = false;
        for kind in step.events {
            failed |= failure_reason(&kind).is_some();
            self.push_event(kind);
        }
        self.feedback = self.compute_feedback()?;
        if self.k.is_multiple_of(self.decimation) {
            self.log.samples.push(self.sample());
        }
        self.observed = true;
        if failed || self.world.is_complete() || self.k >= self.max_steps {
            return self.end();
        }
        Ok(StepStatus::Running)
    }

    fn sample(&self) -> Sample {
        let eff = &self.world.effector;
        Sample {
            t: self.time(),
            q: self.state.q.clone(),
            dq: self.state.dq.clone(),
            x: self.terms.frames.ee,
            f_ext: self.f_ext,
            effector: EffectorSnapshot {
                grip_closed: eff.grip.is_some(),
                suction_on: eff.suction_on,
                spindle_on: eff.spindle_on,
                attached: eff.attached.clone(),
            },
        }
    }

    fn compute_feedback(&mut self) -> Result<Feedback, GatewayError> {
        Ok(match self.coupling.mode {
            CouplingMode::Cartesian => Feedback::Force(map_feedback_force(&self.coupling, &self.f_ext)?.wrench),
            CouplingMode::Joint => {
                let wrench = DVector::from_column_slice(self.f_ext.to_vector().as_slice());
                let tau_ext = self.terms.jacobian.transpose() * wrench;
                let tau_ext = match &mut self.filter {
                    Some(f) => f.apply(&tau_ext),
                    None => tau_ext,
                };
                Feedback::Torques(
                    master_feedback_torques(&self.master_model, &tau_ext, &self.master, &self.coupling)?.tau,
                )
            }
        })
    }

    /// Coarse stage estimate for display.
    fn live_stage(&self) -> Stage {
        let eff = &self.world.effector;
        if eff.attached.is_some() {
            return Stage::Place;
        }
        if eff.spindle_on || eff.grip.is_some() || eff.suction_attempt.is_some() {
            return Stage::Action;
        }
        let tip = self.terms.frames.ee.translation;
        let spec = &self.world.spec;
        let distance = match &self.world.cut {
            Some(cut) => crate::tasks::distance_to_path(&cut.path, &tip),
            None => spec
                .targets
                .iter()
                .filter(|t| match spec.kind {
                    TaskKind::Unbolting => self.world.fastener(&t.id).is_ok_and(|f| f.threads_remaining > 0.0),
                    _ => self.world.object(&t.id).is_ok_and(|o| !o.deposited),
                })
                .map(|t| (t.position() - tip).norm())
                .fold(f64::INFINITY, f64::min),
        };
        if distance <= crate::metrics::SegmentParams::default().fine_radius {
            Stage::Fine
        } else {
            Stage::Coarse
        }
    }

    /// The slave state streamed to the operator for the current period.
    pub fn frame(&self) -> SlaveFrame {
        SlaveFrame {
            seq: self.k,
            t: self.time(),
            q: self.state.q.clone(),
            dq: self.state.dq.clone(),
            x: self.terms.frames.ee,
            f_ext: self.f_ext,
            feedback: self.feedback.clone(),
            world: self.world.summary(),
            stage: self.live_stage(),
        }
    }

    /// Applies one master command. Out-of-order commands are dropped and
    /// logged; a payload for the other coupling mode is an error.
    pub fn apply_command(&mut self, cmd: &MasterCommand) -> Result<(), GatewayError> {
        cmd.check_mode(self.coupling.mode)?;
        if cmd.seq <= self.last_seq {
            self.commands_dropped += 1;
            self.push_event(EventKind::CommandDropped { seq: cmd.seq });
            return Ok(());
        }
        self.last_seq = cmd.seq;
        let t = self.time();
        match &cmd.payload {
            CommandPayload::Cartesian { delta_pose, clutch } => {
                if *clutch {
                    self.target.apply(&self.coupling, delta_pose, t)?;
                } else {
                    self.target.last_input = t;
                }
            }
            CommandPayload::Joint { q_l, dq_l } => {
                let n = self.model.dof();
                if q_l.len() != n || dq_l.len() != n {
                    return Err(GatewayError::Protocol(format!("joint command needs {n} values")));
                }
                if !(q_l.iter().chain(dq_l.iter()).all(|v| v.is_finite())) {
                    return Err(GatewayError::Protocol("non-finite joint command".into()));
                }
                self.master.q = q_l.clone();
                self.master.dq = dq_l.clone();
            }
        }
        self.last_input = t;
        if self.stale {
            self.stale = false;
            self.push_event(EventKind::InputResumed);
        }
        if let Some(effector) = &cmd.effector {
            let ee = self.terms.frames.ee;
            for kind in self.world.apply_command(effector, &ee) {
                self.push_event(kind);
            }
        }
        Ok(())
    }

    /// Ends the trial because the operator is done.
    pub fn finish_operator(&mut self) -> Result<StepStatus, GatewayError> {
        if self.outcome.is_none() {
            self.push_event(EventKind::OperatorFinished);
        }
        self.end()
    }

    pub fn abort(&mut self, reason: &str) -> Result<StepStatus, GatewayError> {
        if self.outcome.is_none() {
            self.push_event(EventKind::Aborted {
                reason: reason.to_string(),
            });
        }
        self.end()
    }

    /// Runs the coupling law and integrates the slave to the next period.
    pub fn integrate(&mut self) -> Result<StepStatus, GatewayError> {
        if let Some(o) = &self.outcome {
            return Ok(StepStatus::Ended(o.clone()));
        }
        if !self.observed {
            return Err(GatewayError::Protocol("integrate called before observe".into()));
        }
        let t = self.time();
        if !self.stale && t - self.last_input > self.coupling.stale_timeout {
            self.stale = true;
            self.push_event(EventKind::StaleInput);
            self.master.dq.fill(0.0);
        }
        let tau = match self.coupling.mode {
            CouplingMode::Cartesian => {
                cartesian_impedance_with_terms(&self.terms, &self.state, &self.target.target, &self.coupling)?
            }
            CouplingMode::Joint => joint_impedance_with_terms(&self.terms, &self.state, &self.master, &self.coupling)?,
        };
        let out = step_with_terms(&self.model, &self.state, &self.terms, &tau, &self.f_ext, self.dt)?;
        let mut now = vec![[false; 2]; self.model.dof()];
        for v in &out.violations {
            let slot = match v.kind {
                LimitKind::Position => 0,
                LimitKind::Velocity => 1,
            };
            now[v.joint][slot] = true;
            if !self.limits_active[v.joint][slot] {
                self.push_event(EventKind::LimitViolation {
                    joint: v.joint,
                    kind: v.kind,
                    value: v.value,
                });
            }
        }
        self.limits_active = now;
        self.state = out.state;
        self.terms = DynamicsTerms::compute(&self.model, &self.state)?;
        self.k += 1;
        self.observed = false;
        Ok(StepStatus::Running)
    }

    /// One full period driven by `source`.
    pub fn step(&mut self, source: &mut dyn CommandSource) -> Result<StepStatus, GatewayError> {
        if let StepStatus::Ended(o) = self.observe()? {
            return Ok(StepStatus::Ended(o));
        }
        match source.next(&self.frame()) {
            OperatorInput::Command(cmd) => self.apply_command(&cmd)?,
            OperatorInput::Idle => {}
            OperatorInput::Finished => return self.finish_operator(),
            OperatorInput::Closed => return self.abort("operator source closed"),
        }
        self.integrate()
    }

    pub fn into_log(self) -> TrialLog {
        self.log
    }

    /// Tool tip position for the current period.
    pub fn tool_position(&self) -> Vector3<f64> {
        self.terms.frames.ee.translation
    }
}

/// Runs a trial to its end with the given operator and returns the log.
pub fn run_trial(
    scenario: &Scenario,
    coupling: &CouplingConfig,
    config: &RunConfig,
    source: &mut dyn CommandSource,
) -> Result<TrialLog, GatewayError> {
    let mut session = Session::new(scenario, coupling, config)?;
    while let StepStatus::Running = session.step(source)? {}
    Ok(session.into_log())
}
