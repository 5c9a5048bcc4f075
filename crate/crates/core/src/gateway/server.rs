//! WebSocket front end for one operator client at a time.
//!
//! An I/O thread owns the socket and forwards inbound text records to the
//! control loop. The loop runs the session at its fixed rate, paced to the
//! wall clock, and streams frames through a bounded queue; frames that do
//! not fit are dropped and counted rather than stalling the loop.

use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender, TryRecvError, TrySendError};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use tungstenite::{Message, WebSocket};

use super::protocol::{
    decode, encode, ClientMessage, ControlRequest, FkParams, SceneInfo, ServerHello, ServerMessage, TrialSummary,
    PROTOCOL_VERSION,
};
use super::record::record_log;
use super::runtime::{RunConfig, Session, StepStatus};
use super::GatewayError;
use crate::coupling::{CouplingConfig, CouplingMode};
use crate::dynamics::ManipulatorModel;
use crate::tasks::{Outcome, Scenario};

const OUTBOUND_CAPACITY: usize = 64;
const READ_TIMEOUT: Duration = Duration::from_millis(1);
const IDLE_POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone)]
pub struct ServeConfig {
    /// Scenario used when a start request names none.
    pub scenario: Scenario,
    pub coupling: CouplingConfig,
    pub run: RunConfig,
    pub frame_rate_hz: f64,
    /// Where trial logs are written; none keeps them in memory only.
    pub out_dir: Option<PathBuf>,
    /// Extra directory searched for scenario and profile files.
    pub config_dir: Option<PathBuf>,
}

impl ServeConfig {
    pub fn new(scenario: Scenario, coupling: CouplingConfig) -> Self {
        Self {
            scenario,
            coupling,
            run: RunConfig::default(),
            frame_rate_hz: 50.0,
            out_dir: None,
            config_dir: None,
        }
    }
}

pub struct Server {
    listener: TcpListener,
    config: ServeConfig,
}

impl Server {
    pub fn bind(addr: impl ToSocketAddrs, config: ServeConfig) -> Result<Self, GatewayError> {
        config.run.validate()?;
        if !(config.frame_rate_hz > 0.0 && config.frame_rate_hz <= config.run.rate_hz) {
            return Err(GatewayError::Config(format!(
                "frame rate must be within (0, {}] Hz",
                config.run.rate_hz
            )));
        }
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            config,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, GatewayError> {
        Ok(self.listener.local_addr()?)
    }

    /// Serves clients one after another until accepting fails.
    pub fn run(&self) -> Result<(), GatewayError> {
        loop {
            let (stream, _) = self.listener.accept()?;
            match self.serve_stream(stream) {
                Ok(trials) => log::info!("client finished after {} trial(s)", trials.len()),
                Err(e) => log::warn!("client session failed: {e}"),
            }
        }
    }

    /// Accepts one client and serves it until it disconnects.
    pub fn run_once(&self) -> Result<Vec<TrialSummary>, GatewayError> {
        let (stream, _) = self.listener.accept()?;
        self.serve_stream(stream)
    }

    fn serve_stream(&self, stream: TcpStream) -> Result<Vec<TrialSummary>, GatewayError> {
        if let Ok(peer) = stream.peer_addr() {
            log::info!("client connected from {peer}");
        }
        let ws = tungstenite::accept(stream).map_err(|e| GatewayError::Protocol(format!("handshake: {e}")))?;
        ws.get_ref().set_read_timeout(Some(READ_TIMEOUT))?;
        ws.get_ref().set_nodelay(true)?;
        let (in_tx, in_rx) = mpsc::channel();
        let (out_tx, out_rx) = mpsc::sync_channel(OUTBOUND_CAPACITY);
        let io = thread::spawn(move || io_loop(ws, in_tx, out_rx));
        let result = Connection::new(&self.config, in_rx, out_tx).serve();
        let _ = io.join();
        result
    }
}

fn io_loop(mut ws: WebSocket<TcpStream>, inbound: mpsc::Sender<String>, outbound: Receiver<Message>) {
    loop {
        loop {
            match outbound.try_recv() {
                Ok(msg) => {
                    if ws.send(msg).is_err() {
                        return;
                    }
                }
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    let _ = ws.close(None);
                    let _ = ws.flush();
                    return;
                }
            }
        }
        match ws.read() {
            Ok(Message::Text(text)) => {
                if inbound.send(text.as_str().to_owned()).is_err() {
                    return;
                }
            }
            Ok(Message::Close(_)) => return,
            Ok(_) => {}
            Err(tungstenite::Error::Io(e))
                if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(_) => return,
        }
    }
}

struct Connection<'a> {
    config: &'a ServeConfig,
    coupling: CouplingConfig,
    inbound: Receiver<String>,
    outbound: SyncSender<Message>,
    trials: Vec<TrialSummary>,
    writers: Vec<JoinHandle<Result<(), GatewayError>>>,
}

impl<'a> Connection<'a> {
    fn new(config: &'a ServeConfig, inbound: Receiver<String>, outbound: SyncSender<Message>) -> Self {
        Self {
            coupling: config.coupling.clone(),
            config,
            inbound,
            outbound,
            trials: Vec::new(),
            writers: Vec::new(),
        }
    }

    /// Queues a record that must arrive; blocks while the queue is full.
    fn send(&self, msg: &ServerMessage) -> bool {
        let text = String::from_utf8(encode(msg)).expect("JSON is UTF-8");
        self.outbound.send(Message::Text(text.trim_end().into())).is_ok()
    }

    fn hello(&self, scenario: &Scenario) -> ServerMessage {
        let master = match self.coupling.mode {
            CouplingMode::Cartesian => ManipulatorModel::default_master(),
            CouplingMode::Joint => ManipulatorModel::default_slave(),
        };
        ServerMessage::Hello(ServerHello {
            protocol_version: PROTOCOL_VERSION,
            mode: self.coupling.mode,
            profile: self.coupling.profile.clone(),
            rate_hz: self.config.run.rate_hz,
            frame_rate_hz: self.config.frame_rate_hz,
            slave: FkParams::of(&ManipulatorModel::default_slave()),
            master: FkParams::of(&master),
            scene: SceneInfo::of(scenario),
        })
    }

    fn nack(&self, req: &ControlRequest, reason: &str) {
        self.send(&ServerMessage::Nack {
            action: req.name().into(),
            reason: reason.into(),
        });
    }

    fn serve(mut self) -> Result<Vec<TrialSummary>, GatewayError> {
        let mut scenario = self.config.scenario.clone();
        if !self.send(&self.hello(&scenario)) {
            return Ok(self.trials);
        }
        loop {
            let text = match self.inbound.recv_timeout(IDLE_POLL) {
                Ok(text) => text,
                Err(RecvTimeoutError::Timeout) => continue,
                Err(RecvTimeoutError::Disconnected) => break,
            };
            let msg = match decode::<ClientMessage>(text.as_bytes()) {
                Ok(m) => m,
                Err(e) => {
                    self.send(&ServerMessage::Error { message: e.to_string() });
                    continue;
                }
            };
            match msg {
                ClientMessage::Hello { protocol_version, .. } => {
                    if protocol_version != PROTOCOL_VERSION {
                        self.send(&ServerMessage::Error {
                            message: format!("protocol version {protocol_version} is not supported (server speaks {PROTOCOL_VERSION})"),
                        });
                    }
                }
                ClientMessage::Command(_) => {
                    self.send(&ServerMessage::Error {
                        message: "no trial running".into(),
                    });
                }
                ClientMessage::Control(req) => match &req {
                    ControlRequest::Abort => self.nack(&req, "no trial running"),
                    ControlRequest::SwitchProfile { profile } => {
                        match CouplingConfig::resolve(profile, self.config.config_dir.as_deref()) {
                            Ok(c) => {
                                self.coupling = c;
                                self.send(&ServerMessage::Ack {
                                    action: req.name().into(),
                                });
                                self.send(&self.hello(&scenario));
                            }
                            Err(e) => self.nack(&req, &e.to_string()),
                        }
                    }
                    ControlRequest::Start { scenario: name, seed } => {
                        if let Some(name) = name {
                            match Scenario::resolve(name, self.config.config_dir.as_deref()) {
                                Ok(s) => scenario = s,
                                Err(e) => {
                                    self.nack(&req, &e.to_string());
                                    continue;
                                }
                            }
                        }
                        let mut run = self.config.run.clone();
                        run.seed = seed.unwrap_or(run.seed);
                        let platform = match self.coupling.mode {
                            CouplingMode::Cartesian => "haptic",
                            CouplingMode::Joint => "twin",
                        };
                        run.trial_id = Some(format!(
                            "{}-{platform}-{}-{}",
                            scenario.name,
                            run.seed,
                            self.trials.len() + 1
                        ));
                        let session = match Session::new(&scenario, &self.coupling, &run) {
                            Ok(s) => s,
                            Err(e) => {
                                self.nack(&req, &e.to_string());
                                continue;
                            }
                        };
                        self.send(&ServerMessage::Ack {
                            action: req.name().into(),
                        });
                        if !self.run_trial(session)? {
                            break;
                        }
                    }
                },
            }
        }
        for w in self.writers.drain(..) {
            match w.join() {
                Ok(Err(e)) => log::warn!("writing a trial log failed: {e}"),
                Err(_) => log::warn!("log writer panicked"),
                Ok(Ok(())) => {}
            }
        }
        Ok(self.trials)
    }

    /// Runs one trial; returns whether the client is still connected.
    fn run_trial(&mut self, mut session: Session) -> Result<bool, GatewayError> {
        let dt = Duration::from_secs_f64(1.0 / self.config.run.rate_hz);
        let frame_every = (self.config.run.rate_hz / self.config.frame_rate_hz).round().max(1.0) as u64;
        let start = Instant::now();
        let mut frames_dropped = 0u64;
        let mut connected = true;
        let mut k = 0u64;
        let outcome: Outcome = loop {
            if let Some(wait) = (start + dt * k as u32).checked_duration_since(Instant::now()) {
                thread::sleep(wait);
            }
            if let StepStatus::Ended(o) = session.observe()? {
                break o;
            }
            let mut ended = None;
            loop {
                match self.inbound.try_recv() {
                    Ok(text) => match decode::<ClientMessage>(text.as_bytes()) {
                        Ok(ClientMessage::Command(cmd)) => {
                            if let Err(e) = session.apply_command(&cmd) {
                                self.send(&ServerMessage::Error { message: e.to_string() });
                            }
                        }
                        Ok(ClientMessage::Control(req @ ControlRequest::Abort)) => {
                            self.send(&ServerMessage::Ack {
                                action: req.name().into(),
                            });
                            if let StepStatus::Ended(o) = session.abort("aborted by operator")? {
                                ended = Some(o);
                                break;
                            }
                        }
                        Ok(ClientMessage::Control(req)) => self.nack(&req, "trial running"),
                        Ok(ClientMessage::Hello { .. }) => {}
                        Err(e) => {
                            self.send(&ServerMessage::Error { message: e.to_string() });
                        }
                    },
                    Err(TryRecvError::Empty) => break,
                    Err(TryRecvError::Disconnected) => {
                        connected = false;
                        if let StepStatus::Ended(o) = session.abort("operator disconnected")? {
                            ended = Some(o);
                        }
                        break;
                    }
                }
            }
            if let Some(o) = ended {
                break o;
            }
            if k.is_multiple_of(frame_every) {
                let text = String::from_utf8(encode(&ServerMessage::Frame(session.frame()))).expect("JSON is UTF-8");
                match self.outbound.try_send(Message::Text(text.trim_end().into())) {
                    Ok(()) => {}
                    Err(TrySendError::Full(_)) => frames_dropped += 1,
                    Err(TrySendError::Disconnected(_)) => connected = false,
                }
            }
            session.integrate()?;
            k += 1;
        };
        let commands_dropped = session.commands_dropped();
        let log = session.into_log();
        let trial_id = log.header.trial_id.clone();
        let log_path = self
            .config
            .out_dir
            .as_ref()
            .map(|dir| dir.join(format!("{}.ndjson", log.header.trial_id)));
        if let Some(path) = log_path.clone() {
            self.writers.push(thread::spawn(move || record_log(&log, path)));
        }
        let summary = TrialSummary {
            trial_id,
            outcome,
            frames_dropped,
            commands_dropped,
            log_path: log_path.map(|p| p.display().to_string()),
        };
        connected &= self.send(&ServerMessage::TrialEnd(summary.clone()));
        self.trials.push(summary);
        Ok(connected)
    }
}
