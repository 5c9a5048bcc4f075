use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use telesim_core::coupling::{CouplingConfig, BUNDLED_PROFILES};
use telesim_core::gateway::{
    record_log, replay_log, run_trial, CommandSource, IdleSource, RunConfig, Script, ScriptedOperator, ServeConfig,
    Server, BUNDLED_SCRIPTS,
};
use telesim_core::metrics::{build_report, segment_stages, DispersionMode, Stage, TrialLog};
use telesim_core::tasks::{Scenario, BUNDLED_SCENARIOS};

/// Bilateral teleoperation simulator for battery disassembly tasks.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Directory searched for scenario, coupling and script files.
    #[arg(long, global = true, env = "TELESIM_CONFIG_DIR")]
    config_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run trials headless with a scripted or remote operator.
    Run(RunArgs),
    /// Serve operator clients over WebSocket until interrupted.
    Serve(ServeArgs),
    /// Summarize recorded trial logs.
    Analyze(AnalyzeArgs),
    /// List bundled scenarios, coupling profiles and operator scripts.
    List,
}

#[derive(Args)]
struct Timing {
    /// Control rate, Hz.
    #[arg(long, default_value_t = 1000.0)]
    rate: f64,
    /// Log sample rate, Hz. Must divide the control rate.
    #[arg(long, default_value_t = 100.0)]
    sample_rate: f64,
    /// Trials stop after this many simulated seconds.
    #[arg(long, default_value_t = 600.0)]
    max_duration: f64,
}

impl Timing {
    fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            rate_hz: self.rate,
            sample_rate_hz: self.sample_rate,
            max_duration: self.max_duration,
            seed,
            trial_id: None,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Bundled scenario name or scenario file.
    #[arg(long)]
    scenario: String,
    /// Bundled coupling profile or profile file.
    #[arg(long, default_value = "haptic-cartesian")]
    coupling: String,
    /// Script name or file, `idle`, or `remote` to wait for a WebSocket
    /// client. Defaults to the bundled script named after the scenario.
    #[arg(long)]
    operator: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of trials, with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Log file for a single trial, or a directory when running several.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Address to listen on with `--operator remote`.
    #[arg(long, default_value = "127.0.0.1:8765")]
    listen: SocketAddr,
    #[command(flatten)]
    timing: Timing,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8765)]
    port: u16,
    /// Interface to bind.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Scenario loaded until a client starts another one.
    #[arg(long, default_value = "unbolting")]
    scenario: String,
    #[arg(long, default_value = "haptic-cartesian")]
    coupling: String,
    /// Frames streamed to the client per second.
    #[arg(long, default_value_t = 50.0)]
    frame_rate: f64,
    /// Where trial logs are written.
    #[arg(long, default_value = "logs")]
    out_dir: PathBuf,
    #[command(flatten)]
    timing: Timing,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Log files, or directories of `.ndjson` logs.
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// How reported dispersions become the effect-size σ: std or sem_times_sqrt_n.
    #[arg(long, default_value = "sem_times_sqrt_n")]
    dispersion_mode: DispersionMode,
    /// Also write the report as JSON.
    #[arg(long)]
    report_out: Option<PathBuf>,
    /// Print time spent in each stage per trial.
    #[arg(long)]
    stages: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let dir = cli.config_dir.as_deref();
    let result = match cli.command {
        Command::Run(args) => run(args, dir),
        Command::Serve(args) => serve(args, dir),
        Command::Analyze(args) => analyze(args, dir),
        Command::List => {
            list();
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn describe(log: &TrialLog) -> String {
    match &log.outcome {
        Some(o) => format!(
            "{}: {} after {:.2} s, {}/{} units",
            log.header.trial_id, o.reason, o.time_s, o.units_completed, o.units_total
        ),
        None => format!("{}: not ended", log.header.trial_id),
    }
}

fn run(args: RunArgs, dir: Option<&Path>) -> Result<()> {
    let scenario = Scenario::resolve(&args.scenario, dir)?;
    let coupling = CouplingConfig::resolve(&args.coupling, dir)?;
    let operator = args.operator.clone().unwrap_or_else(|| scenario.name.clone());
    if args.trials == 0 {
        bail!("--trials must be at least 1");
    }
    if operator == "remote" {
        return run_remote(&args, scenario, coupling, dir);
    }
    let script = match operator.as_str() {
        "idle" => None,
        name => Some(Script::resolve(name, dir).with_context(|| format!("loading operator `{name}`"))?),
    };
    for i in 0..args.trials {
        let config = args.timing.run_config(args.seed + i);
        let mut source: Box<dyn CommandSource> = match &script {
            Some(s) => Box::new(ScriptedOperator::new(
                s.clone(),
                &scenario,
                &coupling,
                config.rate_hz,
                config.seed,
            )?),
            None => Box::new(IdleSource),
        };
        let log = run_trial(&scenario, &coupling, &config, source.as_mut())?;
        println!("{}", describe(&log));
        if let Some(out) = &args.out {
            let path = if args.trials > 1 {
                out.join(format!("{}.ndjson", log.header.trial_id))
            } else {
                out.clone()
            };
            record_log(&log, &path).with_context(|| format!("writing {}", path.display()))?;
            log::info!("log written to {}", path.display());
        }
    }
    Ok(())
}

fn run_remote(args: &RunArgs, scenario: Scenario, coupling: CouplingConfig, dir: Option<&Path>) -> Result<()> {
    let staging = tempdir_near(args.out.as_deref())?;
    let mut config = ServeConfig::new(scenario, coupling);
    config.run = args.timing.run_config(args.seed);
    config.out_dir = Some(staging.clone());
    config.config_dir = dir.map(Path::to_path_buf);
    let server = Server::bind(args.listen, config)?;
    log::info!("waiting for an operator on ws://{}", server.local_addr()?);
    let trials = server.run_once()?;
    for t in &trials {
        println!(
            "{}: {} after {:.2} s, {}/{} units",
            t.trial_id, t.outcome.reason, t.outcome.time_s, t.outcome.units_completed, t.outcome.units_total
        );
    }
    if let (Some(out), Some(first)) = (&args.out, trials.first()) {
        if trials.len() > 1 {
            log::warn!(
                "the client ran {} trials; keeping the first in {}",
                trials.len(),
                out.display()
            );
        }
        if let Some(src) = &first.log_path {
            record_log(&replay_log(src)?, out)?;
        }
    }
    std::fs::remove_dir_all(&staging).ok();
    Ok(())
}

/// A fresh scratch directory next to the requested output.
fn tempdir_near(out: Option<&Path>) -> Result<PathBuf> {
    let base = out
        .and_then(Path::parent)
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(std::env::temp_dir, Path::to_path_buf);
    let dir = base.join(format!(".telesim-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn serve(args: ServeArgs, dir: Option<&Path>) -> Result<()> {
    let mut config = ServeConfig::new(
        Scenario::resolve(&args.scenario, dir)?,
        CouplingConfig::resolve(&args.coupling, dir)?,
    );
    config.run = args.timing.run_config(0);
    config.frame_rate_hz = args.frame_rate;
    config.out_dir = Some(args.out_dir);
    config.config_dir = dir.map(Path::to_path_buf);
    let server = Server::bind((args.host.as_str(), args.port), config)?;
    log::info!("listening on ws://{}", server.local_addr()?);
    server.run()?;
    Ok(())
}

fn collect_logs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "ndjson"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no trial logs found");
    }
    Ok(files)
}

fn analyze(args: AnalyzeArgs, dir: Option<&Path>) -> Result<()> {
    let mut logs = Vec::new();
    for path in collect_logs(&args.logs)? {
        logs.push(replay_log(&path).with_context(|| format!("reading {}", path.display()))?);
    }
    let report = build_report(&logs, args.dispersion_mode)?;
    print!("{}", report.to_table());
    if args.stages {
        println!();
        println!(
            "{:<36} {:>8} {:>8} {:>8} {:>8}",
            "Trial", "Coarse", "Fine", "Action", "Place"
        );
        for log in logs.iter().filter(|l| l.is_ended()) {
            let scenario = Scenario::resolve(&log.header.scenario, dir)
                .with_context(|| format!("scenario of {}", log.header.trial_id))?;
            let s = segment_stages(log, &scenario.task)?;
            println!(
                "{:<36} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                log.header.trial_id,
                s.time_in(Stage::Coarse),
                s.time_in(Stage::Fine),
                s.time_in(Stage::Action),
                s.time_in(Stage::Place)
            );
        }
    }
    if let Some(out) = &args.report_out {
        std::fs::write(out, report.to_json()).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn list() {
    println!("scenarios: {}", BUNDLED_SCENARIOS.map(|(n, _)| n).join(", "));
    println!("couplings: {}", BUNDLED_PROFILES.join(", "));
    println!(
        "operators: idle, remote, {}",
        BUNDLED_SCRIPTS.map(|(n, _)| n).join(", ")
    );
}
