//! `sim`: headless batches, replay, metrics, calibration and the session
//! server. With `--server URL` the batch-style subcommands run remotely.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hubsim_client::{Client, ClientError};
use hubsim_core::api::CalibrateRequest;
use hubsim_core::batch::{
    calibrate, run_batch, run_trial, BatchSpec, CalibrationCell, CalibrationGrid, CalibrationTargets, PolicySpec,
};
use hubsim_core::eventlog::EventLog;
use hubsim_core::metrics::{compute_report, difficulty_matches, MetricsReport, Visualization};
use hubsim_core::replay::{compare, replay_trial, ReplayReport};
use hubsim_core::{Difficulty, DynamicsParams, Error, ModelKind};
use hubsim_server::ServerConfig;

#[derive(Parser)]
#[command(name = "sim", version, about = "Hub-based collective decision simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a batch of headless trials.
    Run(RunArgs),
    /// Re-simulate a log and report divergences and metrics.
    Replay(ReplayArgs),
    /// Compute the metrics report of one or more logs.
    Metrics(MetricsArgs),
    /// Grid-search dynamics parameters against the M2Sim targets.
    Calibrate(CalibrateArgs),
    /// Start the session server.
    Serve(ServeArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value = "m2sim")]
    model: ModelKind,
    #[arg(long, default_value = "easy")]
    difficulty: Difficulty,
    #[arg(long, default_value_t = 1)]
    trials: u32,
    /// Seed of the first trial; trial i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Dynamics parameters as TOML.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Operator policy file, or `oracle-assist`.
    #[arg(long)]
    policy: Option<String>,
    #[arg(long, default_value = "ia")]
    view: Visualization,
    /// Directory for per-trial logs and the batch report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run every trial twice and fail if the logs differ.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    server: Option<String>,
}

#[derive(Args)]
struct ReplayArgs {
    log: PathBuf,
    #[arg(long)]
    server: Option<String>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(required = true)]
    logs: Vec<PathBuf>,
    /// Only report logs of this difficulty.
    #[arg(long)]
    difficulty: Option<Difficulty>,
    #[arg(long)]
    server: Option<String>,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Trials per difficulty per grid cell.
    #[arg(long, default_value_t = 20)]
    trials: u32,
    #[arg(long, default_value_t = 1000)]
    seed: u64,
    /// Base parameters; grid axes override their fields.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Writes the best cell's parameters to `<out>/params.toml`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    server: Option<String>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value = "ia")]
    view: Visualization,
    /// Sim seconds per wall-clock second.
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
}

enum Failure {
    Config(String),
    Determinism(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Failure {
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::Generation(_) => Failure::Config(e.to_string()),
            Error::Determinism { .. } => Failure::Determinism(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

impl From<ClientError> for Failure {
    fn from(e: ClientError) -> Failure {
        match &e {
            ClientError::Api { body, .. } if matches!(body.kind.as_str(), "config" | "parse" | "generation") => {
                Failure::Config(e.to_string())
            }
            ClientError::Api { body, .. } if body.kind == "determinism" => Failure::Determinism(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Failure {
        Failure::Other(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

fn read_config(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_params(path: Option<&Path>) -> Result<DynamicsParams, Failure> {
    let Some(path) = path else { return Ok(DynamicsParams::default()) };
    let p = DynamicsParams::from_toml_str(&read_config(path)?)?;
    p.validate()?;
    Ok(p)
}

fn runtime() -> tokio::runtime::Runtime {
    tokio::runtime::Runtime::new().expect("tokio runtime")
}

fn run(a: RunArgs) -> Outcome {
    let mut spec = BatchSpec::new(a.model, a.difficulty, a.trials, a.seed);
    spec.params = load_params(a.params.as_deref())?;
    spec.view = a.view;
    spec.policy = match a.policy.as_deref() {
        None => PolicySpec::None,
        Some("oracle-assist") => PolicySpec::OracleAssist,
        Some(path) => PolicySpec::Scripted(read_config(Path::new(path))?),
    };
    spec.validate()?;
    spec.policy.build()?;

    let text = match &a.server {
        Some(url) => runtime().block_on(Client::new(url).batch(&spec))?.metrics,
        None => {
            let report = run_batch(&spec, a.out.as_deref())?;
            if a.verify {
                verify(&spec)?;
            }
            report.to_metrics().to_text()
        }
    };
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), &text)?;
    }
    print!("{}", MetricsReport::parse(&text)?.to_table());
    Ok(())
}

fn verify(spec: &BatchSpec) -> Outcome {
    for i in 0..spec.trials {
        let a = run_trial(spec.header(i)?, spec.policy.build()?)?;
        let b = run_trial(spec.header(i)?, spec.policy.build()?)?;
        let report = compare(&a.log.records, &b.log.records);
        if !report.is_clean() || a.log.records.len() != b.log.records.len() {
            let seq = report.first_divergent_seq.unwrap_or(a.log.records.len().min(b.log.records.len()) as u64);
            return Err(Failure::Determinism(format!("trial seed {}: runs diverge at seq {seq}", a.header().seed)));
        }
    }
    Ok(())
}

fn print_replay(report: &ReplayReport, metrics: &str, metrics_match: bool) -> Outcome {
    println!("logged={} replayed={} divergences={}", report.logged, report.replayed, report.divergences);
    print!("{}", MetricsReport::parse(metrics)?.to_table());
    if let Some(seq) = report.first_divergent_seq {
        return Err(Failure::Determinism(format!("first divergent record at seq {seq}")));
    }
    if !report.is_clean() {
        return Err(Failure::Determinism("replay diverged".into()));
    }
    if !metrics_match {
        return Err(Failure::Determinism("replayed metrics differ from the logged run".into()));
    }
    Ok(())
}

fn replay_cmd(a: ReplayArgs) -> Outcome {
    let text = read(&a.log)?;
    if let Some(url) = &a.server {
        let r = runtime().block_on(Client::new(url).replay(text))?;
        return print_replay(&r.report, &r.metrics, r.metrics_match);
    }
    let log = EventLog::parse(&text)?;
    let again = replay_trial(&log)?;
    let report = compare(&log.records, &again.log.records);
    let metrics = compute_report(&again.log).to_text();
    let matches = metrics == compute_report(&log).to_text();
    print_replay(&report, &metrics, matches)
}

fn metrics_cmd(a: MetricsArgs) -> Outcome {
    let client = a.server.as_ref().map(|u| (runtime(), Client::new(u)));
    let mut out = String::new();
    for path in &a.logs {
        let text = read(path)?;
        let log = EventLog::parse(&text)?;
        if !difficulty_matches(&log, a.difficulty) {
            continue;
        }
        let report = match &client {
            Some((rt, c)) => rt.block_on(c.metrics(text))?,
            None => compute_report(&log).to_text(),
        };
        if a.logs.len() > 1 {
            let _ = writeln!(out, "# {}", path.display());
        }
        out.push_str(&report);
    }
    print!("{out}");
    Ok(())
}

fn print_cells(cells: &[CalibrationCell]) {
    println!(
        "{:>9} {:>9} {:>9} {:>6} {:>9} {:>9} {:>9} {:>9}",
        "discovery", "recruit", "cross", "abandon", "easy_min", "hard_min", "success", "error"
    );
    for c in cells {
        let p = &c.params;
        println!(
            "{:>9.3} {:>9.3} {:>9.3} {:>6.3} {:>9.3} {:>9.3} {:>9.2} {:>9.3}",
            p.discovery_rate,
            p.recruit_rate,
            p.cross_inhibition,
            p.abandon_rate,
            c.easy_minutes,
            c.hard_minutes,
            c.success_pct,
            c.error
        );
    }
}

fn calibrate_cmd(a: CalibrateArgs) -> Outcome {
    if a.trials == 0 {
        return Err(Failure::Config("calibration needs at least one trial per cell".into()));
    }
    let base = load_params(a.params.as_deref())?;
    let grid = CalibrationGrid::coarse();
    let targets = CalibrationTargets::default();
    let cells = match &a.server {
        Some(url) => {
            let req = CalibrateRequest { trials: a.trials, seed_base: a.seed, base, grid, targets };
            runtime().block_on(Client::new(url).calibrate(&req))?.cells
        }
        None => calibrate(&base, &grid, a.trials, a.seed, &targets)?,
    };
    print_cells(&cells);
    if let (Some(dir), Some(best)) = (&a.out, cells.first()) {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("params.toml"), best.params.to_toml_string())?;
    }
    Ok(())
}

fn serve(a: ServeArgs) -> Outcome {
    if !(a.speed.is_finite() && a.speed > 0.0) {
        return Err(Failure::Config(format!("speed must be positive, got {}", a.speed)));
    }
    let addr: SocketAddr =
        format!("{}:{}", a.host, a.port).parse().map_err(|e| Failure::Config(format!("bad listen address: {e}")))?;
    tracing_subscriber::fmt().with_writer(std::io::stderr).init();
    runtime().block_on(async {
        let (local, server) = hubsim_server::bind(addr, ServerConfig { view: a.view, speed: a.speed }).await?;
        println!("listening on http://{local}");
        server.await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Cmd::Run(a) => run(a),
        Cmd::Replay(a) => replay_cmd(a),
        Cmd::Metrics(a) => metrics_cmd(a),
        Cmd::Calibrate(a) => calibrate_cmd(a),
        Cmd::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Determinism(m)) => {
            eprintln!("determinism violation: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
