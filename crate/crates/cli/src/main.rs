use std::fmt::Debug;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use thiserror::Error;
use wvlab_core::protocol::{run_conditional, sample_shots, ProtocolError};
use wvlab_core::Tolerances;
use wvlab_net::session::SessionConfig;
use wvlab_net::{run_session, NetError, Role};

mod report;
mod scenario_file;
mod verify;

use report::{grid_deviation, Report, ReportContext};
use scenario_file::{ResourceSpec, ScenarioFile};

const DEFAULT_SHOTS: u64 = 100_000;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed: {}", .0.join(", "))]
    Verify(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("physics error: {0}")]
    Physics(String),

    #[error("network error: {0}")]
    Network(String),

    #[error("i/o error: {0}")]
    Io(String),
}

fn variant_name(e: &impl Debug) -> String {
    format!("{e:?}")
        .chars()
        .take_while(|c| c.is_alphanumeric() || *c == '_')
        .collect()
}

impl CliError {
    /// Names the failing module and error variant, e.g. `weakvalues::OrthogonalPostselection`.
    pub fn physics(e: &ProtocolError) -> Self {
        let (module, variant) = match e {
            ProtocolError::WeakValue(w) => ("weakvalues", variant_name(w)),
            ProtocolError::Pointer(p) => ("pointer", variant_name(p)),
            ProtocolError::Resource(r) => ("resources", variant_name(r)),
            ProtocolError::QMath(q) => ("qmath", variant_name(q)),
            other => ("protocol", variant_name(other)),
        };
        CliError::Physics(format!("{module}::{variant}: {e}"))
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Parse(_) | CliError::Io(_) => 2,
            CliError::Physics(_) => 3,
            CliError::Network(_) => 4,
        }
    }
}

impl From<NetError> for CliError {
    fn from(e: NetError) -> Self {
        match e {
            NetError::Protocol(p) => CliError::physics(&p),
            other => CliError::Network(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "wvlab",
    version,
    about = "Weak values with remote pre- and postselection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    Conditional,
    Sample,
    Sweep,
}

impl Mode {
    fn as_str(self) -> &'static str {
        match self {
            Mode::Conditional => "conditional",
            Mode::Sample => "sample",
            Mode::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RoleArg {
    Alice,
    Bob,
}

#[derive(Subcommand)]
enum Command {
    /// Run the identity and property checks
    Verify {
        #[arg(long, value_enum, default_value = "all")]
        suite: verify::Suite,
        /// Write the JSON check report here
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, hide = true)]
        inject_fault: Vec<verify::Fault>,
    },
    /// Run a scenario file
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value = "conditional")]
        mode: Mode,
        /// Report path (stdout when absent)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Sweep table path (defaults to the report path with a .csv extension)
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        shots: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the Werner mixing parameter of the scenario
        #[arg(long)]
        werner_p: Option<f64>,
    },
    /// Run one side of the two-process session
    Netdemo {
        #[arg(long, value_enum)]
        role: RoleArg,
        /// host:port Alice listens on and Bob connects to
        #[arg(long)]
        endpoint: String,
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        shots: Option<u64>,
        /// Per-message timeout
        #[arg(long, default_value_t = 10_000)]
        timeout_ms: u64,
        /// Transcript path
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn tolerances() -> Result<Tolerances, CliError> {
    match std::env::var("WVLAB_TOL") {
        Ok(spec) => Tolerances::DEFAULT
            .with_overrides(&spec)
            .map_err(|e| CliError::Parse(format!("WVLAB_TOL: {e}"))),
        Err(_) => Ok(Tolerances::DEFAULT),
    }
}

fn write_out(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn cmd_verify(
    suite: verify::Suite,
    out: Option<PathBuf>,
    faults: &[verify::Fault],
) -> Result<(), CliError> {
    let checks = verify::run(suite, faults);
    for c in &checks {
        println!(
            "{} {:<32} max_error={:.3e} tolerance={:.1e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.max_error,
            c.tolerance
        );
    }
    if let Some(path) = out {
        write_out(
            &path,
            &serde_json::to_string_pretty(&checks).expect("checks serialize"),
        )?;
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| c.name.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(failed))
    }
}

fn load(path: &Path, werner_p: Option<f64>) -> Result<ScenarioFile, CliError> {
    let mut file = ScenarioFile::load(path)?;
    if let Some(p) = werner_p {
        match &mut file.resource {
            ResourceSpec::Werner { p: old } => *old = p,
            _ => return Err(CliError::Parse("--werner-p needs a werner resource".into())),
        }
    }
    Ok(file)
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    path: &Path,
    mode: Mode,
    out: Option<PathBuf>,
    csv: Option<PathBuf>,
    shots: Option<u64>,
    seed: Option<u64>,
    werner_p: Option<f64>,
) -> Result<(), CliError> {
    let tol = tolerances()?;
    let loaded = load(path, werner_p)?.into_loaded(&tol)?;
    let s = &loaded.scenario;
    let csv_path = match (mode, &csv, &out) {
        (Mode::Sweep, Some(c), _) => Some(c.clone()),
        (Mode::Sweep, None, Some(o)) => Some(o.with_extension("csv")),
        (Mode::Sweep, None, None) => {
            return Err(CliError::Parse(
                "sweep mode needs --out or --csv for its table".into(),
            ))
        }
        _ => None,
    };
    let seed = seed.or(loaded.file.seed).unwrap_or(0);
    let res = match mode {
        Mode::Conditional | Mode::Sweep => run_conditional(s),
        Mode::Sample => sample_shots(
            s,
            shots.or(loaded.file.shots).unwrap_or(DEFAULT_SHOTS),
            seed,
        ),
    }
    .map_err(|e| CliError::physics(&e))?;
    let ctx = ReportContext {
        name: loaded.file.name.as_deref().unwrap_or(""),
        hash: &loaded.hash,
        mode: mode.as_str(),
        seed,
        tolerances: &tol,
    };
    let mut report = Report::new(&ctx, s, &res);
    if let (Some(grid), false) = (loaded.file.grid(), mode == Mode::Sample) {
        report.grid_max_deviation = Some(grid_deviation(s, &grid, &s.sweep())?);
    }
    match &out {
        Some(p) => write_out(p, &report.to_json())?,
        None => println!("{}", report.to_json()),
    }
    if let Some(p) = csv_path {
        let f = fs::File::create(&p)
            .map_err(|e| CliError::Io(format!("cannot write {}: {e}", p.display())))?;
        report.write_csv(f)?;
    }
    Ok(())
}

fn cmd_netdemo(
    role: RoleArg,
    endpoint: &str,
    path: &Path,
    seed: Option<u64>,
    shots: Option<u64>,
    timeout_ms: u64,
    out: Option<PathBuf>,
) -> Result<(), CliError> {
    let tol = tolerances()?;
    let loaded = load(path, None)?.into_loaded(&tol)?;
    let seed = seed.or(loaded.file.seed).unwrap_or(0);
    let shots = shots.or(loaded.file.shots).unwrap_or(DEFAULT_SHOTS);
    let mut cfg = SessionConfig::new(loaded.scenario.clone(), loaded.hash.clone(), shots, seed);
    cfg.timeout = Duration::from_millis(timeout_ms);
    cfg.transcript = out;
    let role = match role {
        RoleArg::Alice => Role::Alice,
        RoleArg::Bob => Role::Bob,
    };
    let outcome = run_session(role, endpoint, &cfg)?;
    let ctx = ReportContext {
        name: loaded.file.name.as_deref().unwrap_or(""),
        hash: &loaded.hash,
        mode: "sample",
        seed,
        tolerances: &tol,
    };
    println!(
        "{}",
        Report::new(&ctx, &loaded.scenario, &outcome.result).to_json()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Verify {
            suite,
            out,
            inject_fault,
        } => cmd_verify(suite, out, &inject_fault),
        Command::Run {
            scenario,
            mode,
            out,
            csv,
            shots,
            seed,
            werner_p,
        } => cmd_run(&scenario, mode, out, csv, shots, seed, werner_p),
        Command::Netdemo {
            role,
            endpoint,
            scenario,
            seed,
            shots,
            timeout_ms,
            out,
        } => cmd_netdemo(role, &endpoint, &scenario, seed, shots, timeout_ms, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wvlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
