//! Command-line experiment runner for the entrolab library.
//!
//! One invocation runs one experiment from a flat INI-style config and writes
//! three files into the output directory: `trace.csv` (17 significant digits,
//! `.` decimal separator), `audit.json` (sorted keys, so reruns are
//! byte-identical once the timestamp is suppressed), and `plotspec.txt`
//! (names the trace columns worth plotting). Exit codes: 0 on success, 1 on
//! i/o failure, 2 on configuration errors, 3 on violations while stepping.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod experiments;

use config::Config;
use experiments::{list_models, run, Kind, Outputs, RunContext, RunError};

#[derive(Parser)]
#[command(
    name = "entrolab",
    version,
    about = "Entropy and free-energy experiments: configs in, deterministic traces out"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List every model identifier the config files accept.
    ListModels,
    /// Insulated heat conduction; audits the entropy balance.
    HeatClosed(RunArgs),
    /// Heat conduction against one bath; audits the free-energy decay.
    HeatBath(RunArgs),
    /// Boundary-driven nonlinear diffusion; audits the rate-functional decay.
    ZrpPde(RunArgs),
    /// Nonlinear diffusion with a constant drift field.
    ZrpPdeDrift(RunArgs),
    /// Space-homogeneous BGK relaxation; audits the entropy growth.
    Bgk(RunArgs),
    /// Event-driven simulation of the boundary-driven lattice gas.
    ZrpMc(RunArgs),
    /// Compare the empirical profile rate against the density functional.
    LdfCheck(RunArgs),
    /// Evaluate the pointwise functionals of one energy profile.
    FunctionalEval(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Override the seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory receiving trace.csv, audit.json, and plotspec.txt.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Omit the generated_at stamp so reruns are byte-identical.
    #[arg(long)]
    no_timestamp: bool,
    /// Rerun at 2x and 4x resolution and report convergence orders.
    #[arg(long)]
    resolution_sweep: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::ListModels => {
            print!("{}", list_models());
            return ExitCode::SUCCESS;
        }
        Command::HeatClosed(a) => (Kind::HeatClosed, a),
        Command::HeatBath(a) => (Kind::HeatBath, a),
        Command::ZrpPde(a) => (Kind::ZrpPde, a),
        Command::ZrpPdeDrift(a) => (Kind::ZrpPdeDrift, a),
        Command::Bgk(a) => (Kind::Bgk, a),
        Command::ZrpMc(a) => (Kind::ZrpMc, a),
        Command::LdfCheck(a) => (Kind::LdfCheck, a),
        Command::FunctionalEval(a) => (Kind::FunctionalEval, a),
    };
    match execute(kind, &args) {
        Ok(rows) => {
            println!(
                "{}: wrote trace.csv ({rows} rows), audit.json, plotspec.txt",
                kind.name()
            );
            ExitCode::SUCCESS
        }
        Err(MainError::Io(msg)) => {
            eprintln!("i/o error: {msg}");
            ExitCode::from(1)
        }
        Err(MainError::Run(RunError::Config(e))) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(MainError::Run(RunError::Runtime(msg))) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}

enum MainError {
    Run(RunError),
    Io(String),
}

impl From<RunError> for MainError {
    fn from(e: RunError) -> Self {
        MainError::Run(e)
    }
}

fn execute(kind: Kind, args: &RunArgs) -> Result<usize, MainError> {
    let cfg = Config::load(&args.config).map_err(RunError::Config)?;
    let ctx = RunContext {
        seed_override: args.seed,
        resolution_sweep: args.resolution_sweep,
    };
    let mut out = run(kind, &cfg, &ctx)?;
    if !args.no_timestamp {
        if let serde_json::Value::Object(map) = &mut out.audit {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            map.insert("generated_at".into(), serde_json::json!(now));
        }
    }
    write_outputs(&out, &args.out).map_err(|e| MainError::Io(e.to_string()))?;
    Ok(out.rows.len())
}

fn write_outputs(out: &Outputs, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut csv = String::with_capacity(64 * (out.rows.len() + 1));
    csv.push_str(&out.columns.join(","));
    csv.push('\n');
    for row in &out.rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    std::fs::write(dir.join("trace.csv"), csv)?;
    let mut report = serde_json::to_string_pretty(&out.audit).expect("audit is a finite tree");
    report.push('\n');
    std::fs::write(dir.join("audit.json"), report)?;
    std::fs::write(dir.join("plotspec.txt"), &out.plot)?;
    Ok(())
}
